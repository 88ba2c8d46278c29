"""Atoms, boolean formulas and conjunctions over polynomial constraints.

Atoms are kept in integer normal form ``p = 0`` or ``p >= 0``.  Strict and
reversed comparisons are rewritten on construction, which is exact because
all program variables range over the integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .poly import ONE, Poly

EQ = "eq"
GE = "ge"

_INT64_SAFE = 2 ** 62


def _integral(p: Poly) -> Poly:
    return p.clear_denominators()


@dataclass(frozen=True)
class Atom:
    poly: Poly
    rel: str

    @staticmethod
    def ge(p: Poly) -> "Atom":
        p = _integral(p)
        g = 0
        for m, c in p.items():
            if m != ONE:
                g = math.gcd(g, c)
        if g > 1:
            # floor division on the constant tightens p >= 0 exactly over Z
            p = Poly({m: c // g for m, c in p.items()})
        return Atom(p, GE)

    @staticmethod
    def eq(p: Poly) -> "Atom":
        p = _integral(p)
        g = p.content()
        if g > 1:
            p = Poly({m: c // g for m, c in p.items()})
        if not p.is_zero() and p.leading()[1] < 0:
            p = -p
        return Atom(p, EQ)

    @staticmethod
    def gt(p: Poly) -> "Atom":
        return Atom.ge(_integral(p) - 1)

    def is_const(self) -> bool:
        return self.poly.is_constant()

    def const_value(self) -> bool:
        c = self.poly.constant
        return c == 0 if self.rel == EQ else c >= 0

    def negate(self) -> "Formula":
        if self.rel == GE:
            return Atom.ge(-self.poly - 1)
        return Or((Atom.ge(self.poly - 1), Atom.ge(-self.poly - 1)))

    def holds(self, env: Mapping[str, int]) -> bool:
        v = self.poly.evaluate(env)
        return v == 0 if self.rel == EQ else v >= 0

    def variables(self) -> set:
        return self.poly.variables()

    def subst(self, mapping) -> "Atom":
        p = self.poly.subst(mapping)
        return Atom.eq(p) if self.rel == EQ else Atom.ge(p)

    def __str__(self) -> str:
        return f"{self.poly} {'==' if self.rel == EQ else '>='} 0"

    def __repr__(self) -> str:
        return f"Atom({str(self)!r})"


@dataclass(frozen=True)
class And:
    args: tuple

    def __str__(self):
        return "(" + " && ".join(str(a) for a in self.args) + ")"


@dataclass(frozen=True)
class Or:
    args: tuple

    def __str__(self):
        return "(" + " || ".join(str(a) for a in self.args) + ")"


@dataclass(frozen=True)
class Not:
    arg: object

    def __str__(self):
        return f"!({self.arg})"


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)

Formula = object  # Atom | And | Or | Not | Const


def conj(*fs) -> Formula:
    out = []
    for f in fs:
        if isinstance(f, Atom) and f.is_const():
            f = Const(f.const_value())
        if isinstance(f, Const):
            if not f.value:
                return FALSE
            continue
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else And(tuple(out))


def disj(*fs) -> Formula:
    out = []
    for f in fs:
        if isinstance(f, Atom) and f.is_const():
            f = Const(f.const_value())
        if isinstance(f, Const):
            if f.value:
                return TRUE
            continue
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return FALSE
    return out[0] if len(out) == 1 else Or(tuple(out))


def negate(f: Formula) -> Formula:
    return nnf(Not(f))


def nnf(f: Formula, neg: bool = False) -> Formula:
    """Negation normal form with negations absorbed into atoms."""
    if isinstance(f, Atom):
        if f.is_const():
            return Const(f.const_value() != neg)
        return nnf(f.negate()) if neg else f
    if isinstance(f, Const):
        return Const(f.value != neg)
    if isinstance(f, Not):
        return nnf(f.arg, not neg)
    if isinstance(f, And):
        parts = [nnf(a, neg) for a in f.args]
        return disj(*parts) if neg else conj(*parts)
    if isinstance(f, Or):
        parts = [nnf(a, neg) for a in f.args]
        return conj(*parts) if neg else disj(*parts)
    raise TypeError(f"not a formula: {f!r}")


def atoms_of(f: Formula) -> list:
    if isinstance(f, Atom):
        return [f]
    if isinstance(f, Const):
        return []
    if isinstance(f, Not):
        return atoms_of(f.arg)
    out = []
    for a in f.args:
        out.extend(atoms_of(a))
    return out


def variables_of(f: Formula) -> set:
    out = set()
    for a in atoms_of(f):
        out |= a.variables()
    return out


class FormulaTooLarge(Exception):
    pass


def dnf(f: Formula, limit: int = 256) -> list:
    """Disjunctive normal form as a list of atom lists ([] means true)."""
    f = nnf(f)
    if isinstance(f, Const):
        return [[]] if f.value else []
    if isinstance(f, Atom):
        return [[f]]
    if isinstance(f, Or):
        out = []
        for a in f.args:
            out.extend(dnf(a, limit))
            if len(out) > limit:
                raise FormulaTooLarge("dnf")
        return out
    # And
    acc = [[]]
    for a in f.args:
        nxt = []
        for left in acc:
            for right in dnf(a, limit):
                nxt.append(left + [x for x in right if x not in left])
                if len(nxt) > limit:
                    raise FormulaTooLarge("dnf")
        acc = nxt
    return acc


def cnf(f: Formula, limit: int = 256) -> list:
    """Conjunctive normal form as a list of clauses (atom lists)."""
    return [[x for x in _neg_clause(c)] for c in dnf(negate(f), limit)]


def _neg_clause(atoms):
    out = []
    for a in atoms:
        n = a.negate()
        out.extend(atoms_of(n))
    return out


def holds(f: Formula, env: Mapping[str, int]) -> bool:
    if isinstance(f, Atom):
        return f.holds(env)
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not holds(f.arg, env)
    if isinstance(f, And):
        return all(holds(a, env) for a in f.args)
    if isinstance(f, Or):
        return any(holds(a, env) for a in f.args)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------- vectorised

_CODE_CACHE: dict = {}


def _compiled(p: Poly):
    src = p.source()
    fn = _CODE_CACHE.get(src)
    if fn is None:
        names = sorted(p.variables())
        fn = eval(f"lambda {', '.join(names)}: {src}" if names else f"lambda: {src}",
                  {"Fraction": Fraction})
        fn = (fn, tuple(names))
        _CODE_CACHE[src] = fn
    return fn


def eval_poly_np(p: Poly, cols: Mapping[str, np.ndarray], box) -> np.ndarray:
    """Evaluate ``p`` pointwise on column arrays whose entries lie in
    [-box, box]; falls back to object arrays when int64 could overflow."""
    fn, names = _compiled(p)
    n = len(next(iter(cols.values()))) if cols else 1
    if p.abs_bound(box) >= _INT64_SAFE or not p.is_integral():
        args = [cols[v].astype(object) for v in names]
    else:
        args = [cols[v] for v in names]
    out = fn(*args)
    if np.isscalar(out) or not isinstance(out, np.ndarray):
        out = np.full(n, out, dtype=object if not isinstance(out, (int, np.integer)) else np.int64)
    return out


def holds_np(f: Formula, cols: Mapping[str, np.ndarray], box, n: int) -> np.ndarray:
    if isinstance(f, Atom):
        v = eval_poly_np(f.poly, cols, box)
        return np.asarray(v == 0 if f.rel == EQ else v >= 0, dtype=bool)
    if isinstance(f, Const):
        return np.full(n, f.value, dtype=bool)
    if isinstance(f, Not):
        return ~holds_np(f.arg, cols, box, n)
    if isinstance(f, And):
        out = np.ones(n, dtype=bool)
        for a in f.args:
            out &= holds_np(a, cols, box, n)
            if not out.any():
                break
        return out
    if isinstance(f, Or):
        out = np.zeros(n, dtype=bool)
        for a in f.args:
            out |= holds_np(a, cols, box, n)
        return out
    raise TypeError(f"not a formula: {f!r}")


def violation(f: Formula, env: Mapping[str, int]) -> int:
    """Non-negative distance-like score, zero iff ``f`` holds at ``env``."""
    if isinstance(f, Atom):
        v = f.poly.evaluate(env)
        if f.rel == EQ:
            return abs(v)
        return max(0, -v)
    if isinstance(f, Const):
        return 0 if f.value else 1
    if isinstance(f, And):
        return sum(violation(a, env) for a in f.args)
    if isinstance(f, Or):
        return min(violation(a, env) for a in f.args)
    if isinstance(f, Not):
        return violation(negate(f.arg), env)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------- conjunctions


class Conjunction:
    """Ordered, duplicate-free list of atoms; the empty conjunction is true."""

    __slots__ = ("atoms", "_key")

    def __init__(self, atoms: Iterable[Atom] = ()):
        out = []
        for a in atoms:
            if a.is_const() and a.const_value():
                continue
            if a not in out:
                out.append(a)
        self.atoms = tuple(out)
        self._key = frozenset(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def __eq__(self, other):
        return isinstance(other, Conjunction) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def extend(self, atoms: Sequence[Atom]) -> "Conjunction":
        return Conjunction(self.atoms + tuple(atoms))

    def formula(self) -> Formula:
        return conj(*self.atoms)

    def holds(self, env) -> bool:
        return all(a.holds(env) for a in self.atoms)

    def variables(self) -> set:
        out = set()
        for a in self.atoms:
            out |= a.variables()
        return out

    def is_false(self) -> bool:
        return any(a.is_const() and not a.const_value() for a in self.atoms)

    def __str__(self):
        return " && ".join(str(a) for a in self.atoms) if self.atoms else "true"

    def __repr__(self):
        return f"Conjunction({str(self)!r})"
