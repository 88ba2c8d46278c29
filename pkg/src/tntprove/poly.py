"""Exact multivariate polynomials over program variables.

A monomial is a tuple of ``(var, exponent)`` pairs sorted by variable name;
the empty tuple is the constant monomial.  Coefficients are ``int`` or
``Fraction`` and never zero.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

Number = Union[int, Fraction]
Monomial = Tuple[Tuple[str, int], ...]

ONE: Monomial = ()


class TermExplosion(Exception):
    pass


def _norm(c: Number) -> Number:
    if isinstance(c, Fraction) and c.denominator == 1:
        return c.numerator
    return c


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


def mono_vars(m: Monomial) -> Tuple[str, ...]:
    return tuple(v for v, _ in m)


def mono_key(m: Monomial, order: Sequence[str]):
    """Graded-lex sort key: degree first, then exponents of the most
    significant variable (last in ``order``) downwards."""
    d = dict(m)
    return (mono_degree(m),) + tuple(d.get(v, 0) for v in reversed(order))


def mono_str(m: Monomial) -> str:
    if not m:
        return "1"
    parts = []
    for v, e in m:
        parts.extend([v] * e)
    return "*".join(parts)


def gen_monomials(variables: Sequence[str], max_degree: int, limit: int = 2000) -> list:
    """All monomials of degree 0..max_degree, graded-lex ascending."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    count = math.comb(len(variables) + max_degree, max_degree)
    if count > limit:
        raise TermExplosion(f"{count} monomials over {len(variables)} vars at degree {max_degree}")
    out = [ONE]
    for d in range(1, max_degree + 1):
        for combo in combinations_with_replacement(sorted(variables), d):
            m: Dict[str, int] = {}
            for v in combo:
                m[v] = m.get(v, 0) + 1
            out.append(tuple(sorted(m.items())))
    out.sort(key=lambda m: mono_key(m, variables))
    return out


class Poly:
    """Immutable polynomial with exact coefficients."""

    __slots__ = ("_t", "_hash", "_src")

    def __init__(self, terms: Mapping[Monomial, Number] | None = None):
        t = {}
        if terms:
            for m, c in terms.items():
                c = _norm(c)
                if c != 0:
                    t[m] = c
        self._t = t
        self._hash = None
        self._src = None

    # construction helpers
    @staticmethod
    def const(c: Number) -> "Poly":
        return Poly({ONE: c})

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({((name, 1),): 1})

    @staticmethod
    def _raw(t: dict) -> "Poly":
        p = Poly.__new__(Poly)
        p._t = t
        p._hash = None
        p._src = None
        return p

    # inspection
    @property
    def terms(self) -> Dict[Monomial, Number]:
        return self._t

    def items(self):
        return self._t.items()

    def coeff(self, m: Monomial) -> Number:
        return self._t.get(m, 0)

    @property
    def constant(self) -> Number:
        return self._t.get(ONE, 0)

    def is_zero(self) -> bool:
        return not self._t

    def is_constant(self) -> bool:
        return not self._t or (len(self._t) == 1 and ONE in self._t)

    def degree(self) -> int:
        return max((mono_degree(m) for m in self._t), default=0)

    def variables(self) -> set:
        out = set()
        for m in self._t:
            out.update(mono_vars(m))
        return out

    def is_integral(self) -> bool:
        return all(isinstance(c, int) for c in self._t.values())

    def sorted_terms(self, order: Sequence[str] | None = None):
        order = order if order is not None else sorted(self.variables())
        return sorted(self._t.items(), key=lambda kv: mono_key(kv[0], order))

    def leading(self, order: Sequence[str] | None = None):
        ts = self.sorted_terms(order)
        return ts[-1] if ts else (ONE, 0)

    # arithmetic
    def __add__(self, other) -> "Poly":
        other = _coerce(other)
        t = dict(self._t)
        for m, c in other._t.items():
            n = _norm(t.get(m, 0) + c)
            if n == 0:
                t.pop(m, None)
            else:
                t[m] = n
        return Poly._raw(t)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw({m: -c for m, c in self._t.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Poly":
        return _coerce(other) - self

    def __mul__(self, other) -> "Poly":
        other = _coerce(other)
        t: Dict[Monomial, Number] = {}
        for m1, c1 in self._t.items():
            for m2, c2 in other._t.items():
                m = mono_mul(m1, m2)
                t[m] = t.get(m, 0) + c1 * c2
        return Poly(t)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def scale(self, c: Number) -> "Poly":
        if c == 0:
            return Poly()
        return Poly._raw({m: _norm(v * c) for m, v in self._t.items()})

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        return isinstance(other, Poly) and self._t == other._t

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._t.items()))
        return self._hash

    # evaluation / substitution
    def evaluate(self, env: Mapping[str, Number]) -> Number:
        total = 0
        for m, c in self._t.items():
            v = c
            for x, e in m:
                v = v * env[x] ** e
            total += v
        return _norm(total)

    def subst(self, mapping: Mapping[str, "Poly"]) -> "Poly":
        """Simultaneous substitution of variables by polynomials."""
        if not any(v in mapping for v in self.variables()):
            return self
        out = Poly()
        cache: Dict[Tuple[str, int], Poly] = {}
        for m, c in self._t.items():
            term = Poly.const(c)
            for x, e in m:
                if x in mapping:
                    key = (x, e)
                    if key not in cache:
                        cache[key] = mapping[x] ** e
                    term = term * cache[key]
                else:
                    term = term * Poly({((x, e),): 1})
            out = out + term
        return out

    def rename(self, mapping: Mapping[str, str]) -> "Poly":
        t = {}
        for m, c in self._t.items():
            nm = tuple(sorted((mapping.get(v, v), e) for v, e in m))
            t[nm] = c
        return Poly(t)

    def source(self) -> str:
        """A Python expression evaluating this polynomial (variables are
        looked up as bare names)."""
        if self._src is None:
            if not self._t:
                self._src = "0"
            else:
                parts = []
                for m, c in self.sorted_terms():
                    factors = []
                    for v, e in m:
                        factors.extend([v] * e)
                    c_src = repr(c) if isinstance(c, int) else f"Fraction({c.numerator}, {c.denominator})"
                    if factors:
                        body = "*".join(factors)
                        parts.append(body if c == 1 else f"({c_src})*{body}")
                    else:
                        parts.append(f"({c_src})")
                self._src = " + ".join(parts)
        return self._src

    def abs_bound(self, box: Number) -> Number:
        """Upper bound of |p| over the box [-box, box]^n."""
        return sum(abs(c) * box ** mono_degree(m) for m, c in self._t.items())

    def content(self) -> int:
        """gcd of the integer coefficients (0 for the zero polynomial)."""
        g = 0
        for c in self._t.values():
            g = math.gcd(g, int(c))
        return g

    def clear_denominators(self) -> "Poly":
        den = 1
        for c in self._t.values():
            if isinstance(c, Fraction):
                den = den * c.denominator // math.gcd(den, c.denominator)
        return self.scale(den) if den != 1 else self

    def to_str(self, order: Sequence[str] | None = None) -> str:
        if not self._t:
            return "0"
        out = ""
        for i, (m, c) in enumerate(reversed(self.sorted_terms(order))):
            neg = c < 0
            a = -c if neg else c
            body = mono_str(m)
            if m and a == 1:
                txt = body
            elif m:
                txt = f"{a}*{body}"
            else:
                txt = str(a)
            if i == 0:
                out = ("-" if neg else "") + txt
            else:
                out += (" - " if neg else " + ") + txt
        return out

    def __str__(self) -> str:
        return self.to_str()

    def __repr__(self) -> str:
        return f"Poly({self.to_str()!r})"


def _coerce(x) -> Poly:
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction)):
        return Poly.const(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Poly")


def linear_poly(coeffs: Mapping[str, Number], const: Number = 0) -> Poly:
    t = {((v, 1),): c for v, c in coeffs.items()}
    t[ONE] = const
    return Poly(t)


def monomial_values(monos: Sequence[Monomial], state: Mapping[str, int]) -> list:
    row = []
    for m in monos:
        v = 1
        for x, e in m:
            v *= state[x] ** e
        row.append(v)
    return row


def poly_from_vector(monos: Sequence[Monomial], vec: Iterable[Number]) -> Poly:
    return Poly({m: c for m, c in zip(monos, vec)})
