"""Dynamic invariant inference from loop snapshots.

Polynomial equalities come from the exact rational nullspace of the matrix of
monomial values; inequalities are interval and octagonal bounds read off the
observed extrema.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import List, Mapping, Optional, Sequence

import numpy as np

from .logic import Atom, Conjunction, holds_np
from .poly import (Poly, TermExplosion, gen_monomials, linear_poly, mono_degree, mono_key, mono_mul,
                   monomial_values, poly_from_vector)

gen_terms = gen_monomials

INTERVAL = "interval"
OCTAGONAL = "octagonal"


def _as_env(s) -> Mapping[str, int]:
    return s.env if hasattr(s, "env") else s


def rref(rows: List[List[Fraction]]) -> tuple:
    """Reduced row echelon form; returns (rows, pivot columns)."""
    M = [list(r) for r in rows]
    ncols = len(M[0]) if M else 0
    pivots, r = [], 0
    for c in range(ncols):
        p = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        inv = 1 / Fraction(M[r][c])
        M[r] = [v * inv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == len(M):
            break
    return M[:r], pivots


def nullspace(rows: Sequence[Sequence[int]], ncols: int) -> List[List[Fraction]]:
    """Basis of {u : rows . u = 0}, canonicalised to reduced echelon form so
    that the result depends only on the space, not on the input rows."""
    if not rows:
        basis = [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
        return basis
    R, piv = rref([[Fraction(v) for v in r] for r in rows])
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        u = [Fraction(0)] * ncols
        u[f] = Fraction(1)
        for i, pc in enumerate(piv):
            u[pc] = -R[i][f]
        basis.append(u)
    if not basis:
        return []
    B, _ = rref(basis)
    return B


def _coprime(vec: Sequence[Fraction]) -> List[int]:
    den = 1
    for v in vec:
        den = den * v.denominator // math.gcd(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return [v // g for v in ints] if g > 1 else ints


def adaptive_degree(nvars: int, nstates: int, max_degree: int) -> int:
    d = 1
    for cand in range(1, max_degree + 1):
        if math.comb(nvars + cand, cand) < nstates:
            d = cand
    return d


def _int_vectors(basis: Sequence[Sequence[Fraction]]) -> List[List[int]]:
    return [_coprime(u) for u in basis]


def _violators(data, vecs: List[List[int]], chosen: set, limit: int = 8) -> List[int]:
    """Indices of rows outside ``chosen`` on which some vector is non-zero."""
    if not vecs or not data:
        return []
    bound = max(abs(x) for row in data for x in row) * max(sum(abs(c) for c in u) for u in vecs)
    dtype = np.int64 if bound < 2 ** 62 else object
    M = np.array(data, dtype=dtype)
    U = np.array(vecs, dtype=dtype).T
    bad_rows = np.nonzero((M.dot(U) != 0).any(axis=1))[0]
    return [int(i) for i in bad_rows if int(i) not in chosen][:limit]


def _reduce(v: List[Fraction], I: List[List[Fraction]], piv: List[int]) -> List[Fraction]:
    v = list(v)
    for row, pc in zip(I, piv):
        f = v[pc]
        if f:
            v = [a - f * b for a, b in zip(v, row)]
    return v


def infer_equalities(states: Sequence, max_degree: int = 2, variables: Optional[Sequence[str]] = None,
                     adaptive: bool = False, seed: int = 0, reduce_ideal: bool = True) -> List[Atom]:
    """Polynomial equalities of degree <= max_degree holding on all states.

    Monomial columns are ordered most significant first (graded-lex with later
    variables more significant) and the basis is put in reduced echelon form,
    so the answer depends only on the data.  With ``reduce_ideal`` equalities
    that are monomial multiples of lower-degree ones are left out; the
    conjunction of the result is unchanged by this.
    """
    envs = [_as_env(s) for s in states]
    if not envs:
        return []
    if variables is None:
        variables = list(envs[0].keys())
    variables = list(variables)
    uniq = list(dict.fromkeys(tuple(e[v] for v in variables) for e in envs))
    if adaptive:
        max_degree = adaptive_degree(len(variables), len(uniq), max_degree)
    try:
        monos = gen_monomials(variables, max_degree)
    except TermExplosion:
        max_degree = 1
        monos = gen_monomials(variables, 1)
    monos = sorted(monos, key=lambda m: mono_key(m, variables), reverse=True)
    data = [monomial_values(monos, dict(zip(variables, u))) for u in uniq]
    limit = 3 * len(monos) + 10
    if len(data) <= limit:
        sample = list(range(len(data)))
    else:
        rng = random.Random(seed)
        sample = sorted(rng.sample(range(len(data)), limit))
    while True:
        basis = nullspace([data[i] for i in sample], len(monos))
        if not basis:
            return []
        bad = _violators(data, _int_vectors(basis), set(sample))
        if not bad:
            break
        sample = sorted(set(sample) | set(bad))
    if reduce_ideal and max_degree > 1:
        basis = _ideal_quotient(basis, monos)
    out = []
    for u in _int_vectors(basis):
        a = Atom.eq(poly_from_vector(monos, u))
        if not a.is_const():
            out.append(a)
    return out


def _ideal_quotient(basis, monos) -> List[List[Fraction]]:
    """Keep, degree by degree, only equalities not generated by monomial
    multiples of the ones already kept."""
    col = {m: i for i, m in enumerate(monos)}
    top = max(mono_degree(m) for m in monos)
    kept: List[List[Fraction]] = []
    for d in range(0, top + 1):
        # basis vectors supported on monomials of degree <= d
        layer = [u for u in basis if all(not u[i] or mono_degree(m) <= d for i, m in enumerate(monos))]
        gens = []
        for u in kept:
            du = max(mono_degree(monos[i]) for i, x in enumerate(u) if x)
            for m in monos:
                if mono_degree(m) + du > d:
                    continue
                v = [Fraction(0)] * len(monos)
                for i, x in enumerate(u):
                    if x:
                        v[col[mono_mul(m, monos[i])]] += x
                gens.append(v)
        I, piv = rref(gens) if gens else ([], [])
        rest = [r for r in (_reduce(u, I, piv) for u in layer) if any(r)]
        if rest:
            R, _ = rref(rest)
            kept.extend(R)
    return kept


def _term_polys(variables: Sequence[str], shape: str) -> List[Poly]:
    if shape == INTERVAL:
        return [Poly.var(v) for v in variables]
    out = []
    for i, a in enumerate(variables):
        for b in variables[i + 1:]:
            out.append(linear_poly({a: 1, b: 1}))
            out.append(linear_poly({a: 1, b: -1}))
    return out


def infer_inequalities(states: Sequence, shape: str = INTERVAL,
                       variables: Optional[Sequence[str]] = None,
                       truncated: Sequence = (), prune_box: bool = True) -> List[Atom]:
    """Bounds ``term - min >= 0`` and ``max - term >= 0`` from observed extrema.

    Terms constant on the data are skipped (equalities cover them).
    ``truncated`` lists (second-to-last, last) state pairs from runs cut off by
    the iteration bound; a bound first reached at such a cut-off point while
    the term is still changing is an artefact of truncation and is dropped.
    Octagonal bounds that follow from the interval box are also dropped when
    ``prune_box`` is set.
    """
    envs = [_as_env(s) for s in states]
    if not envs:
        return []
    if variables is None:
        variables = list(envs[0].keys())
    variables = list(variables)
    rows = list(dict.fromkeys(tuple(e[v] for v in variables) for e in envs))
    big = max(abs(x) for r in rows for x in r) >= 2 ** 60
    X = np.array(rows, dtype=object if big else np.int64)
    col = {v: i for i, v in enumerate(variables)}
    ivals = {v: (X[:, col[v]].min(), X[:, col[v]].max()) for v in variables}
    out = []
    for t in _term_polys(variables, shape):
        vals = sum(c * X[:, col[v]] for (((v, _),), c) in t.items())
        lo, hi = int(vals.min()), int(vals.max())
        if lo == hi:
            continue
        lo_ok = hi_ok = True
        for prev, last in truncated:
            a, b = t.evaluate(_as_env(prev)), t.evaluate(_as_env(last))
            if a != b and b == lo:
                lo_ok = False
            if a != b and b == hi:
                hi_ok = False
        if shape == OCTAGONAL and prune_box:
            box_lo = sum(c * (ivals[v][0] if c > 0 else ivals[v][1]) for (((v, _),), c) in t.items())
            box_hi = sum(c * (ivals[v][1] if c > 0 else ivals[v][0]) for (((v, _),), c) in t.items())
            lo_ok = lo_ok and lo > box_lo
            hi_ok = hi_ok and hi < box_hi
        if lo_ok:
            out.append(Atom.ge(t - lo))
        if hi_ok:
            out.append(Atom.ge(hi - t))
    return out


def dinfer(traces: Sequence, position: str = "body", max_degree: int = 2, max_conjuncts: int = 12,
           shapes: Sequence[str] = ("eq", OCTAGONAL, INTERVAL), adaptive: bool = True,
           variables: Optional[Sequence[str]] = None) -> Conjunction:
    """Conjunction of invariants over the snapshots at ``position``."""
    snaps, cut = [], []
    for t in traces:
        sel = [s for s in t.snapshots if position in (None, "all") or s.pos == position]
        snaps.extend(sel)
        if getattr(t, "truncated", False) and len(sel) >= 2:
            cut.append((sel[-2], sel[-1]))
    if not snaps:
        return Conjunction()
    if variables is None:
        variables = list(snaps[0].names)
    atoms: List[Atom] = []
    names = snaps[0].names
    idx = [names.index(v) for v in variables]
    env0 = [dict(zip(variables, u)) for u in dict.fromkeys(tuple(s.values[i] for i in idx) for s in snaps)]
    if "eq" in shapes:
        atoms.extend(infer_equalities(env0, max_degree, variables, adaptive=adaptive))
    if OCTAGONAL in shapes and len(variables) > 1:
        atoms.extend(infer_inequalities(env0, OCTAGONAL, variables, cut))
    if INTERVAL in shapes:
        atoms.extend(infer_inequalities(env0, INTERVAL, variables, cut))
    # soundness on the data is an invariant of every inference above
    X = np.array([[e[v] for v in variables] for e in env0], dtype=object)
    cols = {v: X[:, i] for i, v in enumerate(variables)}
    for a in atoms:
        assert holds_np(a, cols, 0, len(env0)).all(), f"inferred atom {a} fails on data"
    return Conjunction(atoms[:max_conjuncts])
