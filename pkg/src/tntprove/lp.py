"""Exact rational linear programming.

A dense two-phase tableau simplex over ``Fraction`` with Bland's rule (so it
cannot cycle), sequential lexicographic minimisation on top of it, and a
Fourier-Motzkin feasibility check used as an independent oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: Optional[List[Fraction]] = None
    value: Optional[Fraction] = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _F(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def _pivot(T: list, r: int, c: int):
    row = T[r]
    p = row[c]
    if p != 1:
        inv = 1 / p
        T[r] = row = [v * inv for v in row]
    for i, other in enumerate(T):
        if i != r:
            f = other[c]
            if f:
                T[i] = [a - f * b for a, b in zip(other, row)]


def _simplex(T: list, basis: list, ncols: int, obj_row: int) -> str:
    """Minimise the objective stored (as reduced costs) in ``T[obj_row]``.
    Columns ``>= ncols`` (except the rhs) are not allowed to enter."""
    m = len(basis)
    while True:
        z = T[obj_row]
        enter = next((j for j in range(ncols) if z[j] < 0), None)
        if enter is None:
            return OPTIMAL
        best, leave = None, None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return UNBOUNDED
        _pivot(T, leave, enter)
        basis[leave] = enter


def linprog(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
            A_eq: Sequence[Sequence] = (), b_eq: Sequence = (), free: Sequence[int] = ()) -> LPResult:
    """Minimise ``c.x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
    ``x >= 0`` except for the indices listed in ``free``."""
    n0 = len(c)
    free = sorted(set(free))
    # split free variables into a difference of two non-negative ones
    extra = {j: n0 + k for k, j in enumerate(free)}
    n = n0 + len(free)

    def expand(row):
        row = [_F(v) for v in row] + [Fraction(0)] * len(free)
        for j, k in extra.items():
            row[k] = -row[j]
        return row

    cc = expand(c)
    rows, rhs = [], []
    n_slack = len(A_ub)
    for i, (a, b) in enumerate(zip(A_ub, b_ub)):
        r = expand(a) + [Fraction(0)] * n_slack
        r[n + i] = Fraction(1)
        rows.append(r)
        rhs.append(_F(b))
    for a, b in zip(A_eq, b_eq):
        rows.append(expand(a) + [Fraction(0)] * n_slack)
        rhs.append(_F(b))
    nv = n + n_slack
    m = len(rows)
    if m == 0:
        if any(v < 0 for v in cc):
            return LPResult(UNBOUNDED)
        x = [Fraction(0)] * n0
        return LPResult(OPTIMAL, x, Fraction(0))
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-v for v in rows[i]]
            rhs[i] = -rhs[i]
    # tableau: [vars | artificials | rhs], plus phase-1 objective row
    T = []
    for i in range(m):
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        T.append(rows[i] + art + [rhs[i]])
    basis = [nv + i for i in range(m)]
    z = [Fraction(0)] * (nv + m + 1)
    for i in range(m):
        for j in range(nv):
            z[j] -= T[i][j]
        z[-1] -= T[i][-1]
    T.append(z)
    _simplex(T, basis, nv, m)
    if T[m][-1] != 0:
        return LPResult(INFEASIBLE)
    # drive artificials out of the basis, dropping redundant rows
    i = 0
    while i < len(basis):
        if basis[i] >= nv:
            col = next((j for j in range(nv) if T[i][j] != 0), None)
            if col is None:
                del T[i]
                del basis[i]
                continue
            _pivot(T, i, col)
            basis[i] = col
        i += 1
    m = len(basis)
    T.pop()  # phase-1 objective
    width = len(T[0]) if T else nv + 1
    obj = [Fraction(0)] * width
    for j in range(n):
        obj[j] = cc[j]
    for i, bj in enumerate(basis):
        cb = obj[bj] if bj < n else Fraction(0)
        if cb:
            obj = [a - cb * b for a, b in zip(obj, T[i])]
    T.append(obj)
    status = _simplex(T, basis, nv, m)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED)
    xs = [Fraction(0)] * nv
    for i, bj in enumerate(basis):
        if bj < nv:
            xs[bj] = T[i][-1]
    x = xs[:n0]
    for j, k in extra.items():
        x[j] = xs[j] - xs[k]
    value = sum((_F(ci) * xi for ci, xi in zip(c, x)), Fraction(0))
    return LPResult(OPTIMAL, x, value)


def lexmin(objectives: Sequence[Sequence], A_ub=(), b_ub=(), A_eq=(), b_eq=(), free=()) -> LPResult:
    """Minimise the objectives in order, fixing each optimum before the next."""
    A_eq, b_eq = [list(r) for r in A_eq], list(b_eq)
    res = None
    for c in objectives:
        res = linprog(c, A_ub, b_ub, A_eq, b_eq, free)
        if not res.ok:
            return res
        A_eq.append(list(c))
        b_eq.append(res.value)
    return res


def feasible(A_ub=(), b_ub=(), A_eq=(), b_eq=(), free=(), nvars: Optional[int] = None) -> LPResult:
    if nvars is None:
        nvars = len((list(A_ub) + list(A_eq))[0])
    return linprog([0] * nvars, A_ub, b_ub, A_eq, b_eq, free)


def fm_feasible(A: Sequence[Sequence], b: Sequence) -> bool:
    """Fourier-Motzkin elimination: is ``{x : A x <= b}`` non-empty over Q?

    Exponential in the worst case; meant for small cross-checks only.
    """
    rows = [([_F(v) for v in a], _F(bi)) for a, bi in zip(A, b)]
    n = len(rows[0][0]) if rows else 0
    for j in range(n):
        pos, neg, zero = [], [], []
        for a, bi in rows:
            (pos if a[j] > 0 else neg if a[j] < 0 else zero).append((a, bi))
        new = list(zero)
        for ap, bp in pos:
            for an, bn in neg:
                lp, ln = -an[j], ap[j]
                new.append(([lp * x + ln * y for x, y in zip(ap, an)], lp * bp + ln * bn))
        rows = _dedupe(new)
    return all(bi >= 0 for _, bi in rows)


def _dedupe(rows):
    seen, out = set(), []
    for a, bi in rows:
        key = (tuple(a), bi)
        if key not in seen:
            seen.add(key)
            out.append((a, bi))
    return out


def _floor(v: Fraction) -> int:
    return v.numerator // v.denominator


def int_linprog(c, A_ub, b_ub, A_eq=(), b_eq=(), integral: Sequence[Sequence] = (),
                node_limit: int = 400) -> LPResult:
    """Branch and bound: minimise ``c.x`` over the LP polyhedron subject to
    every combination ``g.x`` (g in ``integral``) taking an integer value.

    Returns the best solution found; ``status`` is ``"limit"`` when the node
    budget ran out before optimality was proven.
    """
    best: Optional[LPResult] = None
    stack = [([], [])]
    nodes = 0
    exhausted = False
    while stack:
        extra_A, extra_b = stack.pop()
        nodes += 1
        if nodes > node_limit:
            exhausted = True
            break
        res = linprog(c, list(A_ub) + extra_A, list(b_ub) + extra_b, A_eq, b_eq)
        if not res.ok:
            if res.status == UNBOUNDED:
                return res
            continue
        if best is not None and res.value >= best.value:
            continue
        frac = None
        for g in integral:
            v = sum((_F(a) * x for a, x in zip(g, res.x) if a), Fraction(0))
            if v.denominator != 1:
                frac = (g, v)
                break
        if frac is None:
            best = res
            continue
        g, v = frac
        lo = _floor(v)
        # push the ceiling branch first so the floor branch is explored first
        stack.append((extra_A + [[-a for a in g]], extra_b + [-(lo + 1)]))
        stack.append((extra_A + [list(g)], extra_b + [lo]))
    if best is None:
        return LPResult("limit" if exhausted else INFEASIBLE)
    if exhausted:
        return LPResult("limit", best.x, best.value)
    return best


def int_lexmin(objectives: Sequence[Sequence], A_ub=(), b_ub=(), integral: Sequence[Sequence] = (),
               node_limit: int = 400) -> LPResult:
    """Lexicographic minimisation over the integer points described by
    ``integral`` (see ``int_linprog``)."""
    A_eq, b_eq = [], []
    res = None
    for c in objectives:
        res = int_linprog(c, A_ub, b_ub, A_eq, b_eq, integral, node_limit)
        if res.x is None:
            return res
        A_eq.append(list(c))
        b_eq.append(res.value)
    return res
