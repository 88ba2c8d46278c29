"""Ranking-function inference from terminating loop traces.

Pairs of states drawn from the transitive closure of each trace constrain an
affine template; each pair is fitted by an exact LP that minimises the L1
norm of the coefficients, and a greedy loop keeps adding functions until every
sampled pair is covered.
"""

from __future__ import annotations

import bisect
import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .lp import int_lexmin, lexmin
from .poly import ONE, Poly, gen_monomials, mono_key, mono_str


@dataclass(frozen=True)
class RankingFunction:
    poly: Poly

    @staticmethod
    def linear(coeffs: Dict[str, int], constant: int = 0) -> "RankingFunction":
        t = {((v, 1),): c for v, c in coeffs.items()}
        t[ONE] = constant
        return RankingFunction(Poly(t))

    @property
    def coeffs(self) -> Dict[str, int]:
        return {mono_str(m): c for m, c in self.poly.items() if m != ONE}

    @property
    def constant(self) -> int:
        return self.poly.constant

    def __call__(self, env) -> int:
        return self.poly.evaluate(env)

    def decreases(self, s1, s2) -> bool:
        a = self.poly.evaluate(s1)
        return a >= 0 and a > self.poly.evaluate(s2)

    def to_json(self) -> dict:
        return {"coeffs": self.coeffs, "constant": self.constant}

    @staticmethod
    def from_json(d: dict) -> "RankingFunction":
        t = {}
        for name, c in d["coeffs"].items():
            parts = name.split("*")
            m: Dict[str, int] = {}
            for v in parts:
                m[v] = m.get(v, 0) + 1
            t[tuple(sorted(m.items()))] = c
        t[ONE] = d.get("constant", 0)
        return RankingFunction(Poly(t))

    def __str__(self) -> str:
        return str(self.poly)


class RfSet:
    """Insertion-ordered set of ranking functions."""

    def __init__(self, rfs: Iterable[RankingFunction] = ()):
        self._items: List[RankingFunction] = []
        for rf in rfs:
            self.add(rf)

    def add(self, rf: RankingFunction) -> bool:
        if rf in self._items:
            return False
        self._items.append(rf)
        return True

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, rf):
        return rf in self._items

    def __eq__(self, other):
        return isinstance(other, RfSet) and set(self._items) == set(other._items)

    def covers(self, s1, s2) -> bool:
        return any(rf.decreases(s1, s2) for rf in self._items)

    def __repr__(self):
        return "RfSet[" + ", ".join(str(r) for r in self._items) + "]"


@dataclass(frozen=True)
class TcPair:
    names: tuple
    s1: tuple
    s2: tuple

    @property
    def env1(self) -> Dict[str, int]:
        return dict(zip(self.names, self.s1))

    @property
    def env2(self) -> Dict[str, int]:
        return dict(zip(self.names, self.s2))


@dataclass
class InferResult:
    rfs: RfSet
    discarded: int
    sampled: int
    pairs: List[TcPair]
    discarded_pairs: List[TcPair]

    @property
    def low_confidence(self) -> bool:
        return self.sampled > 0 and self.discarded * 2 > self.sampled


# ---------------------------------------------------------------- sampling


def gen_tc_trans(t, K: int, seed: int, include_post: bool = True) -> List[TcPair]:
    """Uniformly sample up to K ordered pairs (s1 before s2) of a trace.

    ``s1`` ranges over body states; ``s2`` over later body states and, with
    ``include_post``, the exit state (the last transition out of the loop).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    body = [s for s in t.snapshots if s.pos == "body"]
    states = list(body)
    if include_post and t.snapshots and t.snapshots[-1].pos == "post":
        states.append(t.snapshots[-1])
    n, nb = len(states), len(body)
    # row i holds the pairs (i, j) for j in i+1..n-1
    counts = [n - 1 - i for i in range(nb)]
    starts = [0]
    for c in counts:
        starts.append(starts[-1] + c)
    total = starts[-1]
    if total == 0:
        return []
    rng = random.Random(seed)
    picks = rng.sample(range(total), min(K, total))
    names = states[0].names
    out = []
    for idx in picks:
        i = bisect.bisect_right(starts, idx) - 1
        j = i + 1 + (idx - starts[i])
        out.append(TcPair(names, states[i].values, states[j].values))
    return out


# ---------------------------------------------------------------- template


def _coprime(vec: Sequence[Fraction]) -> List[int]:
    den = 1
    for v in vec:
        den = den * v.denominator // math.gcd(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return [v // g for v in ints] if g > 1 else ints


def template_terms(variables: Sequence[str], degree: int = 1) -> list:
    """Non-constant template monomials, least significant first."""
    return [m for m in gen_monomials(variables, degree) if m != ONE]


def _l1_shell(n: int, r: int):
    """All integer vectors of length n with L1 norm exactly r."""
    if n == 0:
        if r == 0:
            yield ()
        return
    if n == 1:
        if r == 0:
            yield (0,)
        else:
            yield (r,)
            yield (-r,)
        return
    for a in range(r + 1):
        for rest in _l1_shell(n - 1, r - a):
            if a == 0:
                yield (0,) + rest
            else:
                yield (a,) + rest
                yield (-a,) + rest


def _enumerate_template(H1, D, order, limit):
    """Exact integer optimum by enumeration in order of increasing L1 norm.

    ``H1``/``D`` hold the non-constant template values at s1 and the
    differences s1 - s2 for each pair.  Returns (u0, w) or None when the
    enumeration budget is exhausted.
    """
    n = len(order)
    best, cands, seen = None, [], 0
    r = 0
    while best is None or r <= best:
        for w in _l1_shell(n, r):
            seen += 1
            if seen > limit:
                return None
            if any(sum(a * b for a, b in zip(w, d)) < 1 for d in D):
                continue
            m = min(sum(a * b for a, b in zip(w, h)) for h in H1)
            cost = r + max(0, -m)
            if best is None or cost < best:
                best = cost
                cands = [c for c in cands if c[0] <= best]
            if cost <= best:
                cands.append((cost, w, m))
        r += 1
    options = []
    for cost, w, m in cands:
        if cost != best:
            continue
        b = best - sum(abs(x) for x in w)
        for u0 in (-b, b):
            if u0 + m >= 0:
                options.append((tuple(w[j] for j in order) + (u0,), u0, w))
    _, u0, w = min(options)
    return u0, w


def solve_template(pairs: Sequence[TcPair], variables: Sequence[str], degree: int = 1,
                   enum_limit: int = 50000, node_limit: int = 400) -> Optional[RankingFunction]:
    """Integer-coefficient rf with rf(s1) > rf(s2) and rf(s1) >= 0 on every
    pair, minimising the L1 norm of (u0, u1, ..., un) over integer vectors;
    ties are broken by minimising the coefficients in decreasing monomial
    significance, then u0.  Returns None when infeasible.

    Small optima are found by direct enumeration; otherwise an exact
    branch-and-bound over the LP relaxation is used.
    """
    if not pairs:
        raise ValueError("solve_template needs at least one pair")
    terms = template_terms(variables, degree)
    n = len(terms) + 1  # u0 first
    H1, D = [], []
    for pr in pairs:
        e1, e2 = pr.env1, pr.env2
        h1 = [Poly({m: 1}).evaluate(e1) for m in terms]
        h2 = [Poly({m: 1}).evaluate(e2) for m in terms]
        H1.append(h1)
        D.append([x - y for x, y in zip(h1, h2)])
    if all(not any(d) for d in D):
        return None
    sig = sorted(range(len(terms)), key=lambda j: mono_key(terms[j], variables), reverse=True)
    found = _enumerate_template(H1, D, sig, enum_limit)
    if found is not None:
        u0, w = found
        u = [u0] + list(w)
    else:
        u = _solve_template_lp(H1, D, sig, n, node_limit)
        if u is None:
            return None
    if all(v == 0 for v in u[1:]):
        return None
    ints = _coprime([Fraction(v) for v in u])
    t = {m: c for m, c in zip(terms, ints[1:])}
    t[ONE] = ints[0]
    rf = RankingFunction(Poly(t))
    for pr in pairs:
        assert rf.decreases(pr.env1, pr.env2), "template solution fails its own constraints"
    return rf


def _solve_template_lp(H1, D, sig, n, node_limit):
    # LP variables: p_0..p_{n-1}, q_0..q_{n-1} with u = p - q
    A, b = [], []
    for h, d in zip(H1, D):
        d = [0] + d
        h = [1] + h
        A.append([-x for x in d] + list(d))  # -(u.d) <= -1
        b.append(-1)
        A.append([-x for x in h] + list(h))  # -(u.h1) <= 0
        b.append(0)
    objectives = [[1] * (2 * n)]
    for j in [j + 1 for j in sig] + [0]:
        c = [0] * (2 * n)
        c[j], c[n + j] = 1, -1
        objectives.append(c)
    integral = []
    for j in range(n):
        g = [0] * (2 * n)
        g[j], g[n + j] = 1, -1
        integral.append(g)
    res = int_lexmin(objectives, A, b, integral, node_limit)
    if res.x is None:
        # fall back to the rational optimum, scaled to integers by the caller
        res = lexmin(objectives, A, b)
        if not res.ok:
            return None
    return [res.x[j] - res.x[n + j] for j in range(n)]


# ---------------------------------------------------------------- greedy cover


def _eval_rows(rf: RankingFunction, S: np.ndarray, names: Sequence[str], vmax: int = 0) -> np.ndarray:
    if S.dtype != object and rf.poly.abs_bound(max(vmax, 1)) >= 2 ** 62:
        S = S.astype(object)
    total = np.zeros(S.shape[0], dtype=S.dtype)
    col = {v: i for i, v in enumerate(names)}
    for m, c in rf.poly.items():
        term = np.full(S.shape[0], c, dtype=S.dtype)
        for v, e in m:
            term = term * S[:, col[v]] ** e
        total = total + term
    return total


def infer_rf(term_traces: Sequence, variables: Sequence[str], K: int = 200, seed: int = 0,
             degree: int = 1, include_post: bool = True) -> InferResult:
    pairs: List[TcPair] = []
    for i, t in enumerate(term_traces):
        pairs.extend(gen_tc_trans(t, K, seed * 7919 + i, include_post))
    # identical pairs add nothing to the constraint system
    pairs = list(dict.fromkeys(pairs))
    sampled = len(pairs)
    rfs = RfSet()
    discarded: List[TcPair] = []
    if not pairs:
        return InferResult(rfs, 0, 0, [], [])
    names = pairs[0].names
    vmax = max(map(abs, itertools.chain.from_iterable(p.s1 + p.s2 for p in pairs)))
    dtype = object if vmax ** degree >= 2 ** 40 else np.int64
    S1 = np.array([p.s1 for p in pairs], dtype=dtype)
    S2 = np.array([p.s2 for p in pairs], dtype=dtype)
    alive = np.ones(len(pairs), dtype=bool)
    rng = random.Random(seed)
    while alive.any():
        idx = np.nonzero(alive)[0]
        k = int(idx[rng.randrange(len(idx))])
        alive[k] = False
        rf = solve_template([pairs[k]], variables, degree)
        if rf is None:
            discarded.append(pairs[k])
            continue
        rfs.add(rf)
        a, b = _eval_rows(rf, S1, names, vmax), _eval_rows(rf, S2, names, vmax)
        alive &= ~((a >= 0) & (a > b))
    dropped = set(discarded)
    kept = [p for p in pairs if p not in dropped]
    return InferResult(rfs, len(discarded), sampled, kept, discarded)
