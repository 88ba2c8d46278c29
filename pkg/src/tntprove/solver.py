"""Three-valued reasoning over polynomial integer constraints.

* ``check_sat`` / ``find_models`` / ``sample_models``: bounded model search.
* ``check_implication``: a small prover (inconsistency, linear elimination of
  equalities, non-negative linear combinations found by exact LP) backed by
  a bounded counterexample search.
* ``check_recurrent``: one-step closure of a candidate recurrent set.
* ``validate_rfs``: bounded check of a ranking-function set on program runs.

Every model handed back is re-checked by direct evaluation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .logic import (EQ, GE, Atom, Conjunction, Formula, conj, eval_poly_np, holds, holds_np, negate, nnf,
                    variables_of, violation)
from .lp import linprog
from .poly import ONE, Poly

VALID = "valid"
SAT = "sat"
UNSAT = "unsat"
CEX = "cex"
UNKNOWN = "unknown"

SYMBOLIC = "symbolic"
BOUNDED = "bounded"

DEFAULT_BOX = 50
REACH_BOX = 300
DEFAULT_BUDGET = 200_000


@dataclass
class CheckResult:
    kind: str
    model: Optional[Dict[str, int]] = None
    confidence: str = BOUNDED
    info: str = ""
    path: Optional[int] = None
    conjunct: Optional[Atom] = None

    @property
    def valid(self) -> bool:
        return self.kind == VALID

    def __repr__(self):
        extra = f", model={self.model}" if self.model is not None else ""
        return f"CheckResult({self.kind}, {self.confidence}{extra}, {self.info!r})"


# ---------------------------------------------------------------- grids


def _cube(n: int, r: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    axes = np.meshgrid(*([np.arange(-r, r + 1, dtype=np.int64)] * n), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


def _shell_raw(n: int, r: int) -> np.ndarray:
    if r == 0:
        return np.zeros((1, n), dtype=np.int64)
    if n == 1:
        return np.array([[-r], [r]], dtype=np.int64)
    rest_cube = _cube(n - 1, r)
    parts = []
    for edge in (-r, r):
        parts.append(np.hstack([np.full((len(rest_cube), 1), edge, dtype=np.int64), rest_cube]))
    inner = _shell_raw(n - 1, r)
    firsts = np.arange(-r + 1, r, dtype=np.int64)
    if len(firsts):
        a = np.repeat(firsts, len(inner))[:, None]
        b = np.tile(inner, (len(firsts), 1))
        parts.append(np.hstack([a, b]))
    return np.vstack(parts)


@functools.lru_cache(maxsize=512)
def shell(n: int, r: int) -> np.ndarray:
    """Integer points with L-infinity norm exactly r, ordered by L1 norm and
    then lexicographically.  The array is cached and read-only."""
    pts = _shell_raw(n, r)
    keys = [pts[:, j] for j in reversed(range(n))] + [np.abs(pts).sum(axis=1)]
    out = pts[np.lexsort(keys)]
    out.setflags(write=False)
    return out


def shells(n: int, box: int):
    for r in range(box + 1 if n else 1):
        yield r, shell(n, r)


# ---------------------------------------------------------------- model search


def _cols(pts: np.ndarray, names: Sequence[str]) -> Dict[str, np.ndarray]:
    return {v: pts[:, i] for i, v in enumerate(names)}


def _verify(f: Formula, model: Dict[str, int]):
    assert holds(f, model), f"model {model} does not satisfy {f}"


def find_models(f: Formula, k: int = 1, box: int = DEFAULT_BOX, budget: int = DEFAULT_BUDGET,
                variables: Optional[Sequence[str]] = None, seed: int = 0) -> Tuple[List[Dict[str, int]], int]:
    """Up to ``k`` models of ``f`` in [-box, box]^n; returns (models, evaluations)."""
    names = list(variables) if variables is not None else sorted(variables_of(f))
    missing = variables_of(f) - set(names)
    if missing:
        raise ValueError(f"formula mentions undeclared variables {sorted(missing)}")
    f = nnf(f)
    out: List[Dict[str, int]] = []
    used = 0
    if len(names) <= 3:
        for r, pts in shells(len(names), box):
            if used >= budget:
                break
            pts = pts[: budget - used]
            used += len(pts)
            ok = holds_np(f, _cols(pts, names), r, len(pts))
            for i in np.nonzero(ok)[0][: k - len(out)]:
                m = {v: int(x) for v, x in zip(names, pts[i])}
                _verify(f, m)
                out.append(m)
            if len(out) >= k:
                break
        return out, used
    return _random_search(f, names, k, box, budget, seed)


def _random_search(f, names, k, box, budget, seed):
    rng = np.random.default_rng(seed)
    out, used, seen = [], 0, set()
    scales = [s for s in (1, 3, 10, 30, 100, box) if s <= box] or [box]
    batch = 4096
    best: List[Tuple[int, tuple]] = []
    rounds = 0
    while used < budget and len(out) < k:
        scale = scales[rounds % len(scales)]
        rounds += 1
        m = min(batch, budget - used)
        pts = rng.integers(-scale, scale + 1, size=(m, len(names)), dtype=np.int64)
        used += m
        ok = holds_np(f, _cols(pts, names), box, m)
        for i in np.nonzero(ok)[0]:
            key = tuple(int(x) for x in pts[i])
            if key not in seen:
                seen.add(key)
                mod = dict(zip(names, key))
                _verify(f, mod)
                out.append(mod)
                if len(out) >= k:
                    return out, used
        # a few starting points for coordinate descent on the violation score
        for i in range(min(4, m)):
            key = tuple(int(x) for x in pts[i])
            best.append((violation(f, dict(zip(names, key))), key))
        best = sorted(best)[:8]
        if rounds % len(scales) == 0 and best:
            found, cost = _hill_climb(f, names, [b for _, b in best], box, min(2000, budget - used))
            used += cost
            for mod in found:
                key = tuple(mod[v] for v in names)
                if key not in seen:
                    seen.add(key)
                    out.append(mod)
            best = []
    return out[:k], used


def _hill_climb(f, names, starts, box, budget):
    found, used = [], 0
    for start in starts:
        cur = dict(zip(names, start))
        score = violation(f, cur)
        step = max(1, box // 4)
        while used < budget and score > 0:
            improved = False
            for v in names:
                for delta in (step, -step):
                    cand = dict(cur)
                    cand[v] = max(-box, min(box, cand[v] + delta))
                    used += 1
                    s = violation(f, cand)
                    if s < score:
                        cur, score, improved = cand, s, True
            if not improved:
                if step == 1:
                    break
                step = max(1, step // 2)
        if score == 0 and holds(f, cur):
            found.append(cur)
    return found, used


def check_sat(f: Formula, box: int = DEFAULT_BOX, budget: int = DEFAULT_BUDGET,
              variables: Optional[Sequence[str]] = None, seed: int = 0) -> CheckResult:
    models, used = find_models(f, 1, box, budget, variables, seed)
    if models:
        return CheckResult(SAT, models[0], BOUNDED, f"model found after {used} evaluations")
    return CheckResult(UNKNOWN, None, BOUNDED, f"no model in box {box} within {used} evaluations")


# ---------------------------------------------------------------- sampling


def _solve_linear_var(a: Atom, taken: set):
    """A variable occurring only linearly in the equality ``a``, as
    (variable, numerator, denominator) with variable = numerator / denominator.
    Unit coefficients are preferred."""
    if a.rel != EQ:
        return None
    p = a.poly
    cands = []
    for m, c in p.items():
        if len(m) == 1 and m[0][1] == 1 and m[0][0] not in taken:
            v = m[0][0]
            if not any(v in dict(mm) for mm in p.terms if mm != m):
                cands.append((abs(c), v, m, c))
    if not cands:
        return None
    _, v, m, c = min(cands)
    rest = p - Poly({m: c})
    return (v, -rest, c) if c > 0 else (v, rest, -c)


def sample_models(atoms: Sequence[Atom], count: int, box: int = DEFAULT_BOX, seed: int = 0,
                  variables: Optional[Sequence[str]] = None, budget: int = 2_000_000) -> List[Dict[str, int]]:
    """Random models of a conjunction inside the box.

    Variables fixed by linear equalities are computed from the others (rows
    where the division is inexact are dropped), so that sets cut out by
    equalities can be sampled as well.
    """
    atoms = list(atoms)
    names = list(variables) if variables is not None else sorted(set().union(*[a.variables() for a in atoms]) if atoms else [])
    solved: List[Tuple[str, Poly, int]] = []
    taken: set = set()
    deps: Dict[str, set] = {}
    for a in atoms:
        got = _solve_linear_var(a, taken)
        if got is None:
            continue
        v, num, _ = got
        # reject definitions that would make the dependencies cyclic
        reach, stack = set(), list(num.variables())
        while stack:
            u = stack.pop()
            if u not in reach:
                reach.add(u)
                stack.extend(deps.get(u, ()))
        if v in reach:
            continue
        deps[v] = num.variables()
        solved.append(got)
        taken.add(v)
    order: List[Tuple[str, Poly, int]] = []
    while len(order) < len(solved):
        done = {v for v, _, _ in order}
        for item in solved:
            if item[0] not in done and all(u not in taken or u in done for u in item[1].variables()):
                order.append(item)
    solved = order
    free = [v for v in names if v not in taken]
    f = conj(*atoms)
    rng = np.random.default_rng(seed)
    out: List[Dict[str, int]] = []
    used = 0
    while len(out) < count and used < budget:
        m = 8192
        used += m
        pts = rng.integers(-box, box + 1, size=(m, len(free)), dtype=np.int64)
        cols = _cols(pts, free)
        ok = np.ones(m, dtype=bool)
        # each defining expression only mentions free or earlier solved variables
        for v, num, den in solved:
            vals = eval_poly_np(num, cols, box)
            good = np.asarray((vals % den == 0) & (np.abs(vals) <= box * den), dtype=bool)
            ok &= good
            # out-of-range rows are masked; zero them to keep later arithmetic small
            cols[v] = np.where(good, vals // den, 0).astype(np.int64)
        if atoms:
            ok &= holds_np(f, cols, box * 1000, m)
        for i in np.nonzero(ok)[0]:
            mod = {v: int(cols[v][i]) for v in names}
            _verify(f, mod)
            out.append(mod)
            if len(out) >= count:
                break
    return out


# ---------------------------------------------------------------- prover


def _as_atoms(x) -> List[Atom]:
    if x is None:
        return []
    if isinstance(x, Atom):
        return [x]
    if isinstance(x, Conjunction):
        return list(x.atoms)
    return list(x)


def _monos(polys) -> list:
    ms = set()
    for p in polys:
        ms.update(p.terms.keys())
    ms.discard(ONE)
    return sorted(ms, key=lambda m: (len(m), m))


def positive_combination(target: Poly, ge: Sequence[Poly], eq: Sequence[Poly]):
    """Find c, lam >= 0 and free mu with target == c + sum lam*ge + sum mu*eq.

    Returns the multipliers (c, lam, mu) or None.
    """
    monos = _monos([target] + list(ge) + list(eq))
    nl, ne = len(ge), len(eq)
    nvars = 1 + nl + ne
    A_eq, b_eq = [], []
    for m in monos + [ONE]:
        row = [1 if m == ONE else 0] + [p.coeff(m) for p in ge] + [p.coeff(m) for p in eq]
        A_eq.append(row)
        b_eq.append(target.coeff(m))
    free = list(range(1 + nl, nvars))
    res = linprog([0] * nvars, [], [], A_eq, b_eq, free)
    if not res.ok:
        return None
    x = res.x
    return x[0], x[1:1 + nl], x[1 + nl:]


def inconsistent(atoms: Sequence[Atom]) -> bool:
    """Sound refutation: a non-negative combination of the hypotheses (free
    multiples of equalities) is a negative constant."""
    return _inconsistent(tuple(atoms))


@functools.lru_cache(maxsize=20000)
def _inconsistent(atoms: Tuple[Atom, ...]) -> bool:
    if any(a.is_const() and not a.const_value() for a in atoms):
        return True
    ge = [a.poly for a in atoms if a.rel == GE and not a.is_const()]
    eq = [a.poly for a in atoms if a.rel == EQ and not a.is_const()]
    if not ge and not eq:
        return False
    # target -1 == c + sum lam*ge + sum mu*eq with c >= 0
    return positive_combination(Poly.const(-1), ge, eq) is not None


def _eliminate(hyps: List[Atom], target: Poly):
    """Substitute away variables defined linearly by equality hypotheses."""
    hyps = list(hyps)
    changed = True
    while changed:
        changed = False
        for i, a in enumerate(hyps):
            if a.rel != EQ or a.is_const():
                continue
            p = a.poly
            for m, c in sorted(p.items(), key=lambda kv: str(kv[0])):
                if len(m) != 1 or m[0][1] != 1:
                    continue
                v = m[0][0]
                if any(v in dict(mm) for mm in p.terms if mm != m):
                    continue
                expr = (p - Poly({m: c})).scale(Fraction(-1) / c)
                sub = {v: expr}
                target = target.subst(sub)
                hyps = [h for j, h in enumerate(hyps) if j != i]
                hyps = [Atom(h.poly.subst(sub), h.rel) for h in hyps]
                changed = True
                break
            if changed:
                break
    return hyps, target


def prove_implication(hyps: Sequence[Atom], concl: Atom) -> Optional[str]:
    """Symbolic part of the implication check; returns a short certificate
    description or None."""
    return _prove_implication(tuple(hyps), concl)


@functools.lru_cache(maxsize=20000)
def _prove_implication(hyps: Tuple[Atom, ...], concl: Atom) -> Optional[str]:
    hyps = [h for h in hyps if not (h.is_const() and h.const_value())]
    if concl.is_const() and concl.const_value():
        return "trivial"
    if inconsistent(hyps):
        return "hypotheses inconsistent"
    red, target = _eliminate(hyps, concl.poly)
    if concl.rel == EQ:
        if target.is_zero():
            return "identity modulo equalities"
        ge = []
        eq = [h.poly for h in red if h.rel == EQ]
        if positive_combination(target, ge, eq) is not None:
            return "linear combination of equalities"
        return None
    if target.is_constant() and target.constant >= 0:
        return "constant after elimination"
    ge = [h.poly for h in red if h.rel == GE]
    eq = [h.poly for h in red if h.rel == EQ]
    if positive_combination(target, ge, eq) is not None:
        return "non-negative combination of hypotheses"
    # the same over the unreduced hypotheses (elimination may hide structure)
    ge0 = [h.poly for h in hyps if h.rel == GE]
    eq0 = [h.poly for h in hyps if h.rel == EQ]
    if positive_combination(concl.poly, ge0, eq0) is not None:
        return "non-negative combination of hypotheses"
    return None


def apply_update(a: Atom, update: Optional[Mapping[str, Poly]]) -> Atom:
    if not update:
        return a
    return a.subst(update)


def check_implication(hyp, path, concl: Atom, box: int = DEFAULT_BOX, budget: int = DEFAULT_BUDGET,
                      variables: Optional[Sequence[str]] = None, seed: int = 0) -> CheckResult:
    """Does ``hyp /\\ guard`` imply ``concl`` after applying the update?

    ``path`` is a (guard, update) pair or None for the identity step.
    """
    guard, update = (path if path is not None else (None, None))
    hyps = _as_atoms(hyp) + _as_atoms(guard)
    target = apply_update(concl, update)
    cert = prove_implication(hyps, target)
    if cert is not None:
        return CheckResult(VALID, None, SYMBOLIC, cert)
    f = conj(*hyps, negate(target))
    names = list(variables) if variables is not None else sorted(variables_of(f))
    names += sorted(variables_of(f) - set(names))
    models, used = find_models(f, 1, box, budget, names, seed)
    if models:
        return CheckResult(CEX, models[0], BOUNDED, f"violates {target}", conjunct=concl)
    return CheckResult(UNKNOWN, None, BOUNDED, f"no proof; no counterexample in box {box} ({used} evaluations)")


def check_recurrent(r, tloop, box: int = DEFAULT_BOX, budget: int = DEFAULT_BUDGET,
                    variables: Optional[Sequence[str]] = None, totality_samples: int = 2000,
                    seed: int = 0) -> CheckResult:
    """Closure of ``r`` under every path of ``tloop`` plus totality on ``r``."""
    atoms = _as_atoms(r)
    confidence = SYMBOLIC
    pending = []
    for pi, path in enumerate(tloop.paths):
        for a in atoms:
            res = check_implication(atoms, (path.guard, path.update), a, box, budget, variables, seed)
            if res.kind == CEX:
                res.path = pi
                return res
            if res.kind != VALID:
                pending.append((pi, a, res))
            elif res.confidence != SYMBOLIC:
                confidence = BOUNDED
    if pending:
        pi, a, res = pending[0]
        res.path = pi
        res.conjunct = a
        return res
    # totality: r must be covered by the path guards
    tot = _totality(atoms, tloop, box, variables, totality_samples, seed)
    if tot is not None and tot.kind == CEX:
        return tot
    if tot is None or tot.confidence != SYMBOLIC:
        confidence = BOUNDED
    return CheckResult(VALID, None, confidence, "closed under all paths")


def _totality(atoms, tloop, box, variables, samples, seed) -> Optional[CheckResult]:
    for path in tloop.paths:
        if all(prove_implication(atoms, g) is not None for g in path.guard):
            return CheckResult(VALID, None, SYMBOLIC, "a path guard is implied")
    names = list(variables) if variables is not None else None
    models = sample_models(atoms, samples, box, seed, names, budget=200_000)
    for m in models:
        if not any(path.guard.holds(m) for path in tloop.paths):
            return CheckResult(CEX, m, BOUNDED, "state with no enabled path")
    return CheckResult(VALID, None, BOUNDED, f"totality sampled on {len(models)} states")


# ---------------------------------------------------------------- ranking functions


@dataclass
class RfCex:
    """Two body states of one run that no ranking function orders."""
    inputs: Dict[str, int]
    s1: Dict[str, int]
    s2: Dict[str, int]
    trace: object = None
    kind: str = CEX
    confidence: str = BOUNDED

    @property
    def valid(self) -> bool:
        return False


def input_grid(names: Sequence[str], box: int = DEFAULT_BOX, max_points: int = 3000) -> List[Dict[str, int]]:
    """A dense cube around the origin followed by a coarse lattice over the box."""
    n = len(names)
    if n == 0:
        return [{}]
    half = max(1, max_points // 2)
    r0 = 0
    while r0 < box and (2 * (r0 + 1) + 1) ** n <= half:
        r0 += 1
    pts = [tuple(int(x) for x in p) for r in range(r0 + 1) for p in shell(n, r)]
    stride = 1
    while (2 * (box // stride) + 1) ** n > half:
        stride += 1
    seen = set(pts)
    lattice = []
    for r in range(box // stride + 1):
        for p in shell(n, r):
            q = tuple(int(x) * stride for x in p)
            if q not in seen:
                seen.add(q)
                lattice.append(q)
    return [dict(zip(names, p)) for p in (pts + lattice)[:max_points]]


def _first_uncovered(vals: List[np.ndarray]):
    """(i, j) with i < j such that no row of ``vals`` satisfies v_i >= 0 and
    v_i > v_j, or None."""
    nb = len(vals[0])
    if nb < 2:
        return None
    for v in vals:
        # a single function ordering every pair settles the trace
        suffix = np.maximum.accumulate(v[::-1])[::-1]
        if (v[:-1] >= 0).all() and (v[:-1] > suffix[1:]).all():
            return None
    step = 256
    for lo in range(0, nb - 1, step):
        rows = slice(lo, min(nb - 1, lo + step))
        covered = None
        for v in vals:
            a = v[rows][:, None]
            ok = (a >= 0) & (a > v[None, :])
            covered = ok if covered is None else covered | ok
        ii = np.arange(rows.start, rows.stop)[:, None]
        jj = np.arange(nb)[None, :]
        bad = ~covered & (jj > ii)
        hit = np.argwhere(bad)
        if len(hit):
            i, j = hit[0]
            return int(i + rows.start), int(j)
    return None


def check_rfs_on_traces(rfs, traces) -> Optional[RfCex]:
    from .rank import _eval_rows

    rfs = list(rfs)
    for t in traces:
        body = t.body_states()
        if len(body) < 2:
            continue
        names = body[0].names
        vmax = max(max((abs(x) for x in s.values), default=0) for s in body)
        S = np.array([s.values for s in body], dtype=object if vmax >= 2 ** 30 else np.int64)
        if not rfs:
            return RfCex(dict(t.inputs), body[0].env, body[1].env, t)
        vals = [_eval_rows(rf, S, names, vmax) for rf in rfs]
        hit = _first_uncovered(vals)
        if hit is not None:
            i, j = hit
            return RfCex(dict(t.inputs), body[i].env, body[j].env, t)
    return None


def validate_rfs(ic, loop_id: int, rfs, box: int = DEFAULT_BOX, max_points: int = 3000,
                 step_budget: int = 10 ** 6, havoc_seed: int = 0, chunk: int = 250, stop=None):
    """Run the instrumented program on an input grid and check that every
    ordered pair of body states of the loop is ordered by some function.
    ``stop`` is called between chunks of runs and may raise to abandon."""
    from .execution import execute, project

    grid = input_grid(list(ic.cfa.inputs), box, max_points)
    for lo in range(0, len(grid), chunk):
        if stop is not None:
            stop()
        runs = execute(ic, grid[lo:lo + chunk], step_budget, havoc_seed)
        cex = check_rfs_on_traces(rfs, project(runs, loop_id))
        if cex is not None:
            return cex
    return CheckResult(VALID, None, BOUNDED, f"no counterexample on {len(grid)} inputs")
