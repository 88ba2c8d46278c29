from __future__ import annotations

from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load
from strategies import VARS, atoms, formulas, linear_atoms
from tntprove.execution import execute, project
from tntprove.lang import instrument, to_cfa
from tntprove.logic import Atom, Conjunction, conj, holds, holds_np, negate
from tntprove.lp import feasible, fm_feasible, linprog
from tntprove.poly import Poly
from tntprove.rank import RankingFunction, RfSet
from tntprove.solver import (BOUNDED, CEX, SAT, SYMBOLIC, UNKNOWN, VALID, RfCex, check_implication,
                             check_recurrent, check_rfs_on_traces, check_sat, find_models, inconsistent,
                             input_grid, positive_combination, prove_implication, sample_models, shell,
                             validate_rfs)
from tntprove.summary import summarize

x, y = Poly.var("x"), Poly.var("y")
t, n, m = Poly.var("t"), Poly.var("n"), Poly.var("m")


def test_shell_is_cube_boundary_in_l1_order():
    pts = shell(2, 2)
    assert len(pts) == 16
    assert all(max(abs(a), abs(b)) == 2 for a, b in pts)
    l1 = [abs(a) + abs(b) for a, b in pts]
    assert l1 == sorted(l1)


def test_check_sat_finds_small_model():
    res = check_sat(Atom.eq(x * x - 49), variables=["x"])
    assert res.kind == SAT and res.model["x"] in (7, -7)
    assert res.confidence == BOUNDED


def test_check_sat_unknown_when_no_model_in_box():
    res = check_sat(Atom.eq(x * x - 2), variables=["x"])
    assert res.kind == UNKNOWN


def test_linear_infeasibility_is_detected():
    assert inconsistent([Atom.ge(x - 3), Atom.ge(2 - x)])
    assert not inconsistent([Atom.ge(x - 3), Atom.ge(5 - x)])


def test_quadratic_closure_is_symbolic():
    hyp = [Atom.ge(n * n + 1 - t), Atom.ge(-2 - m), Atom.ge(n - m)]
    upd = {"t": t + 2 * m, "n": n + 1, "m": m}
    res = check_implication(hyp, (Conjunction(), upd), Atom.ge(n * n + 1 - t))
    assert res.kind == VALID and res.confidence == SYMBOLIC


def test_implication_counterexample_is_honest():
    res = check_implication([Atom.ge(x)], ({}, {"x": x - 1}), Atom.ge(x), variables=["x"])
    assert res.kind == CEX
    assert res.model["x"] == 0


def test_positive_combination_certificate():
    cert = positive_combination(x + y + 3, [x, y], [])
    assert cert is not None
    assert positive_combination(x - y, [x], []) is None


def test_prove_implication_uses_equalities():
    assert prove_implication([Atom.eq(x - y), Atom.ge(y - 2)], Atom.ge(x)) is not None


def test_recurrent_drift_set():
    c = to_cfa(load("drift"))
    summ = summarize(c, 0)
    ok = check_recurrent(Conjunction([Atom.ge(x), Atom.ge(y)]), summ.tloop, variables=c.vars)
    assert ok.valid and ok.confidence == SYMBOLIC
    bad = check_recurrent(Conjunction([Atom.ge(x)]), summ.tloop, variables=c.vars)
    assert bad.kind == CEX
    assert bad.model["x"] >= 0 and bad.model["x"] + bad.model["y"] < 0


def test_recurrent_trivial_true():
    c = to_cfa(load("up_forever"))
    summ = summarize(c, 0)
    assert check_recurrent(Conjunction([Atom.ge(x)]), summ.tloop, variables=c.vars).valid


def test_sample_models_respects_equalities():
    r = [Atom.eq(Poly.var("s") - Poly.var("c")), Atom.ge(Poly.var("s") - 1), Atom.ge(20 - Poly.var("s"))]
    pts = sample_models(r, 50, 50, 0, ["s", "c"])
    assert pts and all(all(a.holds(p) for a in r) for p in pts)
    assert all(p["s"] == p["c"] for p in pts)


def test_input_grid_is_bounded_and_dense_near_zero():
    g = input_grid(["a", "b"], 50, 3000)
    assert len(g) <= 3000
    assert {"a": 0, "b": 0} in g and {"a": -1, "b": 1} in g
    assert all(abs(p["a"]) <= 50 and abs(p["b"]) <= 50 for p in g)
    assert input_grid([], 50) == [{}]


def test_validate_rfs_sqrt1_ok_and_cex():
    ic = instrument(to_cfa(load("sqrt1_term")), 500)
    ok = validate_rfs(ic, 0, RfSet([RankingFunction.linear({"k": 1, "c": -1})]))
    assert ok.kind == VALID and ok.confidence == BOUNDED
    ic2 = instrument(to_cfa(load("drift")), 500)
    cex = validate_rfs(ic2, 0, RfSet([RankingFunction.linear({"x": 1})]))
    assert isinstance(cex, RfCex)


def test_validate_rfs_agrees_with_bruteforce():
    ic = instrument(to_cfa(load("toward_zero")), 500)
    rfs = RfSet([RankingFunction.linear({"x": 1}), RankingFunction.linear({"x": -1})])
    assert validate_rfs(ic, 0, rfs, box=30).valid
    runs = execute(ic, input_grid(list(ic.cfa.inputs), 30))
    for lt in project(runs, 0):
        states = lt.body_states() + [s for s in lt.snapshots if s.pos == "post"]
        for i in range(len(states)):
            for j in range(i + 1, len(states)):
                assert rfs.covers(states[i].env, states[j].env)
    assert check_rfs_on_traces(RfSet([RankingFunction.linear({"x": 1})]), project(runs, 0)) is not None


def test_lp_matches_fourier_motzkin():
    rng = np.random.default_rng(3)
    for _ in range(60):
        A = rng.integers(-3, 4, size=(4, 3)).tolist()
        b = rng.integers(-3, 4, size=4).tolist()
        assert feasible(A, b, free=range(3), nvars=3).ok == fm_feasible(A, b)


def test_linprog_optimum():
    # min -x - y s.t. x + 2y <= 4, 3x + y <= 6
    res = linprog([-1, -1], [[1, 2], [3, 1]], [4, 6])
    assert res.ok and res.value == Fraction(-14, 5)


# ---------------------------------------------------------------- property suites


@given(formulas(("x", "y")))
@settings(max_examples=200)
def test_model_honesty(f):
    res = check_sat(f, box=10, budget=2000, variables=["x", "y"])
    if res.kind == SAT:
        assert holds(f, res.model)
    models, _ = find_models(f, 3, 8, 1500, ["x", "y"])
    assert all(holds(f, mo) for mo in models)
    assert res.confidence == BOUNDED


@given(st.lists(atoms(("x", "y")), min_size=1, max_size=3), atoms(("x", "y")))
@settings(max_examples=200)
def test_implication_cex_models_violate(hyps, concl):
    res = check_implication(hyps, None, concl, box=10, budget=2000, variables=["x", "y"])
    if res.kind == CEX:
        assert all(a.holds(res.model) for a in hyps)
        assert not concl.holds(res.model)
    if res.kind != VALID or res.confidence != SYMBOLIC:
        assert res.confidence == BOUNDED


@st.composite
def implications(draw):
    hyps = draw(st.lists(st.one_of(linear_atoms(VARS), atoms(VARS)), min_size=1, max_size=3))
    if draw(st.integers(0, 4)):
        # a combination of hypotheses, sometimes weakened or perturbed
        p = Poly.const(draw(st.integers(-2, 6)))
        for h in hyps:
            p = p + h.poly * draw(st.integers(0, 3))
        concl = Atom.ge(p)
    else:
        concl = draw(linear_atoms(VARS, eq=False))
    return hyps, concl


@given(implications())
@settings(max_examples=200)
def test_valid_implication_sampling_soundness(case):
    hyps, concl = case
    res = check_implication(hyps, None, concl, box=50, budget=20000, variables=list(VARS))
    if res.kind != VALID:
        return
    rng = np.random.default_rng(0)
    pts = rng.integers(-50, 51, size=(10_000, 3)).astype(object)
    cols = {v: pts[:, i] for i, v in enumerate(VARS)}
    hyp_ok = holds_np(conj(*hyps), cols, 0, len(pts))
    concl_ok = holds_np(concl, cols, 0, len(pts))
    assert not (hyp_ok & ~concl_ok).any()
    for p in sample_models(hyps, 10_000, 50, 1, list(VARS)):
        assert concl.holds(p)


@given(st.lists(linear_atoms(("x", "y")), min_size=1, max_size=4))
@settings(max_examples=200)
def test_inconsistent_only_when_no_integer_model(hyps):
    if inconsistent(hyps):
        models, _ = find_models(conj(*hyps), 1, 30, 5000, ["x", "y"])
        assert not models


def test_negate_then_implication_symmetry():
    a = Atom.ge(x - 1)
    assert check_implication([a], None, negate(Atom.ge(-x)), variables=["x"]).valid
