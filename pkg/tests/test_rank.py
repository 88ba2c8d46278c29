from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load
from tntprove.execution import LoopTrace, Snapshot, execute, partition, project
from tntprove.lang import instrument, to_cfa
from tntprove.rank import RankingFunction, RfSet, TcPair, gen_tc_trans, infer_rf, solve_template


def _trace(states, names=("x", "y"), post=True):
    snaps = [Snapshot(0, "pre", 0, names, tuple(states[0]))]
    for i, v in enumerate(states, 1):
        snaps.append(Snapshot(0, "body", i, names, tuple(v)))
    if post:
        snaps.append(Snapshot(0, "post", len(states) + 1, names, tuple(states[-1])))
    return LoopTrace(0, tuple(snaps), not post)


def test_gen_tc_trans_samples_ordered_pairs():
    tr = _trace([(5 - i, 0) for i in range(6)])
    pairs = gen_tc_trans(tr, 1000, 0)
    # 6 body states plus the exit state: 6 * 7 / 2 ordered pairs
    assert len(pairs) == 21
    assert all(p.s1[0] >= p.s2[0] for p in pairs)
    assert len(gen_tc_trans(tr, 5, 0)) == 5
    assert gen_tc_trans(tr, 5, 3) == gen_tc_trans(tr, 5, 3)
    with pytest.raises(ValueError):
        gen_tc_trans(tr, 0, 0)


def test_solve_template_minimal_countdown():
    pairs = [TcPair(("x",), (5,), (4,)), TcPair(("x",), (1,), (0,))]
    rf = solve_template(pairs, ["x"])
    assert rf == RankingFunction.linear({"x": 1}, 0)


def test_solve_template_infeasible_returns_none():
    assert solve_template([TcPair(("x",), (3,), (3,))], ["x"]) is None


def test_solve_template_uses_constant_when_needed():
    # x increases towards 10: needs a negative x coefficient and a constant
    pairs = [TcPair(("x",), (v,), (v + 1,)) for v in range(0, 10)]
    rf = solve_template(pairs, ["x"])
    assert rf.coeffs["x"] < 0
    assert all(rf.decreases(p.env1, p.env2) for p in pairs)


def test_rf_json_roundtrip():
    rf = RankingFunction.linear({"k": 1, "c": -1}, 3)
    assert RankingFunction.from_json(rf.to_json()) == rf
    assert RankingFunction.from_json({"coeffs": {"x*x": 2, "y": -1}, "constant": 0})({"x": 3, "y": 1}) == 17


def test_rfset_insertion_order_and_dedup():
    a, b = RankingFunction.linear({"x": 1}), RankingFunction.linear({"y": 1})
    s = RfSet([a, b, a])
    assert list(s) == [a, b]
    assert s.covers({"x": 2, "y": 0}, {"x": 1, "y": 5})
    assert not s.covers({"x": -2, "y": -1}, {"x": -3, "y": -2})


def test_infer_rf_on_sqrt1_finds_k_minus_c():
    ic = instrument(to_cfa(load("sqrt1_term")), 500)
    part = partition(project(execute(ic, [{"k": k} for k in range(-20, 300, 13)]), 0))
    res = infer_rf(part.term, ic.cfa.vars, K=200, seed=1)
    assert RankingFunction.linear({"k": 1, "c": -1}) in res.rfs
    assert res.discarded == 0


def test_infer_rf_is_deterministic():
    tr = [_trace([(i * j % 7, j) for i in range(5)]) for j in range(1, 6)]
    a = infer_rf(tr, ["x", "y"], K=30, seed=4)
    b = infer_rf(tr, ["x", "y"], K=30, seed=4)
    assert list(a.rfs) == list(b.rfs)


@st.composite
def traces(draw):
    n = draw(st.integers(1, 4))
    out = []
    for _ in range(n):
        length = draw(st.integers(1, 8))
        states = [(draw(st.integers(-15, 15)), draw(st.integers(-15, 15))) for _ in range(length)]
        out.append(_trace(states))
    return out


@given(traces(), st.integers(1, 40), st.integers(0, 1000))
@settings(max_examples=200)
def test_infer_rf_cover_and_termination(trs, K, seed):
    res = infer_rf(trs, ["x", "y"], K=K, seed=seed)
    # terminates with every pair either covered or discarded
    assert len(res.pairs) + len(res.discarded_pairs) == res.sampled
    for p in res.pairs:
        assert res.rfs.covers(p.env1, p.env2)
    for p in res.discarded_pairs:
        assert solve_template([p], ["x", "y"]) is None
    assert res.low_confidence == (res.discarded * 2 > res.sampled > 0)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20)),
                min_size=1, max_size=4))
@settings(max_examples=200)
def test_solve_template_solution_is_exact(rows):
    pairs = [TcPair(("x", "y"), (a, b), (c, d)) for a, b, c, d in rows]
    rf = solve_template(pairs, ["x", "y"])
    if rf is not None:
        for p in pairs:
            v1, v2 = rf(p.env1), rf(p.env2)
            assert isinstance(v1, int) and v1 >= 0 and v1 > v2
