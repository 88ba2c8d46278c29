from __future__ import annotations

from conftest import load
from tntprove.analysis import (NONTERM, TERM, UNKNOWN, Session, _traces_for, prove_nt, prove_t, prove_tnt,
                               recheck_recurrent, recheck_rfs, refine_rs)
from tntprove.config import Config
from tntprove.execution import gen_random_inputs
from tntprove.lang import parse_program
from tntprove.logic import Atom, Conjunction
from tntprove.poly import Poly
from tntprove.solver import SYMBOLIC, check_recurrent

x, y = Poly.var("x"), Poly.var("y")


def _session(name, **kw):
    return Session(load(name) if "{" not in name else parse_program(name), Config(**kw))


def _part(sess, loop_id=0):
    cfg = sess.config
    runs = sess.execute(gen_random_inputs(sess.cfa.inputs, cfg.inputs, cfg.range, cfg.seed))
    return _traces_for(sess, runs, loop_id)


def test_no_loops_is_term():
    v = prove_tnt(load("straight_line"))
    assert v.outcome == TERM and v.confidence == SYMBOLIC


def test_prove_t_countdown():
    sess = _session("countdown", seed=1)
    res, mayloop = prove_t(sess, 0, _part(sess).term)
    assert res.outcome == TERM
    assert [str(r) for r in res.rfs] == ["x"]
    assert mayloop == []


def test_prove_t_handoff_on_drift():
    sess = _session("drift", seed=1)
    res, mayloop = prove_t(sess, 0, _part(sess).term)
    assert res.outcome == UNKNOWN
    assert mayloop


def test_prove_nt_up_forever_at_depth_zero():
    sess = _session("up_forever", seed=2)
    res, _ = prove_nt(sess, 0, _part(sess).mayloop)
    assert res.outcome == NONTERM and res.depth == 0
    assert res.recurrent == Conjunction([Atom.ge(x)])


def test_prove_nt_nonzero_finds_positive_half():
    sess = _session("nonzero", seed=1)
    res, _ = prove_nt(sess, 0, _part(sess).mayloop)
    assert res.outcome == NONTERM
    assert res.recurrent == Conjunction([Atom.ge(x - 1)])
    assert res.witness["x"] >= 1


def test_prove_nt_refuses_nondeterministic_body():
    sess = _session("havoc_countdown", seed=1)
    res, _ = prove_nt(sess, 0, _part(sess).mayloop)
    assert res.outcome == UNKNOWN and "Nondet" in res.reason


def test_refine_rs_strengthens_loop_condition():
    sess = _session("drift", seed=1)
    r = Conjunction([Atom.ge(x)])
    summ = sess.summary(0)
    res = check_recurrent(r, summ.tloop, variables=sess.cfa.vars)
    children, terms = refine_rs(sess, r, 0, [(res.path, res.conjunct, res)])
    assert children and terms
    assert all(Atom.ge(x) in ch for ch in children)
    assert Conjunction([Atom.ge(x), Atom.ge(y)]) in children
    assert len(set(children)) == len(children)


def test_upperbound_limits_depth():
    sess = _session("quadratic_bound", seed=1, upperbound=1)
    res, _ = prove_nt(sess, 0, _part(sess).mayloop)
    assert res.outcome != NONTERM or res.depth <= 1


def test_term_mode_on_nonterminating_loop_is_unknown():
    v = prove_tnt(load("up_forever"), Config(mode="term", seed=1))
    assert v.outcome == UNKNOWN


def test_nonterm_mode_on_terminating_loop_is_unknown():
    v = prove_tnt(load("countdown"), Config(mode="nonterm", seed=1))
    assert v.outcome == UNKNOWN


def test_timeout_gives_unknown():
    v = prove_tnt(load("nested"), Config(seed=1, timeout_secs=0.01))
    assert v.outcome == UNKNOWN and "timeout" in v.reason


def test_nested_loops_terminate_in_postorder():
    v = prove_tnt(load("nested"), Config(seed=1))
    assert v.outcome == TERM
    sess = Session(load("nested"), Config(seed=1))
    inner = next(li.loop_id for li in sess.cfa.loops if li.parent is not None)
    assert v.loops[0].loop_id == inner


def test_verdict_evidence_rechecks():
    for name in ("countdown", "drift", "toward_zero"):
        cfg = Config(seed=1)
        v = prove_tnt(load(name), cfg)
        sess = Session(load(name), cfg)
        for lv in v.loops:
            if lv.outcome == TERM:
                assert recheck_rfs(sess, lv.loop_id, lv.rfs).valid
            elif lv.outcome == NONTERM:
                assert recheck_recurrent(sess, lv.loop_id, lv.recurrent, lv.witness).valid


def test_recheck_rejects_wrong_recurrent_set():
    sess = _session("drift", seed=1)
    assert not recheck_recurrent(sess, 0, Conjunction([Atom.ge(x)]), {"x": 0, "y": 0}).valid
    # closed, but the witness run leaves it at once
    assert not recheck_recurrent(sess, 0, Conjunction([Atom.ge(x), Atom.ge(y)]), {"x": 0, "y": -1}).valid


def test_reproducible_verdicts():
    a = prove_tnt(load("quadratic_bound"), Config(seed=3))
    b = prove_tnt(load("quadratic_bound"), Config(seed=3))
    assert a.outcome == b.outcome and a.recurrent == b.recurrent and a.witness == b.witness
