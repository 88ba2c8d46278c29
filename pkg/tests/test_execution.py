from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import corpus_names, load
from strategies import inputs, programs
from tntprove.execution import (BASE, MAYLOOP, TERM, LoopTrace, MalformedTrace, Snapshot, classify, dump_traces,
                                execute, gen_random_inputs, interpret, parse_dump, partition, project,
                                run_fragment, traces_from_snapshots)
from tntprove.lang import instrument, parse_program, to_cfa


def _ic(text_or_name, bnd=500):
    p = parse_program(text_or_name) if "{" in text_or_name else load(text_or_name)
    return instrument(to_cfa(p), bnd)


def test_minimal_loop_gives_pre_and_post():
    ic = _ic("fun f() { int x = -1; while (x >= 0) { x = x - 1; } }")
    runs = execute(ic, [{}])
    assert [s.pos for s in runs[0].snapshots] == ["pre", "post"]
    (lt,) = project(runs, 0)
    assert classify(lt) == BASE


def test_nonterm_fixture_truncates_at_bound():
    ic = _ic("sqrt1_nonterm")
    (run,) = execute(ic, [{}])
    assert run.status == "abort"
    body = [s for s in run.snapshots if s.pos == "body"]
    assert len(body) == 500
    part = partition(project([run], 0))
    assert len(part.mayloop) == 1 and not part.term and not part.base


def test_terminating_run_is_term_class():
    ic = _ic("countdown")
    part = partition(project(execute(ic, [{"x": 5}, {"x": -3}]), 0))
    assert len(part.term) == 1 and len(part.base) == 1
    assert [s.seq for s in part.term[0].snapshots] == [0, 1, 2, 3, 4, 5, 6]


def test_count_to_1000_pitfall_inputs_truncate():
    ic = _ic("count_to_1000")
    part = partition(project(execute(ic, [{"x": 100}, {"x": 600}, {"x": 2000}]), 0))
    assert len(part.mayloop) == 1 and len(part.term) == 1 and len(part.base) == 1


def test_nested_inner_loop_traces_per_outer_iteration():
    ic = _ic("nested")
    runs = execute(ic, [{"n": 4}])
    c = ic.cfa
    inner = next(li.loop_id for li in c.loops if li.parent is not None)
    lts = project(runs, inner)
    assert len(lts) == 4
    assert [len(t.body_states()) for t in lts] == [0, 1, 2, 3]


def test_dump_roundtrip_and_format():
    ic = _ic("countdown")
    runs = execute(ic, [{"x": 2}])
    text = dump_traces(runs)
    assert text.splitlines()[0] == "loop=0 pos=pre seq=0 x=2"
    snaps = parse_dump(text)
    assert snaps == runs[0].snapshots
    (lt,) = traces_from_snapshots(snaps)
    assert classify(lt) == TERM


def test_malformed_trace_is_rejected():
    s = Snapshot(0, "body", 1, ("x",), (1,))
    with pytest.raises(MalformedTrace):
        classify(LoopTrace(0, (s,), False))
    with pytest.raises(MalformedTrace):
        parse_dump("loop=0 seq=0 x=1\n")


def test_execution_is_deterministic():
    ic = _ic("havoc_countdown")
    ins = gen_random_inputs(ic.cfa.inputs, 20, 50, 3)
    assert dump_traces(execute(ic, ins, havoc_seed=4)) == dump_traces(execute(ic, ins, havoc_seed=4))
    assert gen_random_inputs(("a", "b"), 5, 10, 1) == gen_random_inputs(("a", "b"), 5, 10, 1)


def test_step_budget_truncates():
    ic = _ic("fun f(x) { while (x >= 0) { x = x + 1; } }", bnd=10 ** 9)
    (run,) = execute(ic, [{"x": 0}], step_budget=1000)
    assert run.status == "budget"
    (lt,) = project([run], 0)
    assert lt.truncated and classify(lt) == MAYLOOP


def test_run_fragment_executes_one_iteration():
    c = to_cfa(load("quadratic_bound"))
    li = c.loops[0]
    out = run_fragment(c, li.body_entry, li.header, {"t": 0, "n": 3, "m": -2})
    assert out == {"t": -4, "n": 4, "m": -2}


def test_compiled_machine_matches_reference_interpreter():
    for name in corpus_names():
        ic = _ic(name, bnd=40)
        for inp in gen_random_inputs(ic.cfa.inputs, 10, 30, 11):
            fast = execute(ic, [inp], step_budget=20000)[0]
            ref, _ = interpret(ic, inp, budget=20000)
            assert fast.snapshots == ref.snapshots, name
            assert fast.status == ref.status


# ---------------------------------------------------------------- property suites


@given(programs(), st.lists(inputs(), min_size=1, max_size=4))
@settings(max_examples=200)
def test_partition_is_disjoint_and_exhaustive(text, ins):
    ic = instrument(to_cfa(parse_program(text)), 6)
    runs = execute(ic, ins, step_budget=3000)
    for li in ic.cfa.loops:
        lts = project(runs, li.loop_id)
        part = partition(lts)
        classes = [part.base, part.term, part.mayloop]
        assert sum(len(c) for c in classes) == len(lts)
        ids = [id(t) for c in classes for t in c]
        assert len(ids) == len(set(ids)) == len(lts)
        for name, cls in zip((BASE, TERM, MAYLOOP), classes):
            assert all(classify(t) == name for t in cls)


@given(programs(), inputs(), st.integers(1, 8))
@settings(max_examples=200)
def test_instrumentation_prefix_fidelity(text, inp, bnd):
    c = to_cfa(parse_program(text))
    ic = instrument(c, bnd)
    budget = 4000
    inst, inst_vals = interpret(ic, inp, budget=budget, record=True, havoc_seed=5)
    plain, plain_vals = interpret(c, inp, budget=budget, record=True, havoc_seed=5)
    if inst.status == "exit":
        assert inst_vals == plain_vals
        assert plain.status == "exit"
    else:
        shorter, longer = sorted((inst_vals, plain_vals), key=len)
        assert longer[:len(shorter)] == shorter
        if inst.status == "abort":
            assert inst_vals == plain_vals[:len(inst_vals)]
