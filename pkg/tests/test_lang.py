from __future__ import annotations

import pytest
from hypothesis import given, settings

from conftest import corpus_names, load
from strategies import programs
from tntprove.lang import (Assume, HavocOp, ParseError, UnsupportedFeature, get_loop_seq, instrument,
                           loop_body_has_nondet, parse_program, pretty_print, strip, to_cfa)


def test_parse_canonical_program():
    p = parse_program("fun f(a, b) { int c = a + b; int d = *; while (c > 0) { c = c - 1; } }")
    assert p.name == "f"
    assert p.params == ("a", "b")
    assert p.inputs == ("a", "b", "d")
    assert p.variables == ("a", "b", "c", "d")


def test_comments_and_bare_form():
    p = parse_program("# comment\nint x, y = 2;\nwhile (x > 0) { x = x - y; } # trailing\n")
    assert p.inputs == ("x",)


@pytest.mark.parametrize("text", [
    "fun f(x) { while (x > 0) { x = x - 1; }",
    "fun f(x) { y = 1; }",
    "fun f(x) { x = 1 }",
    "fun f(x, x) { skip; }",
    "fun f(x) { x = 1; int y = 0; }",
    "fun f(x) { x = $; }",
])
def test_malformed_programs_are_rejected(text):
    with pytest.raises(ParseError):
        parse_program(text)


def test_float_literal_is_unsupported():
    with pytest.raises(UnsupportedFeature):
        parse_program("fun f(x) { x = 1.5; }")


@pytest.mark.parametrize("name", corpus_names())
def test_corpus_print_parse_fixpoint(name):
    p = load(name)
    assert parse_program(pretty_print(p)) == p


@pytest.mark.parametrize("name", corpus_names())
def test_corpus_strip_instrument_roundtrip(name):
    c = to_cfa(load(name))
    back = strip(instrument(c, 500))
    assert back.edge_set() == c.edge_set()
    assert back.locations == c.locations


@pytest.mark.parametrize("name", corpus_names())
def test_corpus_branches_are_complements(name):
    c = to_cfa(load(name))
    for q in c.locations:
        assumes = [e.op for e in c.out_edges(q) if isinstance(e.op, Assume)]
        if len(assumes) == 2:
            a, b = assumes
            assert a.cond == b.cond and a.positive != b.positive


def test_loop_seq_is_postorder():
    c = to_cfa(load("nested"))
    seq = get_loop_seq(c)
    assert len(seq) == 2
    for i, lid in enumerate(seq):
        for ch in c.loop(lid).children:
            assert seq.index(ch) < i


def test_loop_structure_of_nested():
    c = to_cfa(load("nested"))
    outer = next(li for li in c.loops if li.parent is None)
    inner = next(li for li in c.loops if li.parent is not None)
    assert inner.parent == outer.loop_id
    assert inner.depth == outer.depth + 1


def test_uninitialised_and_star_declarations_are_inputs():
    c = to_cfa(load("up_forever"))
    assert c.inputs == ("x",)
    c = to_cfa(load("sqrt1_term"))
    assert c.inputs == ("k",)


def test_havoc_in_loop_body_is_detected():
    c = to_cfa(load("havoc_countdown"))
    assert any(isinstance(e.op, HavocOp) for e in c.edges)
    assert loop_body_has_nondet(c, c.loops[0].loop_id)
    assert not loop_body_has_nondet(to_cfa(load("countdown")), 0)


def test_instrument_rejects_bad_bound():
    with pytest.raises(ValueError):
        instrument(to_cfa(load("countdown")), 0)


@given(programs())
@settings(max_examples=200)
def test_random_programs_roundtrip(text):
    p = parse_program(text)
    assert parse_program(pretty_print(p)) == p
    c = to_cfa(p)
    assert strip(instrument(c, 7)).edge_set() == c.edge_set()
    seq = get_loop_seq(c)
    assert sorted(seq) == sorted(li.loop_id for li in c.loops)
    for i, lid in enumerate(seq):
        assert all(seq.index(ch) < i for ch in c.loop(lid).children)
