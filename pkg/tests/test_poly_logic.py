from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from tntprove.logic import (EQ, GE, Atom, Conjunction, Or, conj, disj, dnf, holds, holds_np, negate, nnf)
from tntprove.poly import Poly

x, y, z = Poly.var("x"), Poly.var("y"), Poly.var("z")


def test_poly_arithmetic_and_evaluation():
    p = (x + 1) * (x - 1)
    assert p == x * x - 1
    assert p.evaluate({"x": 7}) == 48
    assert (x ** 3).degree() == 3
    assert (x * y - y * x).is_zero()
    assert p.subst({"x": y + 1}) == y * y + 2 * y


def test_poly_fraction_coefficients_normalise():
    p = x.scale(Fraction(1, 2)) * 2
    assert p == x
    assert isinstance(p.coeff((("x", 1),)), int)


def test_ge_atom_is_gcd_normalised_with_floor():
    a = Atom.ge(2 * x - 3)
    # 2x - 3 >= 0 over Z is x - 2 >= 0
    assert a == Atom.ge(x - 2)
    assert a.rel == GE


def test_gt_is_ge_minus_one():
    assert Atom.gt(x) == Atom.ge(x - 1)


def test_eq_atom_content_and_sign():
    a = Atom.eq(-4 * x + 6 * y)
    b = Atom.eq(2 * x - 3 * y)
    assert a == b
    assert a.rel == EQ


def test_negation_of_ge_and_eq():
    assert negate(Atom.ge(x)) == Atom.ge(-x - 1)
    n = Atom.eq(x).negate()
    assert isinstance(n, Or)
    assert set(n.args) == {Atom.ge(x - 1), Atom.ge(-x - 1)}


def test_dnf_distributes():
    f = conj(disj(Atom.ge(x), Atom.ge(y)), Atom.ge(z))
    cases = dnf(f)
    assert len(cases) == 2
    assert all(Atom.ge(z) in c for c in cases)


def test_holds_np_agrees_with_holds():
    f = disj(conj(Atom.ge(x * x - y), Atom.eq(x - z)), negate(Atom.ge(y)))
    rng = np.random.default_rng(0)
    pts = rng.integers(-20, 21, size=(300, 3))
    cols = {v: pts[:, i].astype(object) for i, v in enumerate("xyz")}
    got = holds_np(f, cols, 0, len(pts))
    for i, row in enumerate(pts):
        env = dict(zip("xyz", map(int, row)))
        assert bool(got[i]) == holds(f, env)


def test_nnf_pushes_negation_to_atoms():
    f = nnf(negate(conj(Atom.ge(x), Atom.ge(y))))
    assert holds(f, {"x": -1, "y": 5})
    assert not holds(f, {"x": 1, "y": 5})


def test_conjunction_is_a_set():
    a, b = Atom.ge(x), Atom.ge(y)
    assert Conjunction([a, b, a]) == Conjunction([b, a])
    assert len(Conjunction([a, b, a])) == 2
    assert str(Conjunction()) == "true"


@pytest.mark.parametrize("rel", ["ge", "eq"])
def test_atom_str_roundtrips_through_holds(rel):
    a = getattr(Atom, rel)(x - 2 * y)
    assert a.holds({"x": 4, "y": 2})
