"""Field wrappers: derivatives, restriction, directional derivatives, memo."""

import pytest

from finslergrav.expr import ExprField
from finslergrav.fields import (ConstField, JetSpace, RestrictedField,
                                clear_eval_cache, directional_derivative, jet)
from finslergrav.taylor import ShapeError

from oracles import richardson_diff

V = lambda n: ["var", n]
NAMES = ("x1", "x2", "v", "y4")


def test_directional_derivative_linearity():
    f = ExprField(NAMES, V("v"))
    val = directional_derivative(f, (1.0, 2.0, 3.0, 4.0), (1, 0, -5, 0))
    assert val == -5.0


def test_directional_derivative_base_field_ignores_fiber_part():
    f = ExprField(NAMES, ["*", V("x1"), ["sin", V("x2")]])
    pt = (0.4, 0.9, 0.1, 0.2)
    plain = directional_derivative(f, pt, (1, 0, 0, 0))
    adapted = directional_derivative(f, pt, (1, 0, -3.7, 2.2))
    assert abs(plain - adapted) < 1e-15


def test_directional_derivative_recomposition():
    # adapted derivative of an (x, v)-field against direct jet combination
    h4 = ExprField(NAMES, ["*", ["exp", V("x1")], ["cos", V("v")]])
    pt = (0.3, -0.2, 0.8, 0.0)
    w1 = pt[2] * pt[0]  # leg coefficient value v * x1
    got = directional_derivative(h4, pt, (1, 0, -w1, 0))
    j = jet(h4, pt, 1)
    assert abs(got - (j.partial(0) - w1 * j.partial(2))) < 1e-14


def test_directional_derivative_shape_error():
    f = ExprField(NAMES, V("v"))
    with pytest.raises(ShapeError):
        directional_derivative(f, (1.0, 2.0, 3.0, 4.0), (1, 0))


def test_deriv_field_matches_oracle():
    f = ExprField(NAMES, ["*", ["sin", V("x1")], ["pow", V("v"), 3]])
    df = f.d(2)
    pt = (0.5, 0.0, 0.7, 0.0)
    assert abs(df(*pt) - richardson_diff(lambda p: f(*p), pt, 2)) < 1e-8


def test_deriv_field_through_frozen_direction():
    f = ExprField(NAMES, ["*", V("x1"), ["pow", V("v"), 2]])
    df = f.d(2)  # 2 x1 v
    space = JetSpace(1, (0, None, None, None))  # only x1 ambient
    s = df.eval_jet((2.0, 0.0, 3.0, 0.0), 1, space)
    assert abs(s.value - 12.0) < 1e-14
    assert abs(s.partial((1,)) - 6.0) < 1e-14  # d/dx1 of 2 x1 v


def test_restricted_field_binding():
    f = ExprField(NAMES, ["+", ["*", V("x1"), V("v")], V("y4")])
    r = RestrictedField(f, (("var", 0), ("const", 0.0), ("var", 1), ("const", 5.0)), 2)
    assert r(2.0, 3.0) == 11.0
    j = jet(r, (2.0, 3.0), 1)
    assert j.partial(0) == 3.0
    assert j.partial(1) == 2.0


def test_field_algebra_and_depends():
    a = ExprField(NAMES, V("x1"))
    b = ExprField(NAMES, V("v"))
    combo = (a * b + 2.0) / (1.0 + a * a)
    pt = (0.5, 0.0, 1.5, 0.0)
    assert abs(combo(*pt) - (0.75 + 2.0) / 1.25) < 1e-14
    assert set(combo.depends) == {0, 2}


def test_memo_consistency():
    f = ExprField(NAMES, ["exp", ["*", V("x1"), V("v")]])
    pt = (0.3, 0.0, 0.4, 0.0)
    first = jet(f, pt, 2).partials
    again = jet(f, pt, 2).partials
    clear_eval_cache()
    fresh = jet(f, pt, 2).partials
    assert first == again == fresh


def test_const_field_any_space():
    c = ConstField(3.5, 4)
    s = c.eval_jet((0, 0, 0, 0), 2, JetSpace(2, (0, 1, None, None)))
    assert s.value == 3.5 and s.nvars == 2
