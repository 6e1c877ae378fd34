"""Derivative engine: exactness, symmetry, composition, domain handling."""

import math

import numpy as np
import pytest

from finslergrav.expr import ExprField
from finslergrav.fields import jet
from finslergrav.taylor import (DomainBox, DomainError, TSeries,
                                UnsupportedOrderError)

from oracles import richardson_diff, richardson_diff2

V = lambda n: ["var", n]


def test_polynomial_jet_closed_form():
    f = ExprField(("x1", "x2"), ["*", ["pow", V("x1"), 2], V("x2")])
    j = jet(f, (3.0, 2.0), 2)
    assert j.value == 18.0
    assert j.partial(0) == 12.0
    assert j.partial(1) == 9.0
    assert j.partial(0, 0) == 4.0
    assert j.partial(0, 1) == 6.0
    assert j.partial(1, 1) == 0.0


def test_sine_taylor_coefficients():
    f = ExprField(("x",), ["sin", V("x")])
    j = jet(f, (0.0,), 3)
    assert j.value == 0.0
    assert j.partial(0) == 1.0
    assert j.partial(0, 0) == 0.0
    assert j.partial(0, 0, 0) == -1.0


SMOOTH_LIBRARY = [
    ExprField(("x", "y"), ["+", ["pow", V("x"), 3], ["*", V("x"), V("y")]]),
    ExprField(("x", "y"), ["exp", ["*", 0.3, ["+", V("x"), V("y")]]]),
    ExprField(("x", "y"), ["sin", ["*", V("x"), V("y")]]),
    ExprField(("x", "y"), ["cos", ["-", V("x"), ["*", 0.5, V("y")]]]),
    ExprField(("x", "y"), ["log", ["+", 3.0, ["*", V("x"), V("x")]]]),
    ExprField(("x", "y"), ["sqrt", ["+", 2.0, ["*", V("y"), V("y")]]]),
    ExprField(("x", "y"), ["/", V("x"), ["+", 2.0, ["pow", V("y"), 2]]]),
    ExprField(("x", "y"), ["pow", ["+", 1.5, ["sin", V("x")]], 3]),
    ExprField(("x", "y"), ["*", ["exp", ["*", 0.2, V("x")]], ["cos", V("y")]]),
    ExprField(("x", "y"), ["+", 1.0, ["*", 0.1, ["pow", ["+", V("x"), V("y")], 4]]]),
    ExprField(("x", "y", "z"), ["*", V("z"), ["sin", ["+", V("x"), V("y")]]]),
    ExprField(("x", "y", "z"), ["exp", ["*", 0.1, ["*", V("x"), ["*", V("y"), V("z")]]]]),
    ExprField(("x", "y", "z"), ["/", 1.0, ["+", 2.0, ["cos", V("z")]]]),
    ExprField(("x", "y", "z"), ["log", ["+", 4.0, V("x")]]),
    ExprField(("x", "y", "z"), ["sqrt", ["+", 5.0, ["*", V("y"), V("z")]]]),
    ExprField(("x",), ["pow", ["+", 2.0, V("x")], 0.5]),
    ExprField(("x",), ["*", V("x"), ["exp", ["-", 0.0, ["*", V("x"), V("x")]]]]),
    ExprField(("x",), ["sin", ["cos", V("x")]]),
    ExprField(("x", "y"), ["*", ["+", V("x"), 2.0], ["log", ["+", 3.0, V("y")]]]),
    ExprField(("x", "y"), ["-", ["pow", V("x"), 4], ["pow", V("y"), 3]]),
]


@pytest.mark.parametrize("idx", range(len(SMOOTH_LIBRARY)))
def test_jet_matches_richardson_differences(idx):
    """Orders 1 and 2 agree with extrapolated central differences on the library."""
    f = SMOOTH_LIBRARY[idx]
    rng = np.random.default_rng(100 + idx)
    pt = tuple(rng.uniform(0.2, 0.8, size=f.arity))
    j = jet(f, pt, 2)

    def plain(p):
        return f(*p)

    for v in range(f.arity):
        exact = j.partial(v)
        approx = richardson_diff(plain, pt, v)
        assert abs(exact - approx) <= 1e-6 * max(1.0, abs(exact))
        for w in range(v, f.arity):
            exact2 = j.partial(v, w)
            approx2 = richardson_diff2(plain, pt, v, w)
            assert abs(exact2 - approx2) <= 1e-6 * max(1.0, abs(exact2))


@pytest.mark.parametrize("idx", range(0, len(SMOOTH_LIBRARY), 3))
def test_mixed_partial_symmetry(idx):
    f = SMOOTH_LIBRARY[idx]
    rng = np.random.default_rng(300 + idx)
    pt = tuple(rng.uniform(0.2, 0.7, size=f.arity))
    j = jet(f, pt, 4 if f.arity <= 2 else 3)
    for v in range(f.arity):
        for w in range(f.arity):
            a = j.partial(v, w)
            b = j.partial(w, v)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_composition_matches_closed_form():
    # f(g(x)) with f = sin, g = x^2 + 1: derivatives of sin(x^2 + 1)
    f = ExprField(("x",), ["sin", ["+", ["pow", V("x"), 2], 1.0]])
    x0 = 0.7
    j = jet(f, (x0,), 3)
    u = x0 * x0 + 1.0
    d1 = math.cos(u) * 2 * x0
    d2 = -math.sin(u) * (2 * x0) ** 2 + math.cos(u) * 2.0
    d3 = (-math.cos(u) * (2 * x0) ** 3 - math.sin(u) * 3 * (2 * x0) * 2.0)
    assert abs(j.partial(0) - d1) < 1e-12
    assert abs(j.partial(0, 0) - d2) < 1e-12
    assert abs(j.partial(0, 0, 0) - d3) < 1e-12


def test_division_and_power_series():
    f = ExprField(("x",), ["/", 1.0, ["+", 1.0, V("x")]])
    j = jet(f, (0.5,), 4)
    for k, expect in enumerate([1 / 1.5, -1 / 1.5 ** 2, 2 / 1.5 ** 3,
                                -6 / 1.5 ** 4, 24 / 1.5 ** 5]):
        got = j.value if k == 0 else j.partial(*([0] * k))
        assert abs(got - expect) < 1e-12


def test_abs_guard_raises_near_zero():
    f = ExprField(("x",), ["abs", V("x")])
    assert f(2.0) == 2.0
    assert f(-2.0) == 2.0
    with pytest.raises(DomainError):
        f(1e-13)


def test_jet_order_cap_and_domain_checks():
    f = ExprField(("x", "y"), ["*", V("x"), V("y")])
    with pytest.raises(UnsupportedOrderError):
        jet(f, (1.0, 1.0), 5)
    box = DomainBox(((-1.0, 1.0), (-1.0, 1.0)))
    with pytest.raises(DomainError):
        jet(f, (2.0, 0.0), 1, domain=box)
    fiber_box = DomainBox(((-1.0, 1.0), (-1.0, 1.0)), fiber_indices=(1,), null_eps=1e-3)
    with pytest.raises(DomainError):
        jet(f, (0.5, 1e-4), 1, domain=fiber_box)
    assert fiber_box.contains((0.5, 0.5))
    assert not fiber_box.contains((0.5, 1e-4))


def test_determinism_bit_identical():
    f = SMOOTH_LIBRARY[2]
    pt = (0.37, 0.81)
    a = jet(f, pt, 3).partials
    b = jet(f, pt, 3).partials
    assert a == b


def test_series_project():
    s = TSeries.variable(0, 2.0, 2, 2) * TSeries.variable(1, 3.0, 2, 2)
    proj = s.project((0, None), 1)
    # dropping the second direction keeps the value and d/dx = y0
    assert proj.value == 6.0
    assert proj.partial((1,)) == 3.0
    assert all((k >> 4) == 0 for k in proj.c)
