import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sp_integrate

from kforge.smoothfn import (
    Antiderivative,
    Blend,
    Constant,
    DomainError,
    Formula,
    IntegrandError,
    InvalidIntervalError,
    Piecewise,
    Step,
    eval_deriv,
    glue,
    integrate,
    make_plateau,
    make_step,
)


def _glue_mp(x):
    x = mpmath.mpf(x)
    h = lambda s: mpmath.e ** (-1 / s)
    return h(x) / (h(x) + h(1 - x))


# ---------------------------------------------------------------- glue kernel

@pytest.mark.parametrize("x", [0.05, 0.2, 0.37, 0.5, 0.81, 0.95])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_glue_matches_high_precision_oracle(x, order):
    mpmath.mp.dps = 40
    want = float(mpmath.diff(_glue_mp, x, order))
    assert glue(np.array([x]), order)[0] == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_glue_plateaus_are_exact():
    x = np.array([-1.0, 0.0, 1.0, 2.0])
    assert glue(x).tolist() == [0.0, 0.0, 1.0, 1.0]
    for order in (1, 2, 3):
        assert np.all(glue(x, order) == 0.0)


@given(st.floats(0.0, 1.0))
def test_glue_symmetry(x):
    assert glue(np.array([x]))[0] + glue(np.array([1 - x]))[0] == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------- make_step

def test_make_step_examples():
    f = make_step(0.2, 0.5, 0, 1)
    assert f(0.2) == 0.0
    assert f(0.5) == 1.0
    assert f(0.35) == pytest.approx(0.5, abs=1e-12)


def test_make_step_rejects_bad_interval():
    with pytest.raises(InvalidIntervalError):
        make_step(0.5, 0.5, 0, 1)
    with pytest.raises(InvalidIntervalError):
        make_step(0.6, 0.5, 0, 1)


@settings(max_examples=50)
@given(a=st.floats(-2, 2), width=st.floats(0.01, 3), lo=st.floats(-5, 5), hi=st.floats(-5, 5))
def test_make_step_plateaus_and_monotone(a, width, lo, hi):
    b = a + width
    f = make_step(a, b, lo, hi)
    assert f(a - 1.0) == lo and f(a) == lo
    assert f(b) == hi and f(b + 1.0) == hi
    vals = f(np.linspace(a, b, 101))
    steps = np.diff(vals)
    if hi > lo:
        assert np.all(steps >= 0)
    elif hi < lo:
        assert np.all(steps <= 0)


def test_step_derivatives_match_central_differences():
    f = make_step(0.2, 0.5, -1.0, 3.0)
    r = np.linspace(0.21, 0.49, 15)
    h = 1e-5
    for order in (1, 2):
        fd = (f.deriv(r + h, order - 1) - f.deriv(r - h, order - 1)) / (2 * h)
        assert np.allclose(f.deriv(r, order), fd, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------- make_plateau

def test_make_plateau_examples():
    f = make_plateau(0, 0, 0.3, 0.5)
    assert f(0.1) == 1.0
    assert f(0.6) == 0.0
    v = f(0.4)
    assert 0 < v < 1
    s = f(np.linspace(0.3, 0.5, 50))
    assert np.all(np.diff(s[1:-1]) < 0)


def test_make_plateau_two_shoulders():
    f = make_plateau(0.1, 0.2, 0.6, 0.8)
    assert f(0.05) == 0.0 and f(0.9) == 0.0
    assert f(0.2) == 1.0 and f(0.4) == 1.0 and f(0.6) == 1.0
    assert f(0.15) == pytest.approx(0.5, abs=1e-12)


def test_make_plateau_ordering_error():
    with pytest.raises(InvalidIntervalError):
        make_plateau(0.3, 0.2, 0.5, 0.6)


# ---------------------------------------------------------------- continuity

@pytest.mark.parametrize("fn", [
    make_step(0.2, 0.5, 0, 1),
    make_plateau(0.1, 0.2, 0.6, 0.8),
    Blend(Constant(2.0), make_step(0.0, 1.0, 0, 1), make_step(0.3, 0.6, 0, 1)),
])
def test_derivatives_continuous_across_breakpoints(fn):
    for b in fn.breakpoints:
        for order in (0, 1, 2):
            left = fn.deriv(b - 1e-9, order)
            right = fn.deriv(b + 1e-9, order)
            scale = max(1.0, abs(left), abs(right))
            assert abs(left - right) <= 1e-6 * scale


def test_constant_segments_are_bit_exact():
    f = Piecewise([0.2, 0.5], [Constant(0.7), make_step(0.2, 0.5, 0.7, 1.0), Constant(1.0)])
    assert np.all(f(np.linspace(0, 0.2, 11)) == 0.7)
    assert np.all(f(np.linspace(0.5, 1.0, 11)) == 1.0)


def test_domain_is_enforced():
    f = Piecewise([0.5], [Constant(0.0), Constant(1.0)])
    with pytest.raises(DomainError):
        f(1.5)


def test_eval_deriv_orders():
    f = make_step(0.0, 1.0, 0, 1)
    assert eval_deriv(f, 0.5, 0) == pytest.approx(0.5)
    assert eval_deriv(f, 0.5, 1) == pytest.approx(float(mpmath.diff(_glue_mp, 0.5, 1)), rel=1e-10)
    with pytest.raises(ValueError):
        eval_deriv(f, 0.5, 3)


def test_fd_fallback_beyond_closed_form():
    f = Formula(lambda r, order: np.sin(r), max_order=0)
    r = np.array([0.3, 1.1])
    assert np.allclose(f.deriv(r, 1), np.cos(r), atol=1e-9)
    assert np.allclose(f.deriv(r, 2), -np.sin(r), atol=1e-7)


# ---------------------------------------------------------------- quadrature

@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("fn,a,b", [
    (np.exp, 0.0, 1.0),
    (lambda x: 1 / np.sqrt(1 - x), 0.2, 0.5),
    (lambda x: np.cos(20 * x) * x**2, -1.0, 2.0),
    (lambda x: glue(x), -0.5, 1.5),
])
def test_integrate_matches_scipy(fn, a, b):
    want, _ = sp_integrate.quad(lambda x: float(fn(np.array([x]))[0]), a, b,
                                epsabs=1e-14, epsrel=1e-14, limit=200)
    assert integrate(fn, a, b, tol=1e-12) == pytest.approx(want, rel=1e-11, abs=1e-13)


def test_integrate_polynomial_exact():
    assert integrate(lambda x: x**28, 0.0, 1.0) == pytest.approx(1 / 29, rel=1e-14)


def test_integrate_reversed_bounds_and_bad_integrand():
    assert integrate(np.exp, 1.0, 0.0) == pytest.approx(-(math.e - 1), rel=1e-13)
    with pytest.raises(IntegrandError):
        integrate(lambda x: np.where(x > 0.3, np.nan, 1.0), 0.0, 1.0)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_antiderivative_matches_scipy_and_ftc():
    g = make_step(0.2, 0.6, 1.0, 3.0)
    F = Antiderivative(g, 0.0, 1.0)
    for r in (0.1, 0.33, 0.5, 0.77, 1.0):
        want, _ = sp_integrate.quad(lambda s: g(s), 0.0, r, epsabs=1e-14, epsrel=1e-14,
                                    points=[0.2, 0.6] if r > 0.6 else None)
        assert F(r) == pytest.approx(want, rel=1e-12, abs=1e-14)
    r = np.linspace(0.05, 0.95, 7)
    assert np.array_equal(F.deriv(r, 1), g(r))


def test_step_examples_are_symmetric_to_machine_precision():
    # the closed form returns 0.4999999999999998 at the midpoint
    assert abs(Step(0.2, 0.5, 0, 1)(0.35) - 0.5) < 1e-15
