from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from discrete_carleman.jets import Jet, JetError, coordinate_jets, jet_exp, jet_mul, jet_var

PTS = np.array([[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]])


def _sym_derivs(expr, alpha, pts):
    x, y = sp.symbols("x y")
    d = sp.diff(expr(x, y), x, alpha[0], y, alpha[1]) if sum(alpha) else expr(x, y)
    f = sp.lambdify((x, y), d, "mpmath")
    return np.array([float(f(*p)) for p in pts])


@pytest.mark.parametrize("alpha", [(0, 0), (1, 0), (0, 2), (2, 1), (3, 3), (0, 5)])
def test_exp_sin_product_matches_sympy(alpha):
    X, Y = coordinate_jets(PTS, (0, 1), 6)
    f = (0.5 * X * Y).exp() * (X - 2 * Y).sin()
    expect = _sym_derivs(lambda x, y: sp.exp(x * y / 2) * sp.sin(x - 2 * y), alpha, PTS)
    np.testing.assert_allclose(f.derivative(alpha), expect, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("alpha", [(1, 0), (2, 2), (4, 0)])
def test_reciprocal_and_powers(alpha):
    X, Y = coordinate_jets(PTS, (0, 1), 4)
    f = (2.0 + X * X + Y).reciprocal() + (3.0 + X) ** 3 * Y ** 2
    expect = _sym_derivs(lambda x, y: 1 / (2 + x ** 2 + y) + (3 + x) ** 3 * y ** 2, alpha, PTS)
    np.testing.assert_allclose(f.derivative(alpha), expect, rtol=1e-12, atol=1e-12)


def test_cap_is_enforced():
    (x,) = jet_var(PTS[:, :1], [0], 2)
    with pytest.raises(JetError):
        x.coeff((3,))


def test_inactive_dimension_rejected():
    X, Y = coordinate_jets(PTS, (0,), 3)
    with pytest.raises(JetError):
        (X * Y).derivative((0, 1))


def test_duplicate_active_dims_rejected():
    with pytest.raises(JetError):
        jet_var(PTS, [0, 0], 2)


def test_ufunc_protocol_disabled():
    (x,) = jet_var(PTS[:, :1], [0], 2)
    with pytest.raises(TypeError):
        np.exp(x)


def test_differentiate_then_restrict():
    X, Y = coordinate_jets(PTS, (0, 1), 5)
    f = (X * Y).exp()
    g = f.differentiate((1, 0)).restrict((1,), 2)
    # d_y^2 d_x exp(xy) = (2x + x^2 y) exp(xy)
    x, y = PTS[:, 0], PTS[:, 1]
    np.testing.assert_allclose(g.derivative((0, 2)), (2 * x + x * x * y) * np.exp(x * y), rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 6))
def test_exp_of_linear_has_geometric_coefficients(a, x0, n):
    (x,) = jet_var(np.array([[x0]]), [0], 6)
    e = jet_exp(a * x)
    expect = a ** n * math.exp(a * x0)
    assert e.derivative((n,))[0] == pytest.approx(expect, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_mul_is_commutative_and_matches_polynomial_product(p, q):
    c = np.array([[0.4]])
    (x,) = jet_var(c, [0], 4)
    P = p[0] + p[1] * x + p[2] * x * x
    Q = q[0] + q[1] * x + q[2] * x * x
    a, b = jet_mul(P, Q), jet_mul(Q, P)
    prod = np.polynomial.Polynomial(p) * np.polynomial.Polynomial(q)
    for k in range(5):
        want = prod.deriv(k)(0.4) if k else prod(0.4)
        assert a.derivative((k,))[0] == pytest.approx(want, rel=1e-12, abs=1e-12)
        assert a.derivative((k,))[0] == pytest.approx(b.derivative((k,))[0], rel=1e-14, abs=1e-14)


def test_constant_jet_has_zero_derivatives():
    j = Jet.constant(2.5, PTS, 3, (0, 1))
    assert np.all(j.value == 2.5)
    assert np.all(j.derivative((1, 1)) == 0)
