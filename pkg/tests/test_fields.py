from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from discrete_carleman.fields import (DomainError, ExprField, SpecError, WeightSpec, derivative,
                                      hyperbolic_factors, make_weights, regime_check, theta, theta_max)
from discrete_carleman.jets import JetError

PTS = np.array([[0.1, 0.2, 0.0], [0.8, 0.3, 0.0], [0.5, 0.9, 0.0]])


def _sym_rho(s, lam=1.0):
    x, y = sp.symbols("x y")
    psi = ((x + 1) ** 2 + (y + sp.Rational(1, 2)) ** 2) / 8
    return x, y, sp.exp(-s * sp.exp(lam * psi))


@pytest.mark.parametrize("alpha", [(0, 0), (1, 0), (0, 1), (2, 1), (3, 0), (2, 2)])
def test_rho_derivatives_match_sympy(alpha):
    W = make_weights(WeightSpec(s=3.0))
    x, y, rho = _sym_rho(3)
    d = sp.lambdify((x, y), sp.diff(rho, x, alpha[0], y, alpha[1]), "mpmath")
    want = np.array([float(d(p[0], p[1])) for p in PTS])
    np.testing.assert_allclose(derivative(W.rho, alpha, PTS), want, rtol=1e-12)


def test_r_times_rho_is_one_and_phi_positive():
    W = make_weights(WeightSpec(s=5.0, lam=2.0))
    np.testing.assert_allclose((W.r * W.rho)(PTS), 1.0, rtol=1e-14)
    assert np.all(W.phi(PTS) > 1.0)


def test_time_dependent_weight_uses_theta():
    spec = WeightSpec(s_mode="time_dependent", tau=2.0, delta=0.25, T=1.0)
    W = make_weights(spec, margin_t=0.05)
    X = PTS.copy()
    X[:, 2] = [0.0, 0.5, 1.0]
    expect = np.exp(-2.0 * theta(X[:, 2], 0.25, 1.0) * W.phi(X))
    np.testing.assert_allclose(W.rho(X), expect, rtol=1e-14)
    X[0, 2] = 1.2
    with pytest.raises(DomainError):
        W.rho(X)


def test_theta_bounds():
    t = np.linspace(0, 2, 11)
    vals = theta(t, 0.3, 2.0)
    assert vals.max() <= theta_max(0.3, 2.0) * (1 + 1e-15)
    assert vals[0] == pytest.approx(theta_max(0.3, 2.0))
    with pytest.raises(ValueError):
        theta(2.5, 0.3, 2.0)


@pytest.mark.parametrize("kw", [dict(s=0.5), dict(lam=0.5), dict(delta=0.0), dict(delta=0.7), dict(T=-1.0),
                                dict(psi_preset="cubic"), dict(s_mode="x"),
                                dict(s_mode="time_dependent", tau=0.2)])
def test_spec_validation(kw):
    with pytest.raises(SpecError):
        WeightSpec(**kw)


def test_negative_s_is_allowed_and_swaps():
    a = make_weights(WeightSpec(s=2.0))
    b = make_weights(WeightSpec(s=-2.0))
    np.testing.assert_array_equal(a.r(PTS), b.rho(PTS))


def test_domain_margin():
    W = make_weights(WeightSpec(s=2.0), margin=0.1)
    W.rho(np.array([[1.1, -0.1, 0.0]]))
    with pytest.raises(DomainError):
        W.rho(np.array([[1.11, 0.5, 0.0]]))


def test_regime_conditions():
    rep = regime_check(WeightSpec(s=8.0), 0.1)
    assert rep.sh == pytest.approx(0.8)
    assert rep.holds("sh_le_1") and not rep.holds("sh_le_eps")
    spec = WeightSpec(s_mode="time_dependent", tau=4.0, delta=0.25)
    rep = regime_check(spec, 0.05, 0.01)
    assert rep.tau_h == pytest.approx(0.8)
    assert rep.dt_ratio == pytest.approx(0.64)
    assert rep.tau_h_ok and not rep.dt_ok
    with pytest.raises(ValueError):
        regime_check(spec, 0.0)


def test_hyperbolic_factorization():
    spec = WeightSpec(psi_preset="hyperbolic", s=2.0, lam=1.5, beta=0.4)
    W = make_weights(spec)
    tt, pt = hyperbolic_factors(spec)
    X = PTS.copy()
    X[:, 2] = [0.0, 0.3, 0.9]
    np.testing.assert_allclose(W.phi(X), (tt * pt)(X), rtol=1e-14)
    with pytest.raises(SpecError):
        hyperbolic_factors(WeightSpec())


def test_derivative_cap():
    f = ExprField(lambda x: x[0].exp(), 3)
    with pytest.raises(JetError):
        derivative(f, (11, 0), PTS)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 20.0), st.floats(1.0, 3.0))
def test_grad_phi_is_lambda_phi_grad_psi(s, lam):
    W = make_weights(WeightSpec(s=s, lam=lam))
    for i in (0, 1):
        e = [0, 0]
        e[i] = 1
        np.testing.assert_allclose(derivative(W.phi, e, PTS),
                                   lam * W.phi(PTS) * derivative(W.psi, e, PTS), rtol=1e-13)
