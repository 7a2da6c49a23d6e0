from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_carleman.asymptotics import sample_points
from discrete_carleman.discrete import (BiIndex, DiscreteOpPipeline, MultiIndex, ReachError, apply_bi, avg,
                                        avg_iterated, avg_power_terms, bi_avg, bi_diff, binomial,
                                        check_avg_leibniz_even, check_leibniz, check_margin,
                                        check_product_rules, compensated_sum, diff, diff_iterated, dt_diff,
                                        odd_moment_sum, parse_pipeline, tepper_expected, tepper_sum,
                                        time_translate, translate)
from discrete_carleman.fields import DerivField, ExprField, WeightSpec, make_weights

X = sample_points(20, 2, seed=3)


def expfield(a=0.7, b=-0.4):
    return ExprField(lambda x: (a * x[0] + b * x[1]).exp(), 3, name="e")


def test_diff_of_exponential_is_exact_symbol():
    # D^n e^{ax} = (2 sinh(ah/2)/h)^n e^{ax}; A^n e^{ax} = cosh(ah/2)^n e^{ax}
    a, h = 0.7, 0.1
    f = expfield(a, 0.0)
    base = np.exp(a * X[:, 0])
    for n in range(0, 6):
        sym_d = (2 * math.sinh(a * h / 2) / h) ** n
        sym_a = math.cosh(a * h / 2) ** n
        # roundoff of an n-th difference is about eps (2/h)^n |f|
        atol = 4e-16 * (2 / h) ** n * base.max()
        np.testing.assert_allclose(diff(f, 0, n, h)(X), sym_d * base, rtol=0, atol=atol)
        np.testing.assert_allclose(avg(f, 0, n, h)(X), sym_a * base, rtol=1e-14)


def test_diff_of_monomial_gives_factorial():
    for n in range(1, 7):
        f = ExprField(lambda x, n=n: x[0] ** n, 3)
        np.testing.assert_allclose(diff(f, 0, n, 0.25)(X), math.factorial(n), rtol=1e-12)


def test_collapsed_and_iterated_stencils_agree():
    f = expfield()
    fmax = f(X).max()
    for n in (1, 2, 3):
        np.testing.assert_allclose(diff(f, 1, n, 0.2)(X), diff_iterated(f, 1, n, 0.2)(X), rtol=0,
                                   atol=4e-16 * 10 ** n * fmax)
        np.testing.assert_allclose(avg(f, 1, n, 0.2)(X), avg_iterated(f, 1, n, 0.2)(X), rtol=1e-14)


def test_stencil_composition_is_exact_convolution():
    f = expfield()
    g = diff(avg(diff(f, 0, 1, 0.2), 0, 1, 0.2), 0, 1, 0.2)
    assert g.base is f
    assert g.offsets == {(3, 0, 0): Fraction(1, 2), (1, 0, 0): Fraction(-1, 2),
                         (-1, 0, 0): Fraction(-1, 2), (-3, 0, 0): Fraction(1, 2)}
    assert g.scale == pytest.approx(0.2 ** -2)


def test_translation_by_half_steps():
    f = expfield()
    h = 0.3
    t = translate(f, 0, 3, h)
    np.testing.assert_allclose(t(X), f(X + np.array([1.5 * h, 0, 0])), rtol=1e-15)


def test_time_operators():
    f = ExprField(lambda x: x[2] ** 2, 3)
    dt = 0.1
    Xt = X.copy()
    Xt[:, 2] = 0.5
    np.testing.assert_allclose(dt_diff(f, dt)(Xt), 2 * 0.5 + dt, rtol=1e-13)
    np.testing.assert_allclose(dt_diff(f, dt, "centered_half")(Xt), 1.0, rtol=1e-13)
    np.testing.assert_allclose(time_translate(f, dt, -1)(Xt), 0.16, rtol=1e-14)
    with pytest.raises(ValueError):
        dt_diff(f, dt, "backward")


def test_bi_index_ops_and_direction_check():
    f = expfield()
    k = BiIndex(1, 2)
    np.testing.assert_allclose(bi_diff(f, k, 0.2)(X), diff(diff(f, 1, 2, 0.2), 0, 1, 0.2)(X), rtol=1e-13)
    np.testing.assert_allclose(bi_avg(f, k, 0.2)(X), avg(avg(f, 1, 2, 0.2), 0, 1, 0.2)(X), rtol=1e-14)
    with pytest.raises(ValueError):
        apply_bi(f, BiIndex(1, 0, 0, 1), BiIndex(1, 0, 1, 0), 0.2)
    with pytest.raises(ValueError):
        BiIndex(1, 1, 0, 0)
    assert MultiIndex((1, 2)).order == 3
    assert BiIndex(2, 1, 0, 1).as_multi(3).entries == (2, 1, 0)


def test_compensated_sum_beats_naive_cancellation():
    terms = np.array([[1e16], [1.0], [-1e16], [1.0]])
    assert compensated_sum(terms)[0] == 2.0


def test_reach_and_margin():
    W = make_weights(WeightSpec(s=2), margin=0.1)
    g = diff(W.rho, 0, 4, 0.1)
    assert g.reach()[0] == pytest.approx(0.2)
    check_margin(g, 0.2)
    with pytest.raises(ReachError):
        check_margin(g, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.5), st.integers(0, 1), st.integers(0, 3))
def test_avg_squared_is_identity_plus_diff_squared(h, i, m):
    # A^2 = I + (h^2/4) D^2, hence A^{2m} w = sum_j C(m,j) (h/2)^{2j} D^{2j} w
    f = expfield()
    lhs = avg(f, i, 2 * m, h)(X)
    rhs = compensated_sum(np.array(avg_power_terms(f, i, m, h, X)))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.5), st.integers(1, 3), st.integers(1, 3))
def test_operators_in_different_directions_commute(h, n, m):
    f = expfield()
    a = diff(avg(f, 1, m, h), 0, n, h)(X)
    b = avg(diff(f, 0, n, h), 1, m, h)(X)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_alternative_average_power_rule_fails_from_m2():
    u, v = expfield(), ExprField(lambda x: (x[0] - x[1]).sin() + 2.0, 3)
    assert check_avg_leibniz_even(u, v, 0, 1, 0.2, X, form="alternative").passed
    rep = check_avg_leibniz_even(u, v, 0, 2, 0.2, X, form="alternative")
    assert not rep.passed
    assert rep.max_rel_residual > 1e-3
    assert check_avg_leibniz_even(u, v, 0, 2, 0.2, X).passed


def test_product_and_leibniz_rules_on_carleman_weights():
    W = make_weights(WeightSpec(s=2), margin=1.0)
    for rep in check_product_rules(W.r, W.rho, 0, 0.2, X):
        assert rep.passed, rep
    for n in range(1, 5):
        rep = check_leibniz(W.r, W.rho, 1, n, 0.2, X)
        assert rep.passed, rep


def test_leibniz_detects_a_wrong_identity():
    u, v = expfield(), expfield(-0.3, 0.9)
    # swapping the roles of A and D in the product rule must fail
    lhs = diff(u * v, 0, 1, 0.2)(X)
    wrong = avg(u, 0, 1, 0.2)(X) * avg(v, 0, 1, 0.2)(X)
    assert np.max(np.abs(lhs - wrong)) > 1e-3


@pytest.mark.parametrize("n", range(0, 13))
def test_tepper_sums_are_exact(n):
    for r in range(0, n + 1):
        for x in (-1.5, 0.0, 2.25, Fraction(7, 3)):
            assert tepper_sum(n, r, x) == tepper_expected(n, r)
    assert odd_moment_sum(n) == 0


def test_tepper_float_path_and_binomial():
    assert tepper_sum(6, 6, 0.3, exact=False) == pytest.approx(720.0, rel=1e-12)
    assert binomial(10, 3) == 120
    assert binomial(3, 5) == 0


def test_pipeline_parser_matches_direct_composition():
    W = make_weights(WeightSpec(s=2), margin=1.0)
    h = 0.1
    f = parse_pipeline("A[1,1]D[1,0]d^(1,0)( r * A[0,1]D[0,1] rho )", {"r": W.r, "rho": W.rho}, h)
    inner = W.r * bi_avg(bi_diff(W.rho, BiIndex(0, 1), h), BiIndex(0, 1), h)
    direct = bi_avg(bi_diff(DerivField(inner, (1, 0)), BiIndex(1, 0), h), BiIndex(1, 1), h)
    np.testing.assert_allclose(f(X), direct(X), rtol=1e-13)
    sq = parse_pipeline("r^2 * rho", {"r": W.r, "rho": W.rho}, h)
    np.testing.assert_allclose(sq(X), W.r(X), rtol=1e-13)


@pytest.mark.parametrize("bad", ["A[1,1](r", "r^0", "q", "Dt r", "A[1]r"])
def test_pipeline_parser_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        parse_pipeline(bad, {"r": expfield()}, 0.1)


def test_op_pipeline_reach_and_rescaling():
    p = DiscreteOpPipeline((("A", 0, 2), ("D", 1, 3), ("T", 0, -1)), 0.1)
    assert p.half_step_reach == 6
    f = expfield()
    np.testing.assert_allclose(p.apply(f)(X), avg(diff(translate(f, 0, -1, 0.1), 1, 3, 0.1), 0, 2, 0.1)(X))
    assert p.with_h(0.05).h == 0.05
    with pytest.raises(ValueError):
        DiscreteOpPipeline((("Dt", "forward"),), 0.1)
