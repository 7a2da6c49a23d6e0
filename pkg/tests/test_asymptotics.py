from __future__ import annotations

import numpy as np
import pytest

from discrete_carleman import asymptotics as asy
from discrete_carleman.fields import WeightSpec

H_SEQ = [2.0 ** -k for k in range(4, 10)]

# |r A^l D^k d^alpha rho - r d^(k+alpha) rho| for alpha = (1,0), k = l = (1,1), s = 4, h = 2^-6,
# at sample_points(5, seed=0); computed with sympy derivatives and 50-digit mpmath stencils
WAD_ORACLE = [6.0355643610059766e-5, 1.4737197623395513e-3, 1.0294591040651586e-4,
              1.0031787475469939e-3, 3.0862973134482036e-4]


def test_weighted_avg_diff_matches_high_precision_oracle():
    c = asy.get_claim("weighted-avg-diff")
    X = asy.sample_points(5, 2, seed=0)
    got = asy.defect_values(c, c.default_env().with_(s=4.0), 2.0 ** -6, None, X)
    # stencil roundoff is about eps |r d rho| / h^2, i.e. 1e-8 relative here
    np.testing.assert_allclose(got, WAD_ORACLE, rtol=2e-7)


def test_registry_contents():
    ids = set(asy.REGISTRY)
    for cid in ("weight-deriv-bound", "weight-deriv-shifted-bound", "weight-sq-deriv-bound", "weighted-avg-diff",
                "avg-diff-of-weight-deriv", "avg-diff-of-weight-sq", "avg-diff-shifted-bound",
                "avg-diff-sq-shifted-bound", "nested-avg-diff", "nested-avg-diff-sq", "time-deriv-avg-diff",
                "time-deriv-nested-bound", "time-diff-avg-diff"):
        assert cid in ids
    assert asy.get_claim("nested-avg-diff.alt-leading").variant_of == "nested-avg-diff"
    with pytest.raises(KeyError):
        asy.get_claim("no-such-claim")


def test_sigma_max_and_terms():
    c = asy.get_claim("weighted-avg-diff")
    assert c.sigma_max == 3
    assert [t.describe() for t in c.terms()] == ["s^4 h^2", "s^4 h^2", "s^5 h^2"]
    c2 = c.with_indices(alpha=(2, 0))
    assert c2.sigma_max == 4
    with pytest.raises(KeyError):
        c.with_indices(zeta=(1, 0))


def test_error_term_value():
    t = asy.ErrorTerm(3, 2, dt_exp=1, T_pow=2, theta_pow=1)
    assert t.value(2.0, 0.1, 0.5, 3.0, 4.0) == pytest.approx(8 * 0.01 * 0.5 * 9 * 4)
    assert t.describe() == "s^3 h^2 dt^1 T^2 theta^1"


def test_sample_points_are_deterministic_and_in_box():
    a = asy.sample_points(50, 2, seed=7)
    b = asy.sample_points(50, 2, seed=7)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (50, 3) and np.all(a[:, 2] == 0)
    assert np.all((a[:, :2] > 0) & (a[:, :2] < 1))
    t = asy.sample_points(10, 2, seed=1, time_range=(0.2, 0.4))
    assert np.all((t[:, 2] >= 0.2) & (t[:, 2] <= 0.4))


def test_fit_loglog_recovers_power_law():
    h = np.array(H_SEQ)
    slope, resid = asy.fit_loglog(h, 3.0 * h ** 2)
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert resid < 1e-12


@pytest.mark.parametrize("cid", ["weighted-avg-diff", "nested-avg-diff", "nested-avg-diff-sq",
                                 "avg-diff-of-weight-deriv", "avg-diff-of-weight-sq"])
def test_h_order_is_two(cid):
    rep = asy.fit_h_order(asy.get_claim(cid), h_seq=H_SEQ, s=2.0)
    assert rep.verdict == "PASS"
    assert 1.85 <= rep.statistic["slope"] <= 2.25
    assert rep.statistic["residual"] <= 0.05


def test_wrong_leading_terms_are_detected():
    for cid in ("weighted-avg-diff.wrong-order", "nested-avg-diff.alt-leading"):
        rep = asy.fit_h_order(asy.get_claim(cid), h_seq=H_SEQ)
        assert rep.verdict == "FAIL"
        assert abs(rep.statistic["slope"]) < 0.1


def test_disambiguation_selects_corrected_leading_term():
    c = asy.get_claim("nested-avg-diff")
    out = asy.disambiguate([c, asy.get_claim("nested-avg-diff.alt-leading")], h_seq=H_SEQ)
    assert out["supported"] == ["nested-avg-diff"]


def test_fixed_sh_policy():
    c = asy.get_claim("avg-diff-of-weight-deriv")
    rep = asy.fit_h_order(c, s_policy="fixed_sh", sh=0.25, h_seq=[2.0 ** -k for k in range(3, 7)])
    assert rep.statistic["expected"] == -c.sigma_max
    assert rep.verdict == "PASS"


def test_regime_refusal():
    c = asy.get_claim("weighted-avg-diff")
    with pytest.raises(asy.RegimeError):
        asy.measure_defect(c, WeightSpec(s=40.0), 0.05)
    t = asy.get_claim("time-diff-avg-diff")
    env = WeightSpec(s_mode="time_dependent", tau=1.0)
    with pytest.raises(asy.RegimeError):
        asy.measure_defect(t, env, 2.0 ** -4, dt=0.6)


def test_environment_mismatch():
    with pytest.raises(ValueError):
        asy.measure_defect(asy.get_claim("time-deriv-avg-diff"), WeightSpec(s=2.0), 0.05)
    with pytest.raises(ValueError):
        asy.measure_defect(asy.get_claim("weighted-avg-diff"), WeightSpec(s_mode="time_dependent"), 0.05)


def test_fit_argument_validation():
    c = asy.get_claim("weighted-avg-diff")
    with pytest.raises(ValueError):
        asy.fit_h_order(c, h_seq=H_SEQ[:3])
    with pytest.raises(ValueError):
        asy.fit_h_order(c, h_seq=H_SEQ, s_policy="other")
    with pytest.raises(ValueError):
        asy.fit_h_order(asy.get_claim("weight-deriv-bound"), h_seq=H_SEQ)
    with pytest.raises(ValueError):
        asy.bounded_ratio(c, s_values=(1, 2, 4))


def test_bound_ratio_scales_exactly_for_weight_sq():
    # r^2 d^alpha rho d^beta rho = s^2 (d phi)^2, so the ratio to s^2 does not move
    rep = asy.bounded_ratio(asy.get_claim("weight-sq-deriv-bound"))
    assert rep.statistic["max_over_min"] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("cid", sorted(asy.REGISTRY))
def test_swap_symmetry_is_exact(cid):
    c = asy.get_claim(cid)
    env = c.default_env()
    h = 2.0 ** -5
    dt = asy.dt_for(c, h, None)
    X = asy.claim_points(c, env, n=10, dt_max=dt or 0.0)
    a = asy.defect_values(c, env, h, dt, X)
    b = asy.defect_values(c, env, h, dt, X, swap=True)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_report_json_carries_statement():
    rep = asy.fit_h_order(asy.get_claim("weighted-avg-diff"), h_seq=H_SEQ)
    js = rep.to_json()
    assert js["statement"].startswith("r A^l D^k d^alpha rho")
    assert js["environment"]["lambda"] == 1.0
    assert len(js["samples"]) == len(H_SEQ)
