"""Acceptance criteria, one test each.

Every test records a ``CRITERION n: PASS|FAIL ...`` line; the lines are
printed in the pytest terminal summary and when this file is run directly.
"""

from __future__ import annotations

import time

import pytest

from discrete_carleman import asymptotics as asy
from discrete_carleman import cli, runner
from discrete_carleman.fields import regime_check

from conftest import ACCEPTANCE

H_SEQ = [2.0 ** -k for k in range(4, 10)]


def _record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)


def test_criterion_1_exact_identities():
    t0 = time.perf_counter()
    res = runner.run_identities(h=0.2, npoints=100)
    dt = time.perf_counter() - t0
    worst = res.summary["max_rel_residual"]
    fields = {r["fields"] for r in res.rows}
    ok = res.passed and worst <= 1e-12 and dt <= 10 and {"poly", "exp_sin", "r_rho"} <= fields
    orders = {(r["identity"].split("_n")[0], r["order"]) for r in res.rows}
    ok = ok and ("D_leibniz", 4) in orders
    _record(1, ok, f"max rel residual {worst:.2e} over {len(res.rows)} identity checks, {dt:.1f}s")
    assert ok


def test_criterion_2_tepper_sums():
    res = runner.run_tepper(max_n=12)
    ok = res.passed and res.summary["max_abs_error"] <= 1e-9
    _record(2, ok, f"max abs error {res.summary['max_abs_error']:.1e} over {len(res.rows)} sums")
    assert ok


def test_criterion_3_remainder_audits():
    t0 = time.perf_counter()
    res = runner.run_audits(npoints=20)
    dt = time.perf_counter() - t0
    single = [r for r in res.rows if r["kind"] in ("D", "A")]
    fields = {r["field"] for r in single}
    ns = {r["n"] for r in single}
    ok = (res.passed and dt <= 60 and all(r["verdict"] == "PASS" for r in single)
          and fields >= {"exp_x1", "exp_x2", "rho"} and ns == {1, 2, 3})
    cross_failures = [r for r in res.rows if r["kind"] not in ("D", "A") and r["verdict"] == "FAIL"]
    _record(3, ok, f"{len(single)} single-direction audits pass; cross: corrected kernels pass, "
                   f"{len(cross_failures)} alternative-kernel cases in the ledger, {dt:.1f}s")
    assert ok


def test_criterion_4_h_convergence():
    t0 = time.perf_counter()
    claims = ("weighted-avg-diff", "nested-avg-diff", "nested-avg-diff-sq", "avg-diff-of-weight-deriv")
    res = runner.run_convergence(claims, H_SEQ, s=2.0)
    dt = time.perf_counter() - t0
    stats = res.summary
    ok = dt <= 120 and all(1.85 <= stats[c]["slope"] <= 2.25 and stats[c]["residual"] <= 0.05 for c in claims)
    slopes = ", ".join(f"{c} {stats[c]['slope']:.3f}" for c in claims)
    _record(4, ok, f"slopes {slopes}; {dt:.1f}s")
    assert ok


def test_criterion_5_s_scaling():
    claims = ("weighted-avg-diff", "weight-deriv-bound", "weight-sq-deriv-bound")
    c = asy.get_claim("weighted-avg-diff")
    assert c.indices["alpha"] == (1, 0) and (c.indices["k"].k_i, c.indices["k"].k_j) == (1, 1)
    res = runner.run_bounded_ratio(claims, s_values=(1, 2, 4, 8, 16, 32), sh_values=(0.5, 0.25))
    spreads = {cid: res.summary[cid]["max_over_min"] for cid in claims}
    ok = all(v <= 50 for v in spreads.values())
    _record(5, ok, "max/min " + ", ".join(f"{k} {v:.2f}" for k, v in spreads.items()))
    assert ok


def test_criterion_6_time_dependent():
    td = asy.get_claim("time-deriv-avg-diff")
    tf = asy.get_claim("time-diff-avg-diff")
    assert td.fit_normalized
    env = td.default_env()
    for h in H_SEQ:
        assert regime_check(env, h).tau_h_ok
        rep = regime_check(env, h, h * h)
        assert rep.tau_h_ok and rep.dt_ok
    r1 = asy.fit_h_order(td, env, H_SEQ)
    r2 = asy.fit_h_order(tf, tf.default_env(), H_SEQ)
    s1, s2 = r1.statistic["slope"], r2.statistic["slope"]
    ok = (1.85 <= s1 <= 2.25 and 1.85 <= s2 <= 2.25 and r1.statistic["residual"] <= 0.05
          and r2.statistic["residual"] <= 0.05 and all(s["dt"] == s["h"] ** 2 for s in r2.samples))
    _record(6, ok, f"time-deriv-avg-diff slope {s1:.3f}, time-diff-avg-diff (dt = h^2) slope {s2:.3f}")
    assert ok


def test_criterion_7_counterexample():
    t0 = time.perf_counter()
    res = runner.run_counterexample((7, 15, 31, 63), "1:2,5:6", T=1.0)
    dt = time.perf_counter() - t0
    rows = res.rows
    ok = (res.passed and dt <= 5
          and all(r["eigen_residual"] == 0 for r in rows)
          and all(r["scheme_residual_rel"] <= 1e-11 for r in rows)
          and all(r["omega_norm"] == 0.0 for r in rows)
          and res.summary["decay_slope_rel_error"] <= 1e-6)
    worst = max(r["scheme_residual_rel"] for r in rows)
    _record(7, ok, f"eigen residual 0, scheme residual <= {worst:.1e}, omega norm 0, "
                   f"slope rel error {res.summary['decay_slope_rel_error']:.1e}, {dt:.2f}s")
    assert ok


def test_criterion_8_swap_symmetry():
    res = runner.run_swap()
    ok = res.passed and res.summary["max_rel_diff"] <= 1e-12
    n = len({r["claim"] for r in res.rows})
    _record(8, ok, f"max rel difference {res.summary['max_rel_diff']:.1e} over {n} claims")
    assert ok


def test_criterion_9_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    rc1 = cli.main(["all", "--seed", "0", "--out", str(a)])
    rc2 = cli.main(["all", "--seed", "0", "--out", str(b), "--jobs", "3"])
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    ok = same and rc1 == rc2 == 0 and len(names) > 0
    _record(9, ok, f"{len(names)} report files byte-identical across two runs")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
