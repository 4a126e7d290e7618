"""Acceptance gates for the full pipeline.

Each test is one pass/fail gate against frozen reference statistics or a
pinned tolerance: benchmark means and oracle risks for the decay models,
bandwidth recovery on the exactly banded model, the dual-formula identity,
unbiasedness and asymptotic normality of the criterion, loss decay rates,
and byte-level determinism of reports.  Everything is seeded, so a failure
reproduces exactly.
"""

import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from surecov import (
    Banding,
    CzzTaper,
    ExperimentConfig,
    PolyDecay,
    band_sums,
    build_sigma,
    cholesky_factor,
    clt_experiment,
    consistency_experiment,
    default_tau_grid,
    derive_seed,
    exact_sure_variance,
    oracle_ratio_experiment,
    profile_values,
    rate_experiment,
    risk_profile,
    run_experiment,
    sure_constants,
    sure_eq2_reference,
    sure_profile,
    table1_config,
    table2_config,
    var_n,
)

# Frozen benchmark targets for the tuned banding estimator at n=250, p=500,
# 100 replications: (mean loss, +-3 SE band, oracle min risk, 5% rel tol).
# The slow-decay variant (alpha=0.1) carries the larger loss scale.
BENCHMARKS = {
    "model1-a01": (57.57, 3 * 0.89, 58.83, 0.05),
    "model1-a05": (30.20, 3 * 0.67, 30.16, 0.05),
    "model2-r095": (273.48, 3 * 6.51, 275.06, 0.05),
    "model2-r05": (22.675, 3 * 0.71, 22.37, 0.05),
}


def _check_benchmark(variant):
    mean_ref, band, risk_ref, risk_tol = BENCHMARKS[variant]
    report = run_experiment(table1_config(variant, base_seed=2019))
    stats = report.results["per_c"]["2"]
    oracle = report.results["oracle"]
    assert abs(stats["mean_loss"] - mean_ref) <= band, (
        f"{variant}: mean loss {stats['mean_loss']:.4f} outside {mean_ref} +- {band:.2f}"
    )
    assert abs(oracle["min_risk"] - risk_ref) <= risk_tol * risk_ref, (
        f"{variant}: oracle risk {oracle['min_risk']:.4f} not within "
        f"{risk_tol:.0%} of {risk_ref}"
    )


@lru_cache(maxsize=None)
def _banded_consistency(p):
    return consistency_experiment(table2_config(p=p, base_seed=2019))


def test_01_poly_decay_slow_mean_loss_and_min_risk():
    _check_benchmark("model1-a01")


def test_02_poly_decay_fast_mean_loss_and_min_risk():
    _check_benchmark("model1-a05")


def test_03_ar_decay_mean_loss_and_min_risk():
    _check_benchmark("model2-r095")
    _check_benchmark("model2-r05")


def test_04_logn_recovers_bandwidth_on_banded_model():
    for p in (500, 1000):
        row = _banded_consistency(p).results["per_n"][0]
        assert row["frac_logn_equals_k0"] >= 0.98, (
            f"p={p}: log(n) picked k0=5 in only "
            f"{row['frac_logn_equals_k0']:.0%} of replications"
        )


def test_05_dual_formula_identity_randomized():
    rng = np.random.Generator(np.random.Philox(key=20240517))
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 31))
        p = int(rng.integers(2, 31))
        scheme = Banding() if rng.random() < 0.5 else CzzTaper()
        u = rng.random()
        if u < 0.25:
            c = 2.0
        elif u < 0.5 and n >= 8:
            c = math.log(n)
        else:
            c = float(rng.uniform(2.0, 6.0))
        rows = rng.standard_normal((n, p)) * rng.uniform(0.5, 2.0)
        centered = rows - rows.mean(axis=0)
        s_tilde = centered.T @ centered / n
        s_tilde = (s_tilde + s_tilde.T) / 2.0
        consts = sure_constants(n, c)
        grid = default_tau_grid(p, n)
        profile = sure_profile(s_tilde, consts, scheme, grid)
        for tau, fast in zip(grid, profile.values):
            ref = sure_eq2_reference(s_tilde, consts, scheme, tau)
            rel = abs(fast - ref) / max(abs(fast), abs(ref), 1e-12)
            worst = max(worst, rel)
    assert worst <= 1e-10, f"dual formulas diverge: worst relative gap {worst:.3e}"


def test_06_sure_is_unbiased_for_risk():
    n, p, reps = 20, 10, 200_000
    from surecov import ArDecay

    sigma = build_sigma(ArDecay(rho=0.5, p=p))
    chol = cholesky_factor(sigma)
    grid = (1, 3, 5, 10)
    cs = {"2": 2.0, "logn": math.log(n)}
    consts = {key: sure_constants(n, c) for key, c in cs.items()}
    risks = {
        key: risk_profile(sigma, n, Banding(), c, grid).values for key, c in cs.items()
    }

    g = np.random.Generator(np.random.Philox(key=derive_seed(606, 0)))
    sums = {key: np.zeros(len(grid)) for key in cs}
    sumsq = {key: np.zeros(len(grid)) for key in cs}
    for _ in range(reps):
        rows = g.standard_normal((n, p)) @ chol.T
        centered = rows - rows.mean(axis=0)
        s_tilde = centered.T @ centered / n
        s1, s2 = band_sums(s_tilde)
        for key in cs:
            vals = profile_values(s1, s2, consts[key], Banding(), grid)
            sums[key] += vals
            sumsq[key] += vals * vals

    for key in cs:
        mean = sums[key] / reps
        se = np.sqrt((sumsq[key] / reps - mean**2) / (reps - 1))
        z = (mean - risks[key]) / se
        assert np.max(np.abs(z)) <= 4.0, (
            f"c={key}: criterion mean off by {np.max(np.abs(z)):.2f} MC SEs "
            f"at taus {grid} (means {mean}, risks {risks[key]})"
        )


def test_07_var_n_approaches_exact_variance():
    sigma = np.eye(3)
    ratios = []
    for n in (25, 50, 100):
        exact = exact_sure_variance(sigma, n, Banding(), tau=1, c=2.0)
        approx = var_n(sigma, n, Banding(), tau=1, c=2.0).value
        ratios.append(approx / exact)
    assert ratios[0] < ratios[1] < ratios[2] < 1.0, (
        f"var_n/exact not monotone increasing toward 1: {ratios}"
    )
    assert abs(ratios[-1] - 1.0) <= 0.15, (
        f"var_n/exact at n=100 is {ratios[-1]:.4f}, more than 15% from 1"
    )


def test_08_standardized_sure_is_asymptotically_normal():
    from surecov import BandedUniform

    config = ExperimentConfig(
        model=BandedUniform(k0=5, offdiag=0.25, p=200),
        n=100,
        scheme=Banding(),
        c_values=(2.0,),
        replications=2000,
        base_seed=71,
        kind="clt",
        tau_fixed=6,
    )
    stats = clt_experiment(config).results
    assert abs(stats["standardized_mean"]) < 0.1, stats
    assert 0.8 <= stats["standardized_var"] <= 1.25, stats
    assert stats["ks_distance"] < 0.06, stats


def test_09_oracle_bandwidth_locations_on_banded_models():
    from surecov import BandedUniform

    for k0 in (3, 4, 5):
        sigma = build_sigma(BandedUniform(k0=k0, offdiag=0.25, p=500))
        banding = risk_profile(sigma, 250, Banding(), 2.0).oracle_tau
        tapered = risk_profile(sigma, 250, CzzTaper(), 2.0).oracle_tau
        assert banding == k0, f"banding oracle at k0={k0}: got {banding}"
        assert tapered == 2 * k0 - 3, f"taper oracle at k0={k0}: got {tapered}"


def test_10_sure2_selects_within_log_window():
    row = _banded_consistency(500).results["per_n"][0]
    assert row["window"] == [5, 5 + math.ceil(math.log(250))]
    assert row["frac_sure2_in_window"] >= 0.95, (
        f"c=2 selection landed in {row['window']} in only "
        f"{row['frac_sure2_in_window']:.0%} of replications"
    )


def test_11_tuned_loss_matches_minimax_rate():
    report = rate_experiment(
        alpha=0.5, rho=0.6, p=500, n_list=[100, 200, 400], reps=50, base_seed=5
    )
    slope = report.results["fitted_slope"]
    target = report.results["theoretical_slope"]
    assert target == pytest.approx(-2.0 / 3.0)
    assert abs(slope - target) <= 0.15, (
        f"fitted log-log slope {slope:.4f} vs theoretical {target:.4f}"
    )


def test_12_tuned_loss_tracks_oracle_risk():
    config = ExperimentConfig(
        model=PolyDecay(rho=0.6, alpha=0.5, p=2000),
        n=100,
        scheme=Banding(),
        c_values=(2.0,),
        replications=100,
        base_seed=13,
        kind="oracle-ratio",
    )
    results = oracle_ratio_experiment(config).results
    assert 0.9 <= results["ratio"] <= 1.1, (
        f"mean tuned loss / oracle risk = {results['ratio']:.4f}"
    )


def test_13_reports_are_byte_identical_across_thread_counts():
    from surecov import ArDecay, BandedUniform

    table_cfg = ExperimentConfig(
        model=ArDecay(rho=0.5, p=60),
        n=40,
        scheme=CzzTaper(),
        c_values=(2.0, "logn"),
        replications=12,
        base_seed=99,
    )
    clt_cfg = ExperimentConfig(
        model=BandedUniform(k0=2, offdiag=0.3, p=20),
        n=24,
        scheme=Banding(),
        c_values=(2.0,),
        replications=20,
        base_seed=99,
        kind="clt",
        tau_fixed=2,
    )
    for cfg, runner in ((table_cfg, run_experiment), (clt_cfg, clt_experiment)):
        payloads = {runner(replace(cfg, threads=t)).payload_bytes() for t in (1, 3)}
        assert len(payloads) == 1, f"report payload differs across thread counts: {cfg.kind}"
