"""Acceptance gate: one test per numbered criterion, each printing a
single PASS/FAIL line with its pinned tolerance."""

import os
import time

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from powruin.delaymodel import (HashrateProfile, assemble_theta,
                                calibrate_alpha, fixed_delay_theta,
                                zero_delay_theta)
from powruin.doublespend import DelayModel, analyze
from powruin.ingest import (BITCOIN_LIKE, apply_cutoff, bin_delays,
                            load_delays, synth_delays, to_profile)
from powruin.medist import cme, erlang_me
from powruin.phi import phi_from_theta
from powruin.ruinlindley import lead_pmf, ruin_recursive, ruin_via_lindley
from powruin.simulate import SimConfig, simulate_attack_sweep

ALPHA = 1 / 600
VAR_PROFILE = HashrateProfile((0.0, 2.0, 5.0, 10.0), (0.0, 0.4, 0.8), 1.0)


def _report(capsys, num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    with capsys.disabled():
        print(f"\ncriterion {num:2d} | {name}: {status}{suffix}")
    assert ok, f"criterion {num} ({name}) failed {suffix}"


def _random_phi_suite(n_cases=100, support=40):
    """Randomized complete pmfs with mean < 1 and positive mass at zero."""
    from powruin.phi import PhiDistribution
    rng = np.random.default_rng(2024)
    suite = []
    while len(suite) < n_cases:
        raw = rng.random(support) * rng.uniform(0.3, 0.7) ** np.arange(support)
        w = rng.uniform(0.3, 0.8)
        p = raw / raw.sum() * (1 - w)
        p[0] += w
        mean = float(np.arange(support) @ p)
        if mean < 0.999:
            suite.append(PhiDistribution(masses=p, mean=mean))
    return suite


def test_criterion_01_gamblers_ruin_closed_form(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for rho in (0.1, 0.2, 0.3):
        phi = phi_from_theta(zero_delay_theta(ALPHA), rho * ALPHA, 10)
        psi = ruin_recursive(phi, 10).psi
        expect = rho ** (np.arange(10) + 1)
        worst = max(worst, float(np.max(np.abs(psi - expect))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    _report(capsys, 1, "gambler's-ruin closed form",
            ok, f"max err {worst:.2e}, {elapsed:.2f}s, tol 1e-10")


def test_criterion_02_geometric_phi(capsys):
    t0 = time.perf_counter()
    phi = phi_from_theta(zero_delay_theta(ALPHA), 0.2 * ALPHA, 10)
    expect = (5 / 6) * (1 / 6) ** np.arange(10)
    worst = float(np.max(np.abs(phi.masses - expect)))
    worst = max(worst, abs(phi.mean - 0.2))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    _report(capsys, 2, "geometric adversary counts",
            ok, f"max err {worst:.2e}, tol 1e-12")


def test_criterion_03_ruin_route_equality(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for phi in _random_phi_suite():
        a = ruin_recursive(phi, 25).psi
        b = ruin_via_lindley(phi, 25).psi
        worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    _report(capsys, 3, "ruin route equality, 100 random pmfs",
            ok, f"max err {worst:.2e}, {elapsed:.2f}s, tol 1e-10")


def test_criterion_04_lindley_drift_identity(capsys):
    worst = 0.0
    for phi in _random_phi_suite():
        q0 = lead_pmf(phi, 5).masses[0]
        worst = max(worst, abs(q0 * phi.masses[0] - (1.0 - phi.mean)))
    ok = worst <= 1e-10
    _report(capsys, 4, "Lindley drift identity",
            ok, f"max err {worst:.2e}, tol 1e-10")


def _poisson_mixture_quad(theta, beta, n):
    def integrand(x):
        lam = beta * x
        if lam <= 0:
            w = 1.0 if n == 0 else 0.0
        else:
            w = np.exp(-lam + n * np.log(lam) - scipy.special.gammaln(n + 1))
        return w * theta.pdf(x)
    val, _ = scipy.integrate.quad(integrand, 0, 60 * theta.mean(), limit=400)
    return val


def test_criterion_05_phi_quadrature_oracle(capsys):
    t0 = time.perf_counter()
    beta = 0.2 * ALPHA
    models = [
        zero_delay_theta(ALPHA),
        fixed_delay_theta(10.0, 1 / 590, 9),
        assemble_theta(VAR_PROFILE.with_fullrate(ALPHA), 9),
    ]
    worst = 0.0
    for theta in models:
        assert theta.order <= 30
        phi = phi_from_theta(theta, beta, 20)
        for n in range(20):
            oracle = _poisson_mixture_quad(theta, beta, n)
            worst = max(worst, abs(phi.masses[n] - oracle))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30.0
    _report(capsys, 5, "adversary-count quadrature oracle",
            ok, f"max err {worst:.2e}, {elapsed:.2f}s, tol 1e-6")


def test_criterion_06_me_fication_quality(capsys):
    mean_err, scv_ok = 0.0, True
    for K in (5, 11, 27):
        d = cme(K, 600.0)
        mean_err = max(mean_err, abs(d.mean() - 600.0) / 600.0)
        scv_ok &= d.scv() <= 2.5 / K**2
    erl_err = max(abs(erlang_me(K, 600.0).scv() - 1 / K)
                  for K in (5, 11, 27))
    ok = mean_err <= 1e-9 and scv_ok and erl_err <= 1e-10
    _report(capsys, 6, "concentrated-ME quality",
            ok, f"mean rel err {mean_err:.2e}, scv bound 2.5/K^2 "
                f"{'held' if scv_ok else 'violated'}, erlang scv err "
                f"{erl_err:.2e}")


def test_criterion_07_calibration(capsys):
    prof = HashrateProfile.fixed_delay(10.0, 1.0)
    res = calibrate_alpha(prof, 600.0, 27, rel_tol=1e-8)
    mean_err = abs(res.achieved_mean - 600.0) / 600.0
    rate_err = abs(res.calibrated_rate - 1 / 590) * 590
    congested = HashrateProfile((0.0, 30.0, 90.0, 200.0),
                                (0.0, 0.2, 0.5), 1.0)
    cong_rate = calibrate_alpha(congested, 600.0, 9).calibrated_rate
    ok = (res.converged and mean_err <= 1e-4 and rate_err <= 1e-6
          and cong_rate > 1 / 600)
    _report(capsys, 7, "rate calibration",
            ok, f"mean rel err {mean_err:.2e} (tol 1e-4), rate rel err "
                f"{rate_err:.2e} (tol 1e-6), congested rate "
                f"{cong_rate:.2e} > 1/600")


def test_criterion_08_simulation_cross_validation(capsys):
    t0 = time.perf_counter()
    trials, ks = 1_000_000, range(1, 7)
    cells = []

    analytic = analyze(DelayModel("zero"), 0.2, 600.0, 6)
    config = SimConfig(profile=HashrateProfile.zero_delay(ALPHA),
                       beta=0.2 * ALPHA, k=6, delta_conf=0.0,
                       warmup_blocks=2_000, trials=trials, seed=20240)
    ests = simulate_attack_sweep(config, ks)
    for k in ks:
        cells.append(("zero", k, analytic[k - 1].q, ests[k]))

    analytic = analyze(DelayModel("variable", profile=VAR_PROFILE),
                       0.2, 600.0, 6)
    cal = calibrate_alpha(VAR_PROFILE, 600.0, 27, rel_tol=1e-6)
    prof = VAR_PROFILE.with_fullrate(cal.calibrated_rate)
    config = SimConfig(profile=prof, beta=0.2 * cal.calibrated_rate, k=6,
                       delta_conf=prof.max_delay, warmup_blocks=2_000,
                       trials=trials, seed=20241)
    ests = simulate_attack_sweep(config, ks)
    for k in ks:
        cells.append(("variable", k, analytic[k - 1].q, ests[k]))

    worst_z = max(abs(q - e.q_hat) / e.std_err for _, _, q, e in cells)
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 3.0 and elapsed < 600.0
    _report(capsys, 8, "Monte Carlo cross-validation, 1e6 trials",
            ok, f"max |z| {worst_z:.2f} (tol 3), {elapsed:.0f}s (< 600s)")


def test_criterion_09_qualitative_shape(capsys):
    zero = [r.q for r in analyze(DelayModel("zero"), 0.2, 600.0, 8)]
    fixed = [r.q for r in
             analyze(DelayModel("fixed", delay=10.0), 0.2, 600.0, 8)]
    var = [r.q for r in
           analyze(DelayModel("variable", profile=VAR_PROFILE),
                   0.2, 600.0, 8, K=9)]
    decreasing = all(np.all(np.diff(qs) < 0) for qs in (zero, fixed, var))
    dominated = all(v >= z for v, z in zip(var, zero))

    ds = synth_delays(BITCOIN_LIKE, 20_000, seed=5)
    q_eps = {}
    for eps in (0.1, 0.01):
        kept, _ = apply_cutoff(ds, eps)
        prof = to_profile(bin_delays(kept, 32), 1.0)
        q_eps[eps] = analyze(DelayModel("variable", profile=prof),
                             0.2, 600.0, 6, K=9)[-1].q
    eps_ordered = q_eps[0.01] > q_eps[0.1]
    ok = decreasing and dominated and eps_ordered
    _report(capsys, 9, "qualitative q-vs-k shape",
            ok, f"decreasing={decreasing}, variable>=zero={dominated}, "
                f"q(eps=0.01)={q_eps[0.01]:.4f} > q(eps=0.1)={q_eps[0.1]:.4f}")


def test_criterion_10_performance(capsys):
    ds = synth_delays(BITCOIN_LIKE, 50_000, seed=6)
    kept, _ = apply_cutoff(ds, 0.01)
    t0 = time.perf_counter()
    prof = to_profile(bin_delays(kept, 128), 1.0)
    results = analyze(DelayModel("variable", profile=prof),
                      0.2, 600.0, 20, K=27)
    elapsed = time.perf_counter() - t0
    n_seg = prof.n_segments
    ok = elapsed < 60.0 and len(results) == 20 and n_seg >= 120
    _report(capsys, 10, "variable pipeline performance (K=27, N~130, k=20)",
            ok, f"N={n_seg}, m={27 * n_seg + 1}, {elapsed:.1f}s (< 60s)")


def test_criterion_11_external_dataset_cutoffs(capsys):
    path = os.environ.get("POWRUIN_DELAY_DATA", "data/propagation_delays.csv")
    if not os.path.exists(path):
        with capsys.disabled():
            print("\ncriterion 11 | external-dataset cutoffs: SKIP "
                  "[dataset not present; set POWRUIN_DELAY_DATA to run]")
        pytest.skip("external delay dataset not available")
    ds = load_delays(path)
    _, d10 = apply_cutoff(ds, 0.1)
    _, d01 = apply_cutoff(ds, 0.01)
    ok = abs(d10 - 8.0) / 8.0 <= 0.2 and abs(d01 - 300.0) / 300.0 <= 0.2
    _report(capsys, 11, "external-dataset cutoffs",
            ok, f"Delta(0.1)={d10:.1f}s (~8s), Delta(0.01)={d01:.0f}s (~300s)")
