"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL/SKIP line that is printed in the pytest
terminal summary, then asserts.
"""

import math
import os
import time
from itertools import product

import numpy as np
import pytest

from fairselect import (
    Condition,
    CrnEvaluator,
    SelectionConfig,
    accuracy_reduction_table,
    check_conditions,
    check_mlr,
    derivative_coefficient,
    derive_marginals,
    estimate_conditional_expectation,
    from_group_tables,
    gamma_exact,
    gamma_prime_zero,
    load_group_tables,
    oracle_gamma_theta,
    solve_perfect_fairness,
    standin_model,
    theta_exact,
    verify_dp,
)
from fairselect.cli import main
from fairselect.engine import evaluator

from modelgen import mlr_model, random_model, t1_model, t2_model

KINDS = ("mean", "rms", "min", "max")
EPSILONS = (0.0, 0.5, 2.0, 10.0)
NOTIONS = ("eo", "dp")


def tiny_instances(seed=2024, models_per_shape=2):
    """(model, n, m, kind) over n in {2,3,4}, two or three levels, m in {1,2}."""
    rng = np.random.default_rng(seed)
    out = []
    for n, k, m, kind in product((2, 3, 4), (2, 3), (1, 2), KINDS):
        if m >= n:
            continue
        for _ in range(models_per_shape):
            out.append((random_model(rng, k), n, m, kind))
    return out


TINY = tiny_instances()


def test_criterion_01_oracle_equivalence(acceptance):
    start = time.perf_counter()
    worst = 0.0
    checks = 0
    for model, n, m, kind in TINY:
        for eps, notion in product(EPSILONS, NOTIONS):
            cfg = SelectionConfig(n, m, eps, kind)
            ref = oracle_gamma_theta(model, cfg, notion)
            worst = max(
                worst,
                abs(gamma_exact(model, cfg, notion).gamma - ref.gamma.gamma),
                abs(theta_exact(model, cfg).theta - ref.theta.theta),
            )
            checks += 1
    elapsed = time.perf_counter() - start
    ok = len(TINY) >= 50 and worst <= 1e-10 and elapsed < 120
    acceptance(
        1, ok, f"{len(TINY)} instances, {checks} (eps, notion) checks, max |diff| {worst:.2e}, {elapsed:.1f}s"
    )
    assert ok


def test_criterion_02_dp_bound(acceptance):
    start = time.perf_counter()
    worst = 0.0
    holds = True
    checks = 0
    for model, n, m, kind in TINY:
        if m > 1 and kind != "mean":
            continue
        for eps in EPSILONS:
            report = verify_dp(model, SelectionConfig(n, m, eps, kind))
            holds &= report.max_ratio <= math.exp(eps) * (1 + 1e-9)
            if eps > 0:
                worst = max(worst, math.log(report.max_ratio) / eps)
            checks += 1
    elapsed = time.perf_counter() - start
    ok = holds and elapsed < 120
    acceptance(
        2, ok, f"{checks} exhaustive checks, max log(ratio)/eps over eps > 0 = {worst:.4f}, {elapsed:.1f}s"
    )
    assert ok


def test_criterion_03_gap_zero_at_zero(acceptance):
    rng = np.random.default_rng(3)
    cases = [(model, SelectionConfig(n, m, 0.0, kind)) for model, n, m, kind in TINY]
    cases += [(standin_model(), SelectionConfig(10, m)) for m in (1, 2, 3, 4)]
    cases += [(mlr_model(rng), SelectionConfig(5, m, 0.0, kind)) for m in (1, 2, 3) for kind in KINDS]
    worst = 0.0
    for model, cfg in cases:
        for notion in NOTIONS:
            worst = max(worst, abs(gamma_exact(model, cfg, notion).gamma))
    ok = worst <= 1e-12
    acceptance(3, ok, f"{2 * len(cases)} (model, config, notion) cases, max |gamma(0)| {worst:.2e}")
    assert ok


def test_criterion_04_accuracy_monotone_under_mlr(acceptance):
    rng = np.random.default_rng(4)
    grid = np.linspace(0.0, 50.0, 40)
    worst = math.inf
    models = 0
    for j in range(24):
        model = mlr_model(rng, k=int(rng.integers(3, 6)))
        assert check_mlr(model).holds
        n = int(rng.integers(3, 7))
        m = 1 + j % min(3, n - 1)
        ev = evaluator(model, n, m)
        theta = np.array([ev.theta(e) for e in grid])
        worst = min(worst, float(np.min(np.diff(theta))))
        models += 1
    ok = models >= 20 and worst >= -1e-10
    acceptance(4, ok, f"{models} MLR models, 40-point grid on [0, 50], min step {worst:.2e}")
    assert ok


def test_criterion_05_derivative(acceptance):
    rng = np.random.default_rng(5)
    h = 1e-4
    worst = 0.0
    for _ in range(6):
        model = random_model(rng, k=int(rng.integers(2, 4)))
        for m in (1, 2, 3):
            for notion in NOTIONS:
                ev = evaluator(model, 4, m)
                fd = (ev.gamma(h, notion) - ev.gamma(-h, notion)) / (2 * h)
                worst = max(worst, abs(gamma_prime_zero(model, SelectionConfig(4, m), notion) - fd))
    coef_err = 0.0
    for n in range(2, 9):
        coef_err = max(coef_err, abs(derivative_coefficient(n, 1) - (n - 1) / (2 * n * n)))
        for m in range(2, n):
            direct = math.comb(n - 1, m - 1) * math.comb(n - 1, m) / (2 * m * math.comb(n, m) ** 2)
            coef_err = max(coef_err, abs(derivative_coefficient(n, m) - direct))
    ok = worst <= 1e-5 and coef_err <= 1e-15
    acceptance(5, ok, f"max |closed form - central difference| {worst:.2e}, coefficient error {coef_err:.1e}")
    assert ok


def test_criterion_06_root_existence(acceptance):
    rng = np.random.default_rng(6)
    shapes = [(3, 1), (4, 1), (5, 1), (4, 2), (5, 2), (5, 3)]
    roots = 0
    worst_gamma = 0.0
    sign_ok = True
    for j in range(12):
        n, m = shapes[j % len(shapes)]
        model = t1_model(rng, n, m)
        cfg = SelectionConfig(n, m)
        assert all(r.satisfied for r in check_conditions(model, cfg, ["T1" if m == 1 else "T5"]))
        res = solve_perfect_fairness(model, cfg)
        lo, hi = res.bracket
        ev = evaluator(model, n, m)
        sign_ok &= res.epsilon_star > 0 and ev.gamma(lo) * ev.gamma(hi) <= 0 and lo < hi
        worst_gamma = max(worst_gamma, abs(res.achieved_gamma))
        roots += 1

    grid = np.concatenate([np.geomspace(1e-3, 0.25, 20, endpoint=False), np.linspace(0.25, 100.0, 400)])
    t2_models = 0
    t2_ok = True
    for _ in range(8):
        model = t2_model(rng)
        for n in (3, 5):
            ev = evaluator(model, n, 1)
            g_inf = ev.gamma(math.inf)
            g = np.array([ev.gamma(e) for e in grid])
            t2_ok &= bool(np.all(g > 0) and np.all(g < g_inf))
            t2_models += 1
    ok = roots >= 10 and worst_gamma <= 1e-6 and sign_ok and t2_ok
    acceptance(
        6,
        ok,
        f"{roots} roots, max |gamma(eps_o)| {worst_gamma:.1e}, sign changes {'ok' if sign_ok else 'MISSING'}; "
        f"{t2_models} T2-regime cases 0 < gamma < gamma_inf on (0, 100]: {'ok' if t2_ok else 'VIOLATED'}",
    )
    assert ok


def test_criterion_07_beats_uniform(acceptance):
    rng = np.random.default_rng(7)
    margins = []
    for j in range(10):
        n = 3 + j % 3
        model = t1_model(rng, n, 1, need_mlr=True)
        res = solve_perfect_fairness(model, SelectionConfig(n, 1))
        margins.append(res.achieved_theta - derive_marginals(model).pr_y1)
    worst = min(margins)
    ok = worst > 1e-8
    acceptance(7, ok, f"{len(margins)} MLR models with a root, min theta(eps_o) - Pr{{Y=1}} = {worst:.3e}")
    assert ok


def test_criterion_08_monte_carlo_coverage(acceptance):
    hand = random_model(np.random.default_rng(8), k=3)
    cases = [
        (hand, SelectionConfig(4, 2), 2.0),
        (hand, SelectionConfig(3, 1), 5.0),
        (standin_model(), SelectionConfig(5, 3), 3.0),
    ]
    counts = []
    for model, cfg, eps in cases:
        ev = evaluator(model, cfg.n, cfg.m)
        g_true, t_true = ev.gamma(eps), ev.theta(eps)
        g_hits = t_hits = 0
        for seed in range(100):
            crn = CrnEvaluator(model, cfg, samples=10_000, seed=seed)
            g_hits += crn.gamma(eps).covers(g_true)
            t_hits += crn.theta(eps).covers(t_true)
        counts += [g_hits, t_hits]
    ok = min(counts) >= 90
    acceptance(8, ok, f"coverage out of 100 seeds (gamma, theta) per instance: {counts}")
    assert ok


FICO_CDF = "transrisk_cdf_by_race_ssa.csv"
FICO_PERF = "transrisk_performance_by_race_ssa.csv"


def _score_range(path):
    with open(path, encoding="utf-8") as fh:
        scores = [float(line.split(",")[0]) for line in fh.read().splitlines()[1:] if line.strip()]
    if 350.0 <= min(scores) and max(scores) <= 850.0:
        return (350.0, 850.0)
    return (min(scores), max(scores))


def test_criterion_09_fico(acceptance, request):
    path = request.config.getoption("--fico-dir")
    if not path:
        acceptance(9, None, "skipped: credit score tables not supplied (--fico-dir)")
        pytest.skip("credit score tables not supplied (--fico-dir)")
    cdf_path, perf_path = os.path.join(path, FICO_CDF), os.path.join(path, FICO_PERF)
    tables = load_group_tables(cdf_path, perf_path, score_range=_score_range(cdf_path))
    samples, n = 10_000, 10
    failures = []

    def expect_within_ci(label, est, value):
        if not est.covers(value):
            failures.append(f"{label}: {est.mean:.4f} +/- {est.half_width_95:.4f} vs {value}")

    bw = from_group_tables(tables, "White", "Black", prior_a0=0.88)
    wha = from_group_tables(tables, {"White": 0.64, "Hispanic": 0.36}, "Asian", prior_a0=0.9634)
    cases = [
        ("White/Black", bw, (0.6445, 0.4694), (0.1425, 0.0486)),
        ("White+Hispanic/Asian", wha, (0.6088, 0.6213), (0.1462, 0.1389)),
    ]
    for label, model, means, z in cases:
        cfg = SelectionConfig(n, 1)
        crn = CrnEvaluator(model, cfg, samples=samples, seed=0)
        for a in (0, 1):
            r = estimate_conditional_expectation(model, cfg, Condition(a, 1), "R", samples=samples, seed=a)
            expect_within_ci(f"{label} E(R|A={a},Y=1)", r, means[a])
            expect_within_ci(f"{label} E(Z|A={a},Y=1)", crn.conditional(math.inf, a, 1), z[a])

    rows = accuracy_reduction_table(
        wha, [SelectionConfig(n, m) for m in (1, 2, 3, 4)], engine="mc", samples=samples, seed=0
    )
    expected = {1: (10.35, 0.94, 0.97), 2: (22.47, 0.94, 0.96)}
    for row in rows:
        if row.m in expected:
            eps_o, th_o, th_inf = expected[row.m]
            if not abs(row.epsilon_o - eps_o) <= 0.05 * eps_o:
                failures.append(f"m={row.m} eps_o {row.epsilon_o:.3f} vs {eps_o}")
            if not abs(row.theta_o - th_o) <= 0.02:
                failures.append(f"m={row.m} theta(eps_o) {row.theta_o:.3f} vs {th_o}")
            if not abs(row.theta_inf - th_inf) <= 0.02:
                failures.append(f"m={row.m} theta_inf {row.theta_inf:.3f} vs {th_inf}")
        elif row.epsilon_o != 0.0:
            failures.append(f"m={row.m} found a root at {row.epsilon_o:.3f}; expected none")
    ok = not failures
    summary = "; ".join(
        f"m={r.m} eps_o={r.epsilon_o:.3g} theta_o={r.theta_o:.3f} theta_inf={r.theta_inf:.3f}" for r in rows
    )
    acceptance(9, ok, summary + ("" if ok else " | " + " | ".join(failures)))
    assert ok, failures


def test_criterion_10_determinism(acceptance, tmp_path):
    from fairselect import emit_model

    model_path = tmp_path / "standin.json"
    emit_model(standin_model(), model_path)
    outputs = []
    runs = [("mc", 1), ("mc", 1), ("mc", 4), ("exact", 1), ("exact", 4)]
    for j, (engine, workers) in enumerate(runs):
        out = tmp_path / f"curve{j}.csv"
        code = main(
            [
                "curve",
                "--model",
                str(model_path),
                "--n",
                "10",
                "--m",
                "2",
                "--engine",
                engine,
                "--samples",
                "5000",
                "--seed",
                "42",
                "--eps-max",
                "20",
                "--points",
                "21",
                "--workers",
                str(workers),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        outputs.append(out.read_bytes())
    mc_same = outputs[0] == outputs[1] == outputs[2]
    exact_same = outputs[3] == outputs[4]
    ok = mc_same and exact_same
    acceptance(
        10,
        ok,
        f"Monte Carlo runs identical across repeats and 1/4 workers: {mc_same}; exact runs identical: {exact_same}",
    )
    assert ok
