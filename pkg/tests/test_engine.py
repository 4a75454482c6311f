import math

import numpy as np
import pytest

from fairselect import (
    BudgetExceeded,
    SelectionConfig,
    build_model,
    conditional_inclusion,
    demographic_parity_gap,
    derivative_coefficient,
    derive_marginals,
    gamma_exact,
    gamma_prime_zero,
    limit_gamma_theta,
    theta_exact,
)
from fairselect.engine import evaluator, exact_cost, within_budget

from modelgen import random_model


def two_applicant_gamma(model, eps, notion="eo"):
    """Closed form for n = 2, m = 1."""
    rho = model.support.array()
    w = np.exp(eps * rho / (2 * model.support.span))
    f_R = derive_marginals(model).f_R
    g = np.array([np.sum(f_R * wk / (wk + w)) for wk in w])
    if notion == "eo":
        d = model.pmf(0, 1) - model.pmf(1, 1)
    else:
        d = derive_marginals(model).f_R_given_A[0] - derive_marginals(model).f_R_given_A[1]
    return float(np.sum(d * g)), g


class TestClosedForms:
    @pytest.mark.parametrize("eps", [0.5, 2.0, 9.0])
    @pytest.mark.parametrize("notion", ["eo", "dp"])
    def test_two_applicants(self, hand_model, eps, notion):
        cfg = SelectionConfig(2, 1, eps)
        want, _ = two_applicant_gamma(hand_model, eps, notion)
        assert gamma_exact(hand_model, cfg, notion).gamma == pytest.approx(want, abs=1e-14)

    def test_uniform_at_zero(self, hand_model):
        for n, m in [(3, 1), (4, 2), (5, 3)]:
            cfg = SelectionConfig(n, m, 0.0)
            g = evaluator(hand_model, n, m).inclusion(0.0)
            np.testing.assert_allclose(g, m / n, atol=1e-15)
            assert theta_exact(hand_model, cfg).theta == pytest.approx(
                derive_marginals(hand_model).pr_y1, abs=1e-14
            )

    def test_gamma_zero_at_zero(self, hand_model):
        assert abs(gamma_exact(hand_model, SelectionConfig(5, 2, 0.0)).gamma) <= 1e-12

    def test_dp_alias(self, hand_model):
        cfg = SelectionConfig(4, 1, 3.0)
        assert demographic_parity_gap(hand_model, cfg) == gamma_exact(hand_model, cfg, "dp")

    def test_conditional_inclusion_difference_is_gamma(self, hand_model):
        cfg = SelectionConfig(4, 2, 3.0)
        diff = conditional_inclusion(hand_model, cfg, 0) - conditional_inclusion(hand_model, cfg, 1)
        assert diff == pytest.approx(gamma_exact(hand_model, cfg).gamma, abs=1e-14)


class TestLimits:
    def test_single_selection_limit(self, hand_model):
        # n = 2: top level always wins, ties split evenly
        f_R = derive_marginals(hand_model).f_R
        g = np.array([f_R[0] / 2, f_R[0] + f_R[1] / 2, f_R[0] + f_R[1] + f_R[2] / 2])
        want = float(np.sum((hand_model.pmf(0, 1) - hand_model.pmf(1, 1)) * g))
        got, _ = limit_gamma_theta(hand_model, SelectionConfig(2, 1))
        assert got.gamma == pytest.approx(want, abs=1e-14)

    def test_large_epsilon_approaches_limit(self, hand_model):
        cfg = SelectionConfig(4, 2)
        gi, ti = limit_gamma_theta(hand_model, cfg)
        ev = evaluator(hand_model, 4, 2)
        assert ev.gamma(2000.0) == pytest.approx(gi.gamma, abs=1e-6)
        assert ev.theta(2000.0) == pytest.approx(ti.theta, abs=1e-6)

    @pytest.mark.parametrize("kind", ["min", "max", "rms"])
    def test_other_kinds_approach_limit(self, hand_model, kind):
        gi, _ = limit_gamma_theta(hand_model, SelectionConfig(4, 2, score_kind=kind))
        ev = evaluator(hand_model, 4, 2, kind)
        assert ev.gamma(5000.0) == pytest.approx(gi.gamma, abs=1e-6)


class TestDerivative:
    def test_coefficient_single(self):
        for n in (2, 5, 10):
            assert derivative_coefficient(n, 1) == pytest.approx((n - 1) / (2 * n * n))

    def test_coefficient_values(self):
        # C(3,1) C(3,2) / (2 * 2 * C(4,2)^2) = 9 / 144
        assert derivative_coefficient(4, 2) == pytest.approx(9 / 144)
        assert derivative_coefficient(5, 3) == pytest.approx(math.comb(4, 2) * math.comb(4, 3) / (6 * 100))

    def test_symmetric_in_complement(self):
        # C(n-1,m-1) C(n-1,m) / m is symmetric under m -> n-m up to the 1/m factor
        for n in (5, 8):
            for m in range(1, n):
                lhs = derivative_coefficient(n, m) * m
                rhs = derivative_coefficient(n, n - m) * (n - m)
                assert lhs == pytest.approx(rhs)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_matches_central_difference(self, hand_model, m):
        cfg = SelectionConfig(5, m)
        ev = evaluator(hand_model, 5, m)
        h = 1e-5
        fd = (ev.gamma(h) - ev.gamma(-h)) / (2 * h)
        assert gamma_prime_zero(hand_model, cfg) == pytest.approx(fd, abs=1e-8)

    def test_dp_notion(self, hand_model):
        ev = evaluator(hand_model, 4, 1)
        h = 1e-5
        fd = (ev.gamma(h, "dp") - ev.gamma(-h, "dp")) / (2 * h)
        assert gamma_prime_zero(hand_model, SelectionConfig(4, 1), "dp") == pytest.approx(fd, abs=1e-8)


class TestBudget:
    def test_budget_on_active_levels(self):
        support = [round(0.01 * k, 2) for k in range(101)]
        pmf = np.zeros(101)
        pmf[[10, 50, 90]] = [0.2, 0.5, 0.3]
        model = build_model(support, 0.5, [0.5, 0.5], {(a, y): pmf for a in (0, 1) for y in (0, 1)})
        cfg = SelectionConfig(30, 1)
        assert within_budget(model, cfg)
        assert exact_cost(model, cfg)[0] == math.comb(29 + 2, 2)

    def test_raises_when_over(self, rng):
        model = random_model(rng, k=11)
        with pytest.raises(BudgetExceeded):
            gamma_exact(model, SelectionConfig(60, 1, 1.0))

    def test_stable_at_huge_epsilon(self, hand_model):
        ev = evaluator(hand_model, 6, 2)
        g = ev.inclusion(1e6)
        assert np.all(np.isfinite(g)) and np.all((g >= 0) & (g <= 1))

    def test_limit_regime_is_continuous(self, hand_model):
        from fairselect.selection import in_limit_regime

        ev = evaluator(hand_model, 6, 2)
        support = hand_model.support
        lo = 1.0
        while not in_limit_regime(lo * 2, support, 6, 2):
            lo *= 2
        below, above = ev.inclusion(lo), ev.inclusion(lo * 2)
        np.testing.assert_allclose(below, above, atol=1e-15)
        np.testing.assert_array_equal(above, ev.inclusion(math.inf))
