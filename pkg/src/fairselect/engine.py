"""Exact fairness gap and accuracy by summation over the finite support.

The selection probability of a fixed applicant depends on the other n-1
scores only through how many of them sit at each support level, so the
expectation over peers is a sum over count vectors with multinomial weights
instead of over all (n')^(n-1) sequences.  For every support level rho this
module computes

    g(rho) = E{ Pr{applicant i selected} | R_i = rho },

and every conditional expectation the package needs is a dot product of ``g``
with a conditional PMF of R_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BudgetExceeded, ConfigError, EngineInvariantError
from .model import PopulationModel, derive_marginals
from .selection import (
    NOTIONS,
    SelectionConfig,
    compositions,
    first_inclusion_by_enumeration,
    in_limit_regime,
    inclusion_from_peer_esp,
    levels_from_counts,
    limit_inclusion_from_counts,
    log_esp_counts,
    log_multinomial,
    n_compositions,
    relative_log_weights,
    subset_distribution,
    subset_table,
)

SINGLE_BUDGET = 5_000_000  # count vectors, m = 1
MEAN_BUDGET = 100_000_000  # count vectors * n * m, mean score, m > 1
ENUM_BUDGET = 100_000_000  # count vectors * levels * C(n, m) * m, other kinds
CHUNK = 32_768
NORMALIZATION_TOL = 1e-12
_NORM_SAMPLE = 64


@dataclass(frozen=True)
class FairnessGap:
    gamma: float
    notion: str = "eo"


@dataclass(frozen=True)
class Accuracy:
    theta: float


def _active_levels(model):
    f_R = derive_marginals(model).f_R
    return np.flatnonzero(f_R > 0.0)


def exact_cost(model: PopulationModel, config: SelectionConfig) -> tuple:
    """``(cost, budget)`` of the exact path for this instance."""
    n, m = config.n, config.m
    comps = n_compositions(n - 1, len(_active_levels(model)))
    if m == 1:
        return comps, SINGLE_BUDGET
    if config.score_kind == "mean":
        return comps * n * m, MEAN_BUDGET
    n_sub = math.comb(n, m)
    return comps * model.support.size * n_sub * m, ENUM_BUDGET


def within_budget(model: PopulationModel, config: SelectionConfig) -> bool:
    cost, budget = exact_cost(model, config)
    if not config.product_form and math.comb(config.n, config.m) > 2_000_000:
        return False
    return cost <= budget


def _check_budget(model, config):
    cost, budget = exact_cost(model, config)
    if cost > budget or (not config.product_form and math.comb(config.n, config.m) > 2_000_000):
        raise BudgetExceeded(
            f"exact computation for n={config.n}, m={config.m}, kind={config.score_kind} "
            f"needs {cost:.3g} units (budget {budget:.3g}); use the Monte Carlo engine"
        )


def _compensated_dot(weights: list, values_by_chunk: list) -> np.ndarray:
    """Column sums of ``P * W`` over all chunks.

    Pairwise summation inside a chunk (error O(log CHUNK) ulps), exactly
    rounded accumulation across chunks.
    """
    partials = []
    for p, w in zip(weights, values_by_chunk):
        partials.append(np.sum(p[:, None] * w, axis=0))
    if not partials:
        return np.zeros(0)
    return np.array([math.fsum(col) for col in zip(*partials)])


class ExactEvaluator:
    """Prepared exact evaluator for one (model, n, m, score kind).

    The count vectors and their multinomial weights are built once; each call
    to :meth:`inclusion` then costs one pass over them.  ``epsilon`` may be
    ``math.inf`` (argmax baseline) and, for finite differencing, negative.
    """

    def __init__(self, model: PopulationModel, n: int, m: int = 1, score_kind: str = "mean"):
        config = SelectionConfig(n, m, 0.0, score_kind)
        _check_budget(model, config)
        self.model = model
        self.config = config
        self.marginals = derive_marginals(model)
        self.active = _active_levels(model)
        counts_active = compositions(n - 1, len(self.active))
        logp = log_multinomial(counts_active, self.marginals.f_R[self.active])
        keep = np.isfinite(logp)
        counts = np.zeros((int(keep.sum()), model.support.size), dtype=np.int32)
        counts[:, self.active] = counts_active[keep]
        self.counts = counts
        self.probs = np.exp(logp[keep])
        self._cache = {}
        if not config.product_form:
            subset_table(n, m)

    @property
    def n(self):
        return self.config.n

    @property
    def m(self):
        return self.config.m

    def _chunks(self):
        for start in range(0, len(self.probs), CHUNK):
            yield self.probs[start : start + CHUNK], self.counts[start : start + CHUNK]

    def inclusion(self, epsilon: float) -> np.ndarray:
        """``g[k] = E{Pr{i selected} | R_i = rho_k}`` for every support level."""
        key = float(epsilon)
        if self.config.product_form and in_limit_regime(key, self.model.support, self.n, self.m):
            key = math.inf
        if key in self._cache:
            return self._cache[key]
        weights, values = [], []
        for p, counts in self._chunks():
            weights.append(p)
            values.append(self._inclusion_chunk(counts, key))
        g = _compensated_dot(weights, values)
        if math.isfinite(key):
            self._check_normalization(key)
        if len(self._cache) > 512:
            self._cache.clear()
        self._cache[key] = g
        return g

    def _inclusion_chunk(self, counts: np.ndarray, epsilon: float) -> np.ndarray:
        support = self.model.support
        n_levels = support.size
        out = np.empty((len(counts), n_levels))
        if self.config.product_form:
            if math.isinf(epsilon):
                for k in range(n_levels):
                    out[:, k] = limit_inclusion_from_counts(counts, k, self.m)
                return out
            logw = relative_log_weights(epsilon, support.values, support, self.m)
            peer_esp, shift = log_esp_counts(counts, logw, self.m, return_shift=True)
            for k in range(n_levels):
                out[:, k] = inclusion_from_peer_esp(peer_esp, logw[k] - shift, self.m)
            return out
        peers = levels_from_counts(counts)
        for k in range(n_levels):
            levels = np.hstack([np.full((len(counts), 1), k), peers])
            out[:, k] = first_inclusion_by_enumeration(
                levels, support, self.m, self.config.score_kind, epsilon
            )
        return out

    def _check_normalization(self, epsilon: float):
        """Inclusion probabilities of all n applicants must sum to m."""
        sample = self.counts[:_NORM_SAMPLE]
        support = self.model.support
        n_levels = support.size
        tot = np.repeat(sample, n_levels, axis=0)
        tot[np.arange(len(tot)), np.tile(np.arange(n_levels), len(sample))] += 1
        if self.config.product_form:
            logw = relative_log_weights(epsilon, support.values, support, self.m)
            total = np.zeros(len(tot))
            for j in range(n_levels):
                present = tot[:, j] > 0
                if not present.any():
                    continue
                rest = tot.copy()
                rest[:, j] = np.maximum(rest[:, j] - 1, 0)
                esp, shift = log_esp_counts(rest, logw, self.m, return_shift=True)
                w = inclusion_from_peer_esp(esp, logw[j] - shift, self.m)
                total += np.where(present, tot[:, j] * w, 0.0)
        else:
            levels = levels_from_counts(tot)
            _, probs = subset_distribution(levels, support, self.m, self.config.score_kind, epsilon)
            total = probs.sum(axis=1) * self.m
        err = np.max(np.abs(total - self.m)) / self.m
        if not err <= NORMALIZATION_TOL * max(1.0, self.n):
            raise EngineInvariantError(
                f"selection probabilities sum to m with relative error {err:.3g} at eps={epsilon}"
            )

    # -- conditional expectations -------------------------------------------

    def expect(self, epsilon: float, pmf) -> float:
        """E{Pr{i selected} | R_i ~ pmf}."""
        g = self.inclusion(epsilon)
        return math.fsum(np.asarray(pmf, dtype=float) * g)

    def group_pmfs(self, notion: str):
        if notion == "eo":
            return self.model.pmf(0, 1), self.model.pmf(1, 1)
        if notion == "dp":
            f_a = self.marginals.f_R_given_A
            return f_a[0], f_a[1]
        raise ConfigError(f"unknown fairness notion {notion!r}")

    def gamma(self, epsilon: float, notion: str = "eo") -> float:
        p0, p1 = self.group_pmfs(notion)
        g = self.inclusion(epsilon)
        return math.fsum(np.concatenate([p0 * g, -(p1 * g)]))

    def theta(self, epsilon: float) -> float:
        marg = self.marginals
        e_y1 = self.expect(epsilon, marg.f_R_given_Y1)
        return self.n / self.m * marg.pr_y1 * e_y1


@lru_cache(maxsize=32)
def evaluator(model: PopulationModel, n: int, m: int = 1, score_kind: str = "mean") -> ExactEvaluator:
    """Cached :class:`ExactEvaluator`."""
    if m == 1:
        score_kind = "mean"
    return ExactEvaluator(model, n, m, score_kind)


def _evaluator_for(model, config):
    return evaluator(model, config.n, config.m, config.score_kind)


def _check_notion(notion):
    if notion not in NOTIONS:
        raise ConfigError(f"unknown fairness notion {notion!r}; expected one of {NOTIONS}")


def gamma_exact(model: PopulationModel, config: SelectionConfig, notion: str = "eo") -> FairnessGap:
    """Exact fairness gap at ``config.epsilon``.

    Raises:
      BudgetExceeded: The instance is too large for exact summation.
    """
    _check_notion(notion)
    ev = _evaluator_for(model, config)
    return FairnessGap(ev.gamma(config.epsilon, notion), notion)


def theta_exact(model: PopulationModel, config: SelectionConfig) -> Accuracy:
    """Exact accuracy: normalized expected number of qualified selections."""
    ev = _evaluator_for(model, config)
    return Accuracy(ev.theta(config.epsilon))


def demographic_parity_gap(model: PopulationModel, config: SelectionConfig) -> FairnessGap:
    return gamma_exact(model, config, "dp")


def limit_gamma_theta(model: PopulationModel, config: SelectionConfig, notion: str = "eo"):
    """Fairness gap and accuracy of the non-private argmax baseline.

    Computed from the tie structure directly, not by taking epsilon large.
    """
    _check_notion(notion)
    ev = _evaluator_for(model, config)
    return FairnessGap(ev.gamma(math.inf, notion), notion), Accuracy(ev.theta(math.inf))


def conditional_inclusion(
    model: PopulationModel, config: SelectionConfig, a: int, y: int | None = 1, epsilon=None
) -> float:
    """E{W_i | A_i=a, Y_i=y} (``y=None`` conditions on A only)."""
    ev = _evaluator_for(model, config)
    eps = config.epsilon if epsilon is None else epsilon
    pmf = model.pmf(a, y) if y is not None else ev.marginals.f_R_given_A[a]
    return ev.expect(eps, pmf)


def derivative_coefficient(n: int, m: int) -> float:
    """``C(n-1, m-1) C(n-1, m) / (2 m C(n, m)^2)``; ``(n-1)/(2 n^2)`` at m = 1."""
    return math.comb(n - 1, m - 1) * math.comb(n - 1, m) / (2 * m * math.comb(n, m) ** 2)


def gamma_prime_zero(model: PopulationModel, config: SelectionConfig, notion: str = "eo") -> float:
    """Derivative of the fairness gap at epsilon = 0.

    For the mean score the closed form is the binomial coefficient above
    times the difference of group mean scores.  The coefficient is stated
    for a subset score exponent of ``eps * v / 2``.  The mechanism here
    uses ``eps * v / (2 Delta)`` with ``Delta = span / m``, so the exact
    derivative carries an extra factor ``m / span``.  Other score kinds
    fall back to a central finite difference of the exact gap.
    """
    _check_notion(notion)
    marg = derive_marginals(model)
    if config.m > 1 and config.score_kind != "mean":
        ev = _evaluator_for(model, config)
        h = 1e-4
        return (ev.gamma(h, notion) - ev.gamma(-h, notion)) / (2 * h)
    if notion == "eo":
        diff = marg.mean_R_given_A_Y1[0] - marg.mean_R_given_A_Y1[1]
    else:
        diff = marg.mean_R_given_A[0] - marg.mean_R_given_A[1]
    scale = config.m / model.support.span
    return derivative_coefficient(config.n, config.m) * scale * diff
