"""Monte Carlo estimates for instances beyond the exact budget.

Conditional Monte Carlo: each draw fixes applicant i's score and the n-1
peer scores, then the selection probability of i is evaluated exactly for
that score vector instead of sampling a selection.  All epsilon values reuse
the same draws (common random numbers), and the two groups share peers and
a quantile-coupled uniform for R_i, so gaps are estimated from paired
differences.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import PopulationModel, derive_marginals
from .sampler import make_rng
from .selection import (
    NOTIONS,
    SelectionConfig,
    counts_from_levels,
    first_inclusion_by_enumeration,
    in_limit_regime,
    inclusion_from_peer_esp,
    limit_inclusion_from_counts,
    relative_log_weights,
    shifted_log_esp_values,
    subset_table,
)

DEFAULT_SAMPLES = 10_000
MIN_SAMPLES = 1_000
Z95 = 1.96
ESTIMATORS = ("gamma_eo", "gamma_dp", "theta", "e_z_cond", "e_w_cond", "e_r_cond")
_DRAW_CHUNK = 50_000
_ENUM_CELLS = 4_000_000


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width_95: float
    samples: int
    estimator: str

    @classmethod
    def from_values(cls, values: np.ndarray, estimator: str, scale: float = 1.0) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = len(values)
        std = float(np.std(values, ddof=1)) if n > 1 else 0.0
        return cls(scale * float(np.mean(values)), abs(scale) * Z95 * std / math.sqrt(n), n, estimator)

    @property
    def low(self):
        return self.mean - self.half_width_95

    @property
    def high(self):
        return self.mean + self.half_width_95

    def covers(self, value: float) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class Condition:
    """Conditioning event for applicant i: ``A=a`` and/or ``Y=y``."""

    a: int | None = None
    y: int | None = 1

    def pmf(self, model: PopulationModel) -> np.ndarray:
        marg = derive_marginals(model)
        if self.a is None and self.y == 1:
            return marg.f_R_given_Y1
        if self.a is None and self.y == 0:
            return marg.f_R_given_Y0
        if self.a is None:
            return marg.f_R
        if self.y is None:
            return marg.f_R_given_A[self.a]
        return model.pmf(self.a, self.y)


def _inverse_cdf(pmf: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(pmf)
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, len(pmf) - 1)


def _check_samples(samples):
    if samples < MIN_SAMPLES:
        raise ConfigError(f"need at least {MIN_SAMPLES} samples, got {samples}")


def draw_peers(model: PopulationModel, n: int, samples: int, seed: int):
    """Uniforms for applicant i and level indices of the n-1 iid peers."""
    f_R = derive_marginals(model).f_R
    u_parts, peer_parts = [], []
    for c, start in enumerate(range(0, samples, _DRAW_CHUNK)):
        rows = min(_DRAW_CHUNK, samples - start)
        rng = make_rng(seed, c)
        u_parts.append(rng.random(rows))
        peer_parts.append(_inverse_cdf(f_R, rng.random((rows, n - 1))))
    return np.concatenate(u_parts), np.vstack(peer_parts)


def inclusion_for_draws(levels_i, peers, support, config: SelectionConfig, epsilon: float):
    """Exact Pr{i selected} for each drawn score vector.

    ``epsilon = math.inf`` evaluates the argmax baseline.
    """
    m = config.m
    levels_i = np.asarray(levels_i)
    if config.product_form:
        if in_limit_regime(epsilon, support, config.n, m):
            counts = counts_from_levels(peers, support.size)
            out = np.empty(len(levels_i))
            for k in np.unique(levels_i):
                rows = levels_i == k
                out[rows] = limit_inclusion_from_counts(counts[rows], int(k), m)
            return out
        rho = support.array()
        peer_esp, shift = shifted_log_esp_values(relative_log_weights(epsilon, rho[peers], support, m), m)
        logw_i = relative_log_weights(epsilon, rho[levels_i], support, m)
        return inclusion_from_peer_esp(peer_esp, logw_i - shift, m)
    n_sub = len(subset_table(config.n, m))
    step = max(1, _ENUM_CELLS // (n_sub * m))
    out = np.empty(len(levels_i))
    for start in range(0, len(levels_i), step):
        sl = slice(start, start + step)
        levels = np.hstack([levels_i[sl, None], peers[sl]])
        out[sl] = first_inclusion_by_enumeration(levels, support, m, config.score_kind, epsilon)
    return out


def estimate_conditional_expectation(
    model: PopulationModel,
    config: SelectionConfig,
    condition: Condition,
    target: str,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    epsilon: float | None = None,
) -> Estimate:
    """Estimate E{target | condition} for applicant i.

    Args:
      target: ``"Z"`` or ``"W"`` (selection probability; the two coincide for
        m = 1) or ``"R"`` (the score itself).
      epsilon: Overrides ``config.epsilon``; ``math.inf`` gives the argmax
        baseline.
    """
    _check_samples(samples)
    eps = config.epsilon if epsilon is None else epsilon
    u, peers = draw_peers(model, config.n, samples, seed)
    levels_i = _inverse_cdf(condition.pmf(model), u)
    if target == "R":
        return Estimate.from_values(model.support.array()[levels_i], "e_r_cond")
    if target not in ("Z", "W"):
        raise ConfigError(f"unknown target {target!r}")
    values = inclusion_for_draws(levels_i, peers, model.support, config, eps)
    return Estimate.from_values(values, "e_z_cond" if config.m == 1 else "e_w_cond")


class CrnEvaluator:
    """Fixed draws evaluated at any epsilon.

    Gap and accuracy curves built from one evaluator share every random
    number, so they are smooth in epsilon and safe to root-find on.
    """

    def __init__(
        self,
        model: PopulationModel,
        config: SelectionConfig,
        samples: int = DEFAULT_SAMPLES,
        seed: int = 0,
    ):
        _check_samples(samples)
        if config.score_kind != "mean" and config.m > 1:
            subset_table(config.n, config.m)
        self.model = model
        self.config = config
        self.samples = samples
        self.seed = seed
        self.marginals = derive_marginals(model)
        self.u, self.peers = draw_peers(model, config.n, samples, seed)
        self._levels = {}

    def _levels_for(self, pmf_name, pmf):
        if pmf_name not in self._levels:
            self._levels[pmf_name] = _inverse_cdf(pmf, self.u)
        return self._levels[pmf_name]

    def _inclusion(self, name, pmf, epsilon):
        levels = self._levels_for(name, pmf)
        return inclusion_for_draws(levels, self.peers, self.model.support, self.config, epsilon)

    def gamma(self, epsilon: float, notion: str = "eo") -> Estimate:
        if notion == "eo":
            p0, p1 = self.model.pmf(0, 1), self.model.pmf(1, 1)
        elif notion == "dp":
            p0, p1 = self.marginals.f_R_given_A
        else:
            raise ConfigError(f"unknown fairness notion {notion!r}; expected one of {NOTIONS}")
        d = self._inclusion(f"{notion}0", p0, epsilon) - self._inclusion(f"{notion}1", p1, epsilon)
        return Estimate.from_values(d, f"gamma_{notion}")

    def theta(self, epsilon: float) -> Estimate:
        w = self._inclusion("y1", self.marginals.f_R_given_Y1, epsilon)
        scale = self.config.n / self.config.m * self.marginals.pr_y1
        return Estimate.from_values(w, "theta", scale)

    def conditional(self, epsilon: float, a: int, y: int | None = 1) -> Estimate:
        cond = Condition(a, y)
        w = self._inclusion(f"a{a}y{y}", cond.pmf(self.model), epsilon)
        return Estimate.from_values(w, "e_z_cond" if self.config.m == 1 else "e_w_cond")


@dataclass(frozen=True)
class TradeoffPoint:
    epsilon: float
    gamma: float
    gamma_ci: float
    theta: float
    theta_ci: float
    m: int
    notion: str
    exact: bool


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple = ()

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)


def _check_grid(grid):
    grid = [float(e) for e in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ConfigError("epsilon grid must be sorted ascending")
    if any(not (0.0 <= e < math.inf) for e in grid):
        raise ConfigError("epsilon grid values must be finite and >= 0")
    return grid


def estimate_tradeoff_curve(
    model: PopulationModel,
    config: SelectionConfig,
    epsilon_grid,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    notion: str = "eo",
    workers: int = 1,
) -> TradeoffCurve:
    """Gap and accuracy estimates on a grid, all from one set of draws.

    Output does not depend on ``workers``: every grid point reads the same
    frozen draws and results are collected in grid order.
    """
    grid = _check_grid(epsilon_grid)
    crn = CrnEvaluator(model, config, samples, seed)

    def point(eps):
        g = crn.gamma(eps, notion)
        t = crn.theta(eps)
        return TradeoffPoint(eps, g.mean, g.half_width_95, t.mean, t.half_width_95, config.m, notion, False)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(point, grid))
    else:
        points = [point(e) for e in grid]
    return TradeoffCurve(tuple(points))
