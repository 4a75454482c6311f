"""Draw selections from the exponential mechanisms and check the DP bound.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``.  Batch
draws are split into fixed-size chunks, chunk ``c`` using the seed
``(seed, c)``, so results do not depend on how chunks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigError
from .model import PopulationModel, ScoreSupport
from .selection import (
    SelectionConfig,
    applicant_log_weights,
    log_esp_values,
    subset_distribution,
)

GENERATOR = "numpy.PCG64 via SeedSequence([seed, stream...])"
DRAW_CHUNK = 65_536


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


@dataclass(frozen=True)
class ScoreVector:
    indices: tuple
    support: ScoreSupport

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 or i >= self.support.size for i in idx):
            raise ConfigError(f"score index out of range for a support of size {self.support.size}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_values(cls, values, support: ScoreSupport) -> "ScoreVector":
        lookup = {v: i for i, v in enumerate(support.values)}
        try:
            return cls(tuple(lookup[round(float(v), support.decimals)] for v in values), support)
        except KeyError as err:
            raise ConfigError(f"score {err.args[0]} is not a support value") from None

    @property
    def values(self) -> np.ndarray:
        return self.support.array()[list(self.indices)]

    @property
    def keys(self) -> np.ndarray:
        return np.asarray(self.support.keys, dtype=np.int64)[list(self.indices)]

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class SelectionOutcome:
    chosen: tuple
    mechanism: str
    seed: int


def _pick(cum: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1))


def selection_probabilities(scores: ScoreVector, epsilon: float) -> np.ndarray:
    """Pr{applicant i chosen} under the single-selection mechanism."""
    logw = applicant_log_weights(epsilon, scores.values, scores.support, 1)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def select_one(scores: ScoreVector, epsilon: float, seed: int) -> SelectionOutcome:
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    p = selection_probabilities(scores, epsilon)
    i = _pick(np.cumsum(p), make_rng(seed).random())
    return SelectionOutcome((i,), "exponential", seed)


def _suffix_esp(logw: np.ndarray, m: int) -> np.ndarray:
    """``table[j, k] = log e_k(w_j, ..., w_{n-1})``."""
    n = len(logw)
    table = np.full((n + 1, m + 1), -np.inf)
    table[n, 0] = 0.0
    for j in range(n - 1, -1, -1):
        table[j, 0] = 0.0
        table[j, 1:] = np.logaddexp(table[j + 1, 1:], logw[j] + table[j + 1, :-1])
    return table


def _sequential_subsets(logw: np.ndarray, m: int, u: np.ndarray) -> np.ndarray:
    """Conditional Poisson sampling: walk the applicants in order and include
    ``j`` with probability ``w_j e_{k-1}(after j) / e_k(from j)``, where ``k``
    is the number of places still open."""
    n = len(logw)
    table = _suffix_esp(logw, m)
    draws = u.shape[0]
    left = np.full(draws, m)
    chosen = np.zeros((draws, m), dtype=np.intp)
    for j in range(n):
        open_ = left > 0
        k = np.maximum(left, 1)
        p = np.exp(logw[j] + table[j + 1, k - 1] - table[j, k])
        take = open_ & (u[:, j] < p)
        slot = m - left
        chosen[take, slot[take]] = j
        left = left - take
    return chosen


def _enumerated_subsets(scores, config, u):
    levels = np.asarray(scores.indices)[None, :]
    subsets, probs = subset_distribution(levels, scores.support, config.m, config.score_kind, config.epsilon)
    cum = np.cumsum(probs[0])
    idx = np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1)
    return subsets[idx]


def sample_subsets(scores: ScoreVector, config: SelectionConfig, size: int, seed: int) -> np.ndarray:
    """``size`` independent draws of the subset mechanism, shape (size, m)."""
    if len(scores) != config.n:
        raise ConfigError(f"score vector has {len(scores)} entries, config expects n={config.n}")
    out = []
    for c, start in enumerate(range(0, size, DRAW_CHUNK)):
        rows = min(DRAW_CHUNK, size - start)
        rng = make_rng(seed, c)
        if config.product_form:
            logw = applicant_log_weights(config.epsilon, scores.values, scores.support, config.m)
            out.append(_sequential_subsets(logw, config.m, rng.random((rows, config.n))))
        else:
            out.append(_enumerated_subsets(scores, config, rng.random(rows)))
    if not out:
        return np.zeros((0, config.m), dtype=np.intp)
    return np.vstack(out)


def select_subset(scores: ScoreVector, config: SelectionConfig, seed: int) -> SelectionOutcome:
    """One draw of the m-subset mechanism.

    Raises:
      BudgetExceeded: A non-mean score kind with too many subsets to enumerate.
    """
    chosen = sample_subsets(scores, config, 1, seed)[0]
    return SelectionOutcome(tuple(sorted(int(i) for i in chosen)), "exponential", seed)


def select_argmax(scores: ScoreVector, config: SelectionConfig, seed: int) -> SelectionOutcome:
    """Non-private baseline: a best subset, ties broken uniformly."""
    rng = make_rng(seed)
    m = config.m
    keys = scores.keys
    if config.product_form:
        order = np.sort(keys)[::-1]
        threshold = order[m - 1]
        above = np.flatnonzero(keys > threshold)
        tied = np.flatnonzero(keys == threshold)
        extra = rng.choice(tied, size=m - len(above), replace=False)
        chosen = np.concatenate([above, extra])
    else:
        levels = np.asarray(scores.indices)[None, :]
        subsets, probs = subset_distribution(levels, scores.support, m, config.score_kind, math.inf)
        winners = np.flatnonzero(probs[0] > 0)
        chosen = subsets[winners[rng.integers(len(winners))]]
    return SelectionOutcome(tuple(sorted(int(i) for i in chosen)), "argmax", seed)


# ---------------------------------------------------------------------------
# Differential privacy check


@dataclass(frozen=True)
class DPReport:
    epsilon: float
    bound: float
    max_ratio: float
    vectors: int
    neighbors: int
    worst: tuple | None  # (D, D') as level-index tuples

    @property
    def holds(self) -> bool:
        return self.max_ratio <= self.bound * (1.0 + 1e-9)


def _log_outcome_ratio_product(levels, alt, j, support, config):
    """max over subsets of log Pr{G|D} - log Pr{G|D'} for the product form.

    ``Pr{G} = prod_{G} w / e_m``, so the ratio is ``e_m(D') / e_m(D)`` times
    ``w_j / w'_j`` for subsets holding j and 1 otherwise.
    """
    rho = support.array()
    logw = applicant_log_weights(config.epsilon, rho[levels], support, config.m)
    logw_alt = logw.copy()
    logw_alt[j] = applicant_log_weights(config.epsilon, [rho[alt]], support, config.m)[0]
    both = np.vstack([logw, logw_alt])
    esp = log_esp_values(both, config.m)[:, config.m]
    base = esp[1] - esp[0]
    return base + max(logw[j] - logw_alt[j], 0.0)


def _log_outcome_ratio_enum(levels, alt, j, support, config):
    lv = np.vstack([levels, levels])
    lv[1, j] = alt
    _, probs = subset_distribution(lv, support, config.m, config.score_kind, config.epsilon)
    with np.errstate(divide="ignore"):
        lp = np.log(probs)
    return float(np.max(lp[0] - lp[1]))


def verify_dp(
    model: PopulationModel, config: SelectionConfig, trials: int | None = None, seed: int = 0
) -> DPReport:
    """Largest probability ratio between neighboring score vectors.

    Neighbors change one applicant's score to any other support value.  With
    ``trials=None`` (or when it covers the whole space) every score vector is
    checked; otherwise ``trials`` vectors are drawn uniformly over the support.
    Exact outcome probabilities are compared, never sampled frequencies.
    """
    support = model.support
    K, n = support.size, config.n
    if trials is None or trials >= K**n:
        vectors = (np.asarray(v) for v in product(range(K), repeat=n))
        total = K**n
    else:
        rng = make_rng(seed)
        vectors = iter(rng.integers(0, K, size=(trials, n)))
        total = trials
    ratio_fn = _log_outcome_ratio_product if config.product_form else _log_outcome_ratio_enum
    worst_log, worst, neighbors = 0.0, None, 0
    for levels in vectors:
        for j in range(n):
            for alt in range(K):
                if alt == levels[j]:
                    continue
                neighbors += 1
                r = ratio_fn(levels, alt, j, support, config)
                if r > worst_log:
                    worst_log = r
                    other = levels.copy()
                    other[j] = alt
                    worst = (tuple(int(x) for x in levels), tuple(int(x) for x in other))
    return DPReport(
        epsilon=config.epsilon,
        bound=math.exp(config.epsilon),
        max_ratio=math.exp(worst_log),
        vectors=total,
        neighbors=neighbors,
        worst=worst,
    )
