"""Selection configuration and numerical kernels.

Both engines build on the kernels here, and the sampler draws subsets with
them.  The brute-force oracle deliberately does not use them.

Everything is computed in log space.  For the mean score the subset
mechanism factorizes over applicants, Pr{G} proportional to
prod_{j in G} w_j, so the probability that applicant i is in the chosen set
is ``w_i e_{m-1}(peers) / e_m(all)`` where ``e_k`` are elementary symmetric
polynomials of the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import BudgetExceeded, ConfigError

SCORE_KINDS = ("mean", "rms", "min", "max")
NOTIONS = ("eo", "dp")

# Full subset enumeration cap for the non-mean score kinds.
MAX_SUBSETS = 2_000_000
_LINEAR_RANGE = 600.0


@dataclass(frozen=True)
class SelectionConfig:
    n: int
    m: int = 1
    epsilon: float = 0.0
    score_kind: str = "mean"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"pool size n must be an integer >= 2, got {self.n}")
        if int(self.m) != self.m or not 1 <= self.m < self.n:
            raise ConfigError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        eps = float(self.epsilon)
        if math.isnan(eps) or eps < 0.0 or math.isinf(eps):
            raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.score_kind not in SCORE_KINDS:
            raise ConfigError(f"unknown score kind {self.score_kind!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "epsilon", eps)

    def with_epsilon(self, epsilon: float) -> "SelectionConfig":
        return replace(self, epsilon=epsilon)

    @property
    def product_form(self) -> bool:
        """True when the subset mechanism factorizes over applicants."""
        return self.m == 1 or self.score_kind == "mean"


def sensitivity(support, m: int, kind: str = "mean") -> float:
    """Sensitivity of the selection score under a one-applicant change.

    Derived from the declared support range rather than assuming [0, 1].
    For ``rms`` the worst case over one coordinate, the top support value,
    is used.
    """
    span = support.span
    if m == 1:
        return span
    if kind == "mean":
        return span / m
    if kind in ("min", "max"):
        return span
    if kind == "rms":
        return support.hi
    raise ConfigError(f"unknown score kind {kind!r}")


def applicant_log_weights(epsilon: float, values, support, m: int) -> np.ndarray:
    """Per-applicant log weights ``eps * r / (2 m Delta)`` for the mean score."""
    delta = sensitivity(support, m, "mean")
    return epsilon * np.asarray(values, dtype=float) / (2.0 * m * delta)


def relative_log_weights(epsilon: float, values, support, m: int) -> np.ndarray:
    """Log weights measured from the top support level.

    Inclusion probabilities are unchanged by a common factor on all weights;
    anchoring the top level at zero keeps them accurate at very large epsilon.
    """
    return applicant_log_weights(epsilon, np.asarray(values, dtype=float) - support.hi, support, m)


LIMIT_MARGIN = 40.0


def in_limit_regime(epsilon: float, support, n: int, m: int) -> bool:
    """True when the product-form mechanism equals argmax to double precision.

    Two subsets with different mean scores differ in log weight by at least
    the log-weight gap between adjacent support levels.  Once that gap
    exceeds ``LIMIT_MARGIN + log C(n, m)``, all non-best subsets together
    carry less than ``exp(-LIMIT_MARGIN)`` of the mass.
    """
    if math.isinf(epsilon):
        return True
    gap = float(np.min(np.diff(support.array())))
    step = epsilon * gap / (2.0 * m * sensitivity(support, m, "mean"))
    log_subsets = math.lgamma(n + 1) - math.lgamma(m + 1) - math.lgamma(n - m + 1)
    return step > LIMIT_MARGIN + log_subsets


def subset_scores(vals: np.ndarray, kind: str) -> np.ndarray:
    """Aggregate the last axis of ``vals`` (member scores) into a subset score."""
    if kind == "mean":
        return vals.mean(axis=-1)
    if kind == "rms":
        return np.sqrt((vals * vals).mean(axis=-1))
    if kind == "min":
        return vals.min(axis=-1)
    if kind == "max":
        return vals.max(axis=-1)
    raise ConfigError(f"unknown score kind {kind!r}")


def subset_keys(keys: np.ndarray, kind: str) -> np.ndarray:
    """Exact integer surrogate of :func:`subset_scores`, order-preserving."""
    if kind == "mean":
        return keys.sum(axis=-1)
    if kind == "rms":
        return (keys * keys).sum(axis=-1)
    if kind == "min":
        return keys.min(axis=-1)
    if kind == "max":
        return keys.max(axis=-1)
    raise ConfigError(f"unknown score kind {kind!r}")


# ---------------------------------------------------------------------------
# Count vectors


def n_compositions(total: int, parts: int) -> int:
    return math.comb(total + parts - 1, parts - 1)


@lru_cache(maxsize=32)
def compositions(total: int, parts: int) -> np.ndarray:
    """All count vectors of ``parts`` nonnegative ints summing to ``total``."""
    if parts == 1:
        out = np.array([[total]], dtype=np.int32)
    else:
        blocks = []
        for first in range(total, -1, -1):
            rest = compositions(total - first, parts - 1)
            head = np.full((rest.shape[0], 1), first, dtype=np.int32)
            blocks.append(np.hstack([head, rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def log_multinomial(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Log multinomial probability of each row of ``counts``."""
    total = counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(probs)
        terms = np.where(counts > 0, counts * logp[None, :], 0.0)
    return gammaln(total + 1.0) - gammaln(counts + 1.0).sum(axis=1) + terms.sum(axis=1)


def levels_from_counts(counts: np.ndarray) -> np.ndarray:
    """Expand count vectors into sorted level-index rows."""
    total = int(counts[0].sum()) if len(counts) else 0
    cum = np.cumsum(counts, axis=1)
    pos = np.arange(total)
    return (cum[:, :, None] <= pos[None, None, :]).sum(axis=1)


def counts_from_levels(levels: np.ndarray, n_levels: int) -> np.ndarray:
    rows = levels.shape[0]
    flat = (np.arange(rows)[:, None] * n_levels + levels).ravel()
    return np.bincount(flat, minlength=rows * n_levels).reshape(rows, n_levels)


# ---------------------------------------------------------------------------
# Elementary symmetric polynomials in log space


def log_esp_counts(counts: np.ndarray, logw: np.ndarray, m: int, return_shift: bool = False):
    """log e_j, j = 0..m, of the multiset holding ``counts[b, k]`` copies of
    ``exp(logw[k])``.  Uses ``prod_k (1 + w_k x)^{c_k}``.

    With ``return_shift`` the weights of row ``b`` are first divided by
    ``exp(shift[b])``, the largest weight present in that row, and
    ``(table, shift)`` is returned.  Ratios such as inclusion probabilities
    are then computed on an O(1) scale however large epsilon is.
    """
    rows, n_levels = counts.shape
    present = counts > 0
    shift = np.max(np.where(present, logw[None, :], -np.inf), axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    if not return_shift:
        shift = np.zeros(rows)
    out = np.full((rows, m + 1), -np.inf)
    out[:, 0] = 0.0
    if m == 1:
        # e_1 is a weighted count; every shifted weight is at most 1
        with np.errstate(divide="ignore"):
            out[:, 1] = np.log(np.sum(counts * np.exp(logw[None, :] - shift[:, None]), axis=1))
        return (out, shift) if return_shift else out
    lbinom = _log_binomial_table(int(counts.max(initial=0)), m)
    powers = np.arange(m + 1)
    used = logw[present.any(axis=0)]
    if used.size and m * (used.max() - used.min()) < _LINEAR_RANGE:
        # products of up to m shifted weights stay above exp(-_LINEAR_RANGE)
        binom = np.exp(lbinom)
        e = np.zeros((rows, m + 1))
        e[:, 0] = 1.0
        for k in range(n_levels):
            c = counts[:, k]
            if not c.any():
                continue
            w = np.exp(logw[k] - shift)
            add = binom[c] * w[:, None] ** powers[None, :]
            new = e.copy()
            for t in range(1, min(m, int(c.max())) + 1):
                new[:, t:] += e[:, : m + 1 - t] * add[:, t : t + 1]
            e = new
        with np.errstate(divide="ignore"):
            out = np.log(e)
        return (out, shift) if return_shift else out
    for k in range(n_levels):
        c = counts[:, k]
        if not c.any():
            continue
        # add[b, t] = log C(c_b, t) + t (logw_k - shift_b), -inf when t > c_b
        add = lbinom[c] + powers[None, :] * (logw[k] - shift)[:, None]
        new = out.copy()
        for t in range(1, min(m, int(c.max())) + 1):
            new[:, t:] = np.logaddexp(new[:, t:], out[:, : m + 1 - t] + add[:, t : t + 1])
        out = new
    if return_shift:
        return out, shift
    return out


def shifted_log_esp_values(logw: np.ndarray, m: int):
    """:func:`log_esp_values` on rows divided by their largest weight.

    Returns ``(table, shift)`` like ``log_esp_counts(..., return_shift=True)``.
    """
    shift = logw.max(axis=1)
    return log_esp_values(logw - shift[:, None], m), shift


@lru_cache(maxsize=64)
def _log_binomial_table(top: int, m: int) -> np.ndarray:
    """``table[c, t] = log C(c, t)`` for c <= top, t <= m; -inf when t > c."""
    c = np.arange(top + 1)[:, None]
    t = np.arange(m + 1)[None, :]
    with np.errstate(invalid="ignore"):
        table = gammaln(c + 1.0) - gammaln(t + 1.0) - gammaln(np.maximum(c - t, 0) + 1.0)
    table = np.where(t <= c, table, -np.inf)
    table.setflags(write=False)
    return table


def log_esp_values(logw: np.ndarray, m: int) -> np.ndarray:
    """log e_j, j = 0..m, of each row of weights ``exp(logw)``."""
    rows, cols = logw.shape
    out = np.full((rows, m + 1), -np.inf)
    out[:, 0] = 0.0
    for j in range(cols):
        shifted = out[:, :-1] + logw[:, j : j + 1]
        out[:, 1:] = np.logaddexp(out[:, 1:], shifted)
    return out


def inclusion_from_peer_esp(peer_esp: np.ndarray, logw_i, m: int) -> np.ndarray:
    """Pr{i selected} from the peers' log ESP table and i's log weight."""
    lnum = logw_i + peer_esp[:, m - 1]
    lden = np.logaddexp(peer_esp[:, m], lnum)
    return np.exp(lnum - lden)


def limit_inclusion_from_counts(peer_counts: np.ndarray, level_i: int, m: int) -> np.ndarray:
    """Argmax-baseline inclusion probability of i for the mean score.

    The best subsets take everyone above the m-th largest level ``t`` and
    break ties uniformly among the ``e`` applicants at ``t``.
    """
    tot = peer_counts.copy()
    tot[:, level_i] += 1
    cum_desc = np.cumsum(tot[:, ::-1], axis=1)[:, ::-1]
    t = (cum_desc >= m).sum(axis=1) - 1
    n_levels = tot.shape[1]
    above = np.where(t + 1 < n_levels, cum_desc[np.arange(len(t)), np.minimum(t + 1, n_levels - 1)], 0)
    at_t = tot[np.arange(len(t)), t]
    out = np.where(level_i > t, 1.0, 0.0)
    tie = level_i == t
    out = np.where(tie, (m - above) / np.maximum(at_t, 1), out)
    return out


# ---------------------------------------------------------------------------
# Explicit subset enumeration (non-mean kinds, tie sets)


@lru_cache(maxsize=64)
def subset_table(n: int, m: int) -> np.ndarray:
    if math.comb(n, m) > MAX_SUBSETS:
        raise BudgetExceeded(f"C({n},{m}) = {math.comb(n, m)} subsets exceeds {MAX_SUBSETS}")
    table = np.array(list(combinations(range(n), m)), dtype=np.intp).reshape(-1, m)
    table.setflags(write=False)
    return table


def subset_distribution(levels: np.ndarray, support, m: int, kind: str, epsilon: float):
    """Exponential-mechanism probabilities of every m-subset.

    Args:
      levels: (B, n) level indices of the realized score vectors.
      epsilon: Privacy parameter; ``math.inf`` gives the argmax baseline with
        uniform tie-breaking over the best subsets.

    Returns:
      ``(subsets, probs)`` with ``subsets`` the (C, m) index table and
      ``probs`` of shape (B, C).
    """
    n = levels.shape[1]
    subsets = subset_table(n, m)
    if math.isinf(epsilon):
        keys = np.asarray(support.keys, dtype=np.int64)[levels][:, subsets]
        agg = subset_keys(keys, kind)
        best = agg == agg.max(axis=1, keepdims=True)
        probs = best / best.sum(axis=1, keepdims=True)
        return subsets, probs
    vals = support.array()[levels][:, subsets]
    delta = sensitivity(support, m, kind)
    logits = epsilon * subset_scores(vals, kind) / (2.0 * delta)
    probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    return subsets, probs


def first_inclusion_by_enumeration(levels, support, m, kind, epsilon) -> np.ndarray:
    """Pr{applicant 0 selected} for each row of ``levels``."""
    subsets, probs = subset_distribution(levels, support, m, kind, epsilon)
    has_first = subsets[:, 0] == 0
    return probs[:, has_first].sum(axis=1)
