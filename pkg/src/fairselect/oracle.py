"""Brute-force ground truth for tiny instances.

Literal sums over every score vector in R^n and every m-subset, in plain
double precision.  Nothing here is shared with the exact engine beyond the
model types; every formula, down to the tie handling, is re-derived
locally on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

from .engine import Accuracy, FairnessGap
from .errors import LimitExceeded


@dataclass(frozen=True)
class OracleLimits:
    max_joint_states: int = 10**7
    max_subsets: int = 10**5

    def __post_init__(self):
        if self.max_joint_states <= 0 or self.max_subsets <= 0:
            raise ValueError("oracle limits must be positive")


@dataclass(frozen=True)
class OracleResult:
    gamma: FairnessGap
    theta: Accuracy
    selection_probabilities: tuple  # Pr{applicant i selected}, i = 0..n-1


def _check_limits(model, config, limits):
    states = model.support.size**config.n
    if states > limits.max_joint_states:
        raise LimitExceeded(f"{states} joint score vectors exceed {limits.max_joint_states}")
    subsets = math.comb(config.n, config.m)
    if subsets > limits.max_subsets:
        raise LimitExceeded(f"{subsets} subsets exceed {limits.max_subsets}")


def _delta(values, m, kind):
    lo, hi = values[0], values[-1]
    if m == 1:
        return hi - lo
    return {"mean": (hi - lo) / m, "min": hi - lo, "max": hi - lo, "rms": hi}[kind]


def _score(xs, kind):
    if kind == "mean":
        return sum(xs) / len(xs)
    if kind == "rms":
        return math.sqrt(sum(x * x for x in xs) / len(xs))
    if kind == "min":
        return min(xs)
    return max(xs)


def _key(ks, kind):
    if kind == "mean":
        return sum(ks)
    if kind == "rms":
        return sum(k * k for k in ks)
    if kind == "min":
        return min(ks)
    return max(ks)


def subset_probabilities(scores, m, kind, epsilon, delta):
    """Exponential-mechanism law over all m-subsets of one score vector."""
    subsets = list(combinations(range(len(scores)), m))
    logits = [epsilon * _score([scores[j] for j in g], kind) / (2.0 * delta) for g in subsets]
    top = max(logits)
    weights = [math.exp(x - top) for x in logits]
    total = sum(weights)
    return {g: w / total for g, w in zip(subsets, weights)}


def argmax_subset_probabilities(keys, m, kind):
    """Uniform law over the subsets with the largest exact score."""
    subsets = list(combinations(range(len(keys)), m))
    agg = [_key([keys[j] for j in g], kind) for g in subsets]
    best = max(agg)
    winners = [g for g, a in zip(subsets, agg) if a == best]
    return {g: 1.0 / len(winners) for g in winners}


def _marginals(model):
    K = model.support.size
    pmf = dict(model.score_pmf)
    prior = (model.prior_a0, 1.0 - model.prior_a0)
    f_R = [0.0] * K
    f_y1 = [0.0] * K
    pr_y1 = 0.0
    for a in (0, 1):
        q = model.qual_rate[a]
        pr_y1 += prior[a] * q
        for k in range(K):
            f_R[k] += prior[a] * (q * pmf[f"a{a}_y1"][k] + (1 - q) * pmf[f"a{a}_y0"][k])
            f_y1[k] += prior[a] * q * pmf[f"a{a}_y1"][k]
    f_y1 = [v / pr_y1 if pr_y1 > 0 else 0.0 for v in f_y1]
    group = {}
    for a in (0, 1):
        q = model.qual_rate[a]
        group["eo", a] = list(pmf[f"a{a}_y1"])
        group["dp", a] = [q * pmf[f"a{a}_y1"][k] + (1 - q) * pmf[f"a{a}_y0"][k] for k in range(K)]
    return f_R, f_y1, pr_y1, group


def _run(model, config, notion, index, law):
    n, m = config.n, config.m
    K = model.support.size
    f_R, f_y1, pr_y1, group = _marginals(model)
    g0, g1 = group[notion, 0], group[notion, 1]
    gamma = 0.0
    acc = 0.0
    marginal = [0.0] * n
    for vec in product(range(K), repeat=n):
        probs = law(vec)
        incl = [0.0] * n
        for g, p in probs.items():
            for j in g:
                incl[j] += p
        for i in range(n):
            rest = 1.0
            for k in range(n):
                if k != i:
                    rest *= f_R[vec[k]]
            if i == index:
                gamma += incl[i] * rest * (g0[vec[i]] - g1[vec[i]])
            acc += incl[i] * rest * pr_y1 * f_y1[vec[i]]
            marginal[i] += incl[i] * rest * f_R[vec[i]]
    return OracleResult(FairnessGap(gamma, notion), Accuracy(acc / m), tuple(marginal))


def oracle_gamma_theta(model, config, notion="eo", index=0, limits=OracleLimits()) -> OracleResult:
    """Exact gamma and theta at ``config.epsilon`` by literal enumeration."""
    _check_limits(model, config, limits)
    values = model.support.values
    kind = config.score_kind if config.m > 1 else "mean"
    delta = _delta(values, config.m, kind)

    def law(vec):
        return subset_probabilities([values[v] for v in vec], config.m, kind, config.epsilon, delta)

    return _run(model, config, notion, index, law)


def oracle_limit(model, config, notion="eo", index=0, limits=OracleLimits()) -> OracleResult:
    """Argmax-baseline gamma and theta with literal tie sets."""
    _check_limits(model, config, limits)
    keys = model.support.keys
    kind = config.score_kind if config.m > 1 else "mean"

    def law(vec):
        return argmax_subset_probabilities([keys[v] for v in vec], config.m, kind)

    return _run(model, config, notion, index, law)
