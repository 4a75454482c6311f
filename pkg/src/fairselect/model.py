"""Population model: finite score support and the joint law of (A, Y, R).

Scores live on a finite, strictly increasing support.  Values are rounded to
a fixed number of decimals on construction and every level also carries an
integer key (``value * 10**decimals``), so ties between scores, and between
sums of scores, are decided exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import NonNormalizedPmf, OutOfRangeProbability, UnsortedSupport

PMF_TOL = 1e-9
DEFAULT_DECIMALS = 6

# Sums within a few ulps of one are left untouched, which keeps
# build -> emit -> load idempotent.
_RENORM_SLACK = 4 * np.finfo(float).eps

PMF_KEYS = ("a0_y0", "a0_y1", "a1_y0", "a1_y1")


def pmf_key(a: int, y: int) -> str:
    return f"a{a}_y{y}"


@dataclass(frozen=True)
class ScoreSupport:
    values: tuple
    decimals: int = DEFAULT_DECIMALS

    def __post_init__(self):
        vals = tuple(round(float(v), self.decimals) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise UnsortedSupport("support needs at least two levels", "support")
        for v in vals:
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise OutOfRangeProbability(f"score {v} outside [0, 1]", "support")
        keys = self.keys
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise UnsortedSupport("support values must be strictly increasing", "support")

    @property
    def keys(self) -> tuple:
        scale = 10**self.decimals
        return tuple(int(round(v * scale)) for v in self.values)

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def lo(self) -> float:
        return self.values[0]

    @property
    def hi(self) -> float:
        return self.values[-1]

    @property
    def span(self) -> float:
        return self.values[-1] - self.values[0]

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class PopulationModel:
    """Joint law of (A, Y, R) for one applicant.

    Attributes:
      support: The score levels.
      prior_a0: Pr{A=0}.
      qual_rate: ``(Pr{Y=1|A=0}, Pr{Y=1|A=1})``.
      score_pmf: Four PMFs over the support keyed ``a{a}_y{y}``; stored as a
        tuple of ``(key, values)`` pairs in :data:`PMF_KEYS` order.
      metadata: Free-form ``(key, value)`` pairs (source, group labels).
    """

    support: ScoreSupport
    prior_a0: float
    qual_rate: tuple
    score_pmf: tuple
    metadata: tuple = field(default=(), compare=False)

    def pmf(self, a: int, y: int) -> np.ndarray:
        return np.asarray(dict(self.score_pmf)[pmf_key(a, y)], dtype=float)

    def prior(self, a: int) -> float:
        return self.prior_a0 if a == 0 else 1.0 - self.prior_a0

    @property
    def meta(self) -> dict:
        return dict(self.metadata)


def _check_probability(p, name, open_interval=False):
    p = float(p)
    if math.isnan(p) or p < 0.0 or p > 1.0 or (open_interval and p in (0.0, 1.0)):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise OutOfRangeProbability(f"{p} is outside {bounds}", name)
    return p


def _normalize_pmf(values, size, name):
    pmf = [float(v) for v in values]
    if len(pmf) != size:
        raise NonNormalizedPmf(f"expected {size} entries, got {len(pmf)}", name)
    for v in pmf:
        if math.isnan(v) or v < 0.0:
            raise OutOfRangeProbability(f"negative or NaN mass {v}", name)
    total = math.fsum(pmf)
    if abs(total - 1.0) > PMF_TOL:
        raise NonNormalizedPmf(f"sums to {total!r}, not 1", name)
    if abs(total - 1.0) > _RENORM_SLACK:
        pmf = [v / total for v in pmf]
    return tuple(pmf)


def build_model(
    support,
    prior_a0: float,
    qual_rates: Sequence[float],
    score_pmfs: Mapping,
    metadata: Mapping | None = None,
    decimals: int = DEFAULT_DECIMALS,
) -> PopulationModel:
    """Validate inputs and assemble a :class:`PopulationModel`.

    Args:
      support: Score levels, or an existing :class:`ScoreSupport`.
      prior_a0: Pr{A=0}, strictly inside (0, 1).
      qual_rates: Pr{Y=1|A=a} for a = 0, 1.
      score_pmfs: Mapping from ``(a, y)`` tuples or ``"a{a}_y{y}"`` strings to
        PMFs over the support.
      metadata: Optional descriptive fields carried along unvalidated.
      decimals: Fixed precision used for the support values.

    Raises:
      NonNormalizedPmf: A PMF is off from 1 by more than 1e-9.
      UnsortedSupport: Support values are not strictly increasing.
      OutOfRangeProbability: A probability lies outside its range.
    """
    if not isinstance(support, ScoreSupport):
        support = ScoreSupport(tuple(support), decimals)
    prior_a0 = _check_probability(prior_a0, "prior_a0", open_interval=True)
    if len(qual_rates) != 2:
        raise OutOfRangeProbability("need one qualification rate per group", "qual_rate")
    qual = tuple(_check_probability(q, f"qual_rate[{a}]") for a, q in enumerate(qual_rates))

    by_key = {}
    for k, v in score_pmfs.items():
        if isinstance(k, tuple):
            k = pmf_key(*k)
        by_key[k] = v
    missing = [k for k in PMF_KEYS if k not in by_key]
    if missing:
        raise NonNormalizedPmf(f"missing PMFs {missing}", "score_pmf")
    pmfs = tuple((k, _normalize_pmf(by_key[k], support.size, f"score_pmf.{k}")) for k in PMF_KEYS)
    meta = tuple(sorted((metadata or {}).items()))
    meta = tuple((k, tuple(v) if isinstance(v, list) else v) for k, v in meta)
    return PopulationModel(support, prior_a0, qual, pmfs, meta)


@dataclass(frozen=True)
class DerivedMarginals:
    f_R: np.ndarray
    f_R_given_Y1: np.ndarray
    f_R_given_Y0: np.ndarray
    f_R_given_A: np.ndarray  # shape (2, K)
    mean_R_given_A_Y1: np.ndarray  # E{R|A=a,Y=1}
    mean_R_given_A: np.ndarray  # E{R|A=a}
    pr_y1: float

    @property
    def means(self):
        return self.mean_R_given_A_Y1


@lru_cache(maxsize=64)
def derive_marginals(model: PopulationModel) -> DerivedMarginals:
    """Marginals of R by the law of total probability over (A, Y)."""
    rho = model.support.array()
    joint = {}
    for a in (0, 1):
        q = model.qual_rate[a]
        joint[a, 1] = model.prior(a) * q * model.pmf(a, 1)
        joint[a, 0] = model.prior(a) * (1.0 - q) * model.pmf(a, 0)
    f_R = ((joint[0, 0] + joint[0, 1]) + joint[1, 0]) + joint[1, 1]
    pr_y1 = model.prior(0) * model.qual_rate[0] + model.prior(1) * model.qual_rate[1]

    def _cond(num, den):
        if den <= 0.0:
            return np.zeros_like(num)
        return num / den

    f_y1 = _cond(joint[0, 1] + joint[1, 1], pr_y1)
    f_y0 = _cond(joint[0, 0] + joint[1, 0], 1.0 - pr_y1)
    f_a = np.stack(
        [model.qual_rate[a] * model.pmf(a, 1) + (1.0 - model.qual_rate[a]) * model.pmf(a, 0) for a in (0, 1)]
    )
    mean_y1 = np.array([math.fsum(rho * model.pmf(a, 1)) for a in (0, 1)])
    mean_a = np.array([math.fsum(rho * f_a[a]) for a in (0, 1)])
    for arr in (f_R, f_y1, f_y0, f_a, mean_y1, mean_a):
        arr.setflags(write=False)
    return DerivedMarginals(f_R, f_y1, f_y0, f_a, mean_y1, mean_a, float(pr_y1))


@dataclass(frozen=True)
class MlrResult:
    holds: bool
    witness: tuple | None = None

    def __bool__(self):
        return self.holds


def likelihood_ratio_holds(f1, f0, values, rel_tol=1e-12) -> MlrResult:
    """Is ``f1/f0`` nondecreasing over the support?

    Levels where both masses vanish are skipped.  Levels with ``f0 == 0`` and
    ``f1 > 0`` count as an infinite ratio and may only sit at the top.  On
    failure the witness is ``(rho, rho_prime)`` with ``rho > rho_prime`` and a
    strictly smaller ratio at ``rho``.
    """
    best = None  # index with the largest ratio seen so far
    for j in range(len(values)):
        if f1[j] == 0.0 and f0[j] == 0.0:
            continue
        if best is not None:
            # ratio(j) < ratio(best)  <=>  f1[j] f0[best] < f1[best] f0[j]
            lhs = f1[j] * f0[best]
            rhs = f1[best] * f0[j]
            if lhs < rhs * (1.0 - rel_tol):
                return MlrResult(False, (values[j], values[best]))
            if lhs > rhs:
                best = j
        else:
            best = j
    return MlrResult(True)


def check_mlr(model: PopulationModel) -> MlrResult:
    """Monotone likelihood ratio between f_{R|Y=1} and f_{R|Y=0}."""
    marg = derive_marginals(model)
    return likelihood_ratio_holds(marg.f_R_given_Y1, marg.f_R_given_Y0, model.support.values)
