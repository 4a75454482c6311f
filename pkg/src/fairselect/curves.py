"""One interface over the exact and Monte Carlo engines.

Solvers and the command line only need the gap and accuracy at a given
epsilon, with an uncertainty half-width that is zero on the exact path.
:func:`make_curve_evaluator` picks the engine and records which one it
picked.
"""

from __future__ import annotations

from .engine import evaluator, within_budget
from .errors import ConfigError
from .model import PopulationModel, derive_marginals
from .montecarlo import (
    DEFAULT_SAMPLES,
    CrnEvaluator,
    TradeoffCurve,
    TradeoffPoint,
    _check_grid,
    estimate_tradeoff_curve,
)
from .selection import NOTIONS, SelectionConfig

ENGINES = ("auto", "exact", "mc")


class ExactCurve:
    """Exact gap and accuracy; half-widths are always zero."""

    exact = True
    name = "exact"

    def __init__(self, model: PopulationModel, config: SelectionConfig, notion: str = "eo"):
        self.model = model
        self.config = config
        self.notion = notion
        self.evaluations = 0
        self._ev = evaluator(model, config.n, config.m, config.score_kind)

    def gamma(self, epsilon: float):
        self.evaluations += 1
        return self._ev.gamma(epsilon, self.notion), 0.0

    def theta(self, epsilon: float):
        return self._ev.theta(epsilon), 0.0

    def conditional(self, epsilon: float, a: int, y: int | None = 1):
        pmf = self.model.pmf(a, y) if y is not None else self._ev.marginals.f_R_given_A[a]
        return self._ev.expect(epsilon, pmf), 0.0


class MonteCarloCurve:
    """Common-random-number estimates; every epsilon reuses the same draws."""

    exact = False
    name = "monte-carlo"

    def __init__(
        self,
        model: PopulationModel,
        config: SelectionConfig,
        notion: str = "eo",
        samples: int = DEFAULT_SAMPLES,
        seed: int = 0,
    ):
        self.model = model
        self.config = config
        self.notion = notion
        self.evaluations = 0
        self._crn = CrnEvaluator(model, config, samples, seed)

    def gamma(self, epsilon: float):
        self.evaluations += 1
        est = self._crn.gamma(epsilon, self.notion)
        return est.mean, est.half_width_95

    def theta(self, epsilon: float):
        est = self._crn.theta(epsilon)
        return est.mean, est.half_width_95

    def conditional(self, epsilon: float, a: int, y: int | None = 1):
        est = self._crn.conditional(epsilon, a, y)
        return est.mean, est.half_width_95


def choose_engine(model: PopulationModel, config: SelectionConfig, engine: str = "auto") -> str:
    """``"exact"`` or ``"monte-carlo"`` for the requested engine flag."""
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if engine == "exact" or (engine == "auto" and within_budget(model, config)):
        return ExactCurve.name
    return MonteCarloCurve.name


def make_curve_evaluator(
    model: PopulationModel,
    config: SelectionConfig,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
):
    """Exact evaluator when the instance fits the budget, else Monte Carlo.

    ``engine="exact"`` raises :class:`BudgetExceeded` on large instances
    instead of falling back.
    """
    if notion not in NOTIONS:
        raise ConfigError(f"unknown fairness notion {notion!r}; expected one of {NOTIONS}")
    if choose_engine(model, config, engine) == ExactCurve.name:
        return ExactCurve(model, config, notion)
    return MonteCarloCurve(model, config, notion, samples, seed)


def tradeoff_curve(
    model: PopulationModel,
    config: SelectionConfig,
    epsilon_grid,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    workers: int = 1,
):
    """Gap and accuracy on a grid.  Returns ``(curve, engine_name)``.

    The epsilon = 0 point is written from its definition on either engine:
    selection is uniform, so the gap is zero and the accuracy is Pr{Y=1}.
    The engines themselves reproduce both values to rounding error.
    """
    grid = _check_grid(epsilon_grid)
    if notion not in NOTIONS:
        raise ConfigError(f"unknown fairness notion {notion!r}; expected one of {NOTIONS}")
    pr_y1 = derive_marginals(model).pr_y1

    def uniform_point():
        return TradeoffPoint(0.0, 0.0, 0.0, pr_y1, 0.0, config.m, notion, True)

    if choose_engine(model, config, engine) == ExactCurve.name:
        ev = ExactCurve(model, config, notion)
        points = []
        for eps in grid:
            if eps == 0.0:
                points.append(uniform_point())
                continue
            g, _ = ev.gamma(eps)
            t, _ = ev.theta(eps)
            points.append(TradeoffPoint(eps, g, 0.0, t, 0.0, config.m, notion, True))
        return TradeoffCurve(tuple(points)), ExactCurve.name
    curve = estimate_tradeoff_curve(model, config, grid, samples, seed, notion, workers)
    points = [uniform_point() if p.epsilon == 0.0 else p for p in curve]
    return TradeoffCurve(tuple(points)), MonteCarloCurve.name
