"""Sufficient conditions for perfect fairness and privacy-level solvers.

:func:`solve_perfect_fairness` finds where the fairness gap crosses zero.
:func:`solve_constrained_optimum` maximizes accuracy under a privacy cap
and a fairness cap, while :func:`fairness_threshold` finds how far epsilon
can grow before the mechanism is less fair than the non-private argmax rule.

All solvers work on a curve evaluator from :mod:`fairselect.curves`, so they
run on the exact engine when the instance is small and on common-random-number
Monte Carlo curves otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import make_curve_evaluator
from .errors import ConfigError, InfeasibleConstraint, NoRootBracketed
from .model import MlrResult, PopulationModel, check_mlr, derive_marginals
from .montecarlo import DEFAULT_SAMPLES
from .selection import (
    SelectionConfig,
    compositions,
    levels_from_counts,
    log_multinomial,
    subset_scores,
)

THEOREMS = ("T1", "T2", "T5", "T_appendix_scorefns", "T_dp")
VERDICTS = ("satisfied", "violated", "near_violation")
SOLVE_KINDS = ("perfect_fairness_root", "constrained_optimum", "fairness_threshold")

DEFAULT_TOL = 1e-6
DEFAULT_HI = 2.0**15
SCAN_START = 0.01
DEGENERATE_FLAG = "degenerate: identically zero"
_TIE_TOL = 1e-12
_MAX_BISECTIONS = 200
_SCORE_ENUM_LIMIT = 2_000_000


# ---------------------------------------------------------------------------
# Condition checks


@dataclass(frozen=True)
class ConditionReport:
    """Verdict on one theorem's sufficient conditions.

    Attributes:
      theorem: One of ``THEOREMS``.
      condition_values: The quantities the verdict is computed from.
      verdict: One of ``VERDICTS``.
      direction: ``"a=0"`` or ``"a=1"`` for the group playing the role of
        ``a`` in the theorem (the group with the higher mean score when the
        conditions hold, the group favored by both quantities when they point
        the same way), or ``"none"``.
    """

    theorem: str
    condition_values: dict = field(default_factory=dict)
    verdict: str = "violated"
    direction: str = "none"

    @property
    def satisfied(self) -> bool:
        return self.verdict == "satisfied"


def expected_subset_score(model: PopulationModel, m: int, kind: str, pmf_i) -> float:
    """E{v(G, D)} for a subset G holding applicant i and m-1 random peers.

    Applicant i's score follows ``pmf_i`` and the peers are iid from f_R.
    """
    support = model.support
    f_R = derive_marginals(model).f_R
    if m == 1:
        return float(np.dot(pmf_i, support.array()))
    active = np.flatnonzero(f_R > 0)
    counts = compositions(m - 1, len(active))
    if len(counts) * support.size > _SCORE_ENUM_LIMIT:
        raise ConfigError(f"subset score expectation for m={m} is too large to enumerate")
    probs = np.exp(log_multinomial(counts, f_R[active]))
    peers = active[levels_from_counts(counts)]
    rho = support.array()
    total = 0.0
    for k in np.flatnonzero(np.asarray(pmf_i) > 0):
        vals = np.hstack([np.full((len(peers), 1), rho[k]), rho[peers]])
        total += pmf_i[k] * math.fsum(probs * subset_scores(vals, kind))
    return total


def _pair_verdict(dz, dz_hw, dr, exact):
    """Verdict for the "selected less but scores higher" pair of conditions.

    ``dz`` is the group-0 minus group-1 selection difference under argmax
    selection and ``dr`` the matching score difference.  The conditions hold
    for ``a`` when the two differences have strictly opposite signs.
    """
    if abs(dr) <= _TIE_TOL or (exact and abs(dz) <= _TIE_TOL):
        return "violated", "none"
    a_high = "a=0" if dr > 0 else "a=1"
    opposite = dz * dr < 0
    straddles = not exact and abs(dz) <= dz_hw
    if straddles:
        return "near_violation", a_high
    if opposite:
        return "satisfied", a_high
    return "violated", a_high


def _strictness(diffs, sign):
    """Monotonicity grade of a sequence: ``"strict"``, ``"weak"`` or ``"no"``."""
    d = sign * np.diff(diffs)
    if np.all(d > 0):
        return "strict"
    if np.all(d >= 0):
        return "weak"
    return "no"


def _theorem2(model: PopulationModel) -> ConditionReport:
    marg = derive_marginals(model)
    d = model.pmf(0, 1) - model.pmf(1, 1)
    f_R = marg.f_R
    fr_trend = _strictness(f_R, -1)
    if np.all(np.abs(d) <= _TIE_TOL):
        values = {
            "f0_minus_f1": "identically zero",
            "f_R_decreasing": fr_trend,
        }
        return ConditionReport("T2", values, "violated", "none")
    best = None
    for sign, label in ((1, "a=0"), (-1, "a=1")):
        dd = sign * d
        trend = _strictness(dd, 1)
        nonneg = bool(np.all(dd[1:] >= -_TIE_TOL))
        values = {
            "orientation": label,
            "f0_minus_f1_increasing": trend,
            "f_R_decreasing": fr_trend,
            "f0_minus_f1_nonnegative_above_lowest": nonneg,
        }
        if trend == "strict" and fr_trend == "strict" and nonneg:
            return ConditionReport("T2", values, "satisfied", label)
        if trend != "no" and fr_trend != "no" and nonneg:
            best = ConditionReport("T2", values, "near_violation", label)
    if best is not None:
        return best
    values = {
        "f0_minus_f1_increasing": _strictness(d, 1),
        "f0_minus_f1_decreasing": _strictness(d, -1),
        "f_R_decreasing": fr_trend,
    }
    return ConditionReport("T2", values, "violated", "none")


def default_theorems(config: SelectionConfig, notion: str = "eo") -> tuple:
    if notion == "dp":
        return ("T_dp",)
    if config.m == 1:
        return ("T1", "T2")
    if config.score_kind == "mean":
        return ("T5",)
    return ("T_appendix_scorefns",)


def check_conditions(
    model: PopulationModel,
    config: SelectionConfig,
    theorems=None,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> tuple:
    """Evaluate the sufficient conditions of the requested theorems.

    Selection probabilities under argmax selection come from the exact
    engine when it fits the budget.  On the Monte Carlo path a difference
    whose confidence interval contains zero gives ``near_violation``.

    Returns:
      A tuple of :class:`ConditionReport`, one per theorem.
    """
    theorems = default_theorems(config, notion) if theorems is None else tuple(theorems)
    unknown = set(theorems) - set(THEOREMS)
    if unknown:
        raise ConfigError(f"unknown theorems {sorted(unknown)}")
    marg = derive_marginals(model)
    reports = []
    ev = None
    for name in theorems:
        if name == "T2":
            reports.append(_theorem2(model))
            continue
        dp = name == "T_dp"
        if ev is None or ev.notion != ("dp" if dp else "eo"):
            ev = make_curve_evaluator(model, config, "dp" if dp else "eo", engine, samples, seed)
        y = None if dp else 1
        z0, _ = ev.conditional(math.inf, 0, y)
        z1, _ = ev.conditional(math.inf, 1, y)
        dz_hw = 0.0 if ev.exact else ev.gamma(math.inf)[1]
        sel = "Z" if config.m == 1 else "W"
        cond = "" if dp else ",Y=1"
        if name == "T_appendix_scorefns":
            kind = config.score_kind
            r0 = expected_subset_score(model, config.m, kind, model.pmf(0, 1))
            r1 = expected_subset_score(model, config.m, kind, model.pmf(1, 1))
            rname = "v"
        elif dp:
            r0, r1 = marg.mean_R_given_A
            rname = "R"
        else:
            r0, r1 = marg.mean_R_given_A_Y1
            rname = "R"
        dz = z0 - z1
        values = {
            f"E{{{sel}|A=0{cond}}}": z0,
            f"E{{{sel}|A=1{cond}}}": z1,
            f"{sel}_difference": dz,
            f"E{{{rname}|A=0{cond}}}": r0,
            f"E{{{rname}|A=1{cond}}}": r1,
            f"{rname}_difference": r0 - r1,
        }
        if not ev.exact:
            values[f"{sel}_difference_half_width"] = dz_hw
        verdict, direction = _pair_verdict(dz, dz_hw, r0 - r1, ev.exact)
        reports.append(ConditionReport(name, values, verdict, direction))
    return tuple(reports)


# ---------------------------------------------------------------------------
# Solvers


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a privacy-level solve.

    Attributes:
      epsilon_star: The solution.
      kind: One of ``SOLVE_KINDS``.
      achieved_gamma, achieved_theta: Curve values at ``epsilon_star``.
      bracket: Final ``(lo, hi)`` interval; for Monte Carlo roots this is the
        range the noise floor cannot resolve.
      evaluations: Gap evaluations spent.
      flags: Free-form notes such as ``DEGENERATE_FLAG``.
      sign_changes: Every scanned interval where the gap changes sign.
      gamma_half_width, theta_half_width: Monte Carlo half-widths; zero
        on the exact path.
      engine: ``"exact"`` or ``"monte-carlo"``.
      mlr: MLR verdict, attached by the constrained solver.
    """

    epsilon_star: float
    kind: str
    achieved_gamma: float
    achieved_theta: float
    bracket: tuple
    evaluations: int
    flags: tuple = ()
    sign_changes: tuple = ()
    gamma_half_width: float = 0.0
    theta_half_width: float = 0.0
    engine: str = "exact"
    mlr: MlrResult | None = None


def scan_grid(lo: float = SCAN_START, hi: float = DEFAULT_HI) -> list:
    """Geometric grid ``lo * 2^k`` up to and including ``hi``."""
    if not 0 < lo < hi:
        raise ConfigError(f"scan range needs 0 < lo < hi, got ({lo}, {hi})")
    grid = []
    e = lo
    while e < hi:
        grid.append(e)
        e *= 2.0
    grid.append(float(hi))
    return grid


def _groups_identical(model, notion):
    if notion == "eo":
        p0, p1 = model.pmf(0, 1), model.pmf(1, 1)
    else:
        p0, p1 = derive_marginals(model).f_R_given_A
    return bool(np.all(np.abs(p0 - p1) <= _TIE_TOL))


def _result(ev, eps, kind, bracket, flags=(), sign_changes=(), mlr=None):
    g, gh = ev.gamma(eps)
    t, th = ev.theta(eps)
    return SolveResult(
        epsilon_star=float(eps),
        kind=kind,
        achieved_gamma=g,
        achieved_theta=t,
        bracket=(float(bracket[0]), float(bracket[1])),
        evaluations=ev.evaluations,
        flags=tuple(flags),
        sign_changes=tuple(sign_changes),
        gamma_half_width=gh,
        theta_half_width=th,
        engine=ev.name,
        mlr=mlr,
    )


def _bisect(fn, lo, hi, f_lo, stop):
    """Bisect ``fn`` on ``[lo, hi]`` where ``fn`` changes sign.

    ``stop(x, value, half_width)`` ends the search early.  Returns
    ``(x, lo, hi, stopped)``.
    """
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid, lo, hi, False
        val, hw = fn(mid)
        if stop(mid, val, hw):
            return mid, lo, hi, True
        if (val > 0) == (f_lo > 0):
            lo, f_lo = mid, val
        else:
            hi = mid
    return 0.5 * (lo + hi), lo, hi, False


def solve_perfect_fairness(
    model: PopulationModel,
    config: SelectionConfig,
    notion: str = "eo",
    bracket_hint=None,
    tol: float = DEFAULT_TOL,
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> SolveResult:
    """Smallest epsilon > 0 where the fairness gap vanishes.

    The gap is scanned on a geometric grid; the first bracketed sign change is
    refined by bisection until ``|gamma| <= tol``.  On Monte Carlo curves the
    bisection stops once the confidence interval contains zero, since finer
    steps would only chase noise; the reported bracket is then the range the
    estimate cannot separate from zero.

    Args:
      bracket_hint: ``(lo, hi)`` scan range; defaults to ``(0.01, 2**15)``.

    Raises:
      NoRootBracketed: The gap keeps one sign over the scanned range.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    lo, hi = bracket_hint if bracket_hint is not None else (SCAN_START, DEFAULT_HI)
    ev = make_curve_evaluator(model, config, notion, engine, samples, seed)
    if _groups_identical(model, notion):
        return _result(ev, 0.0, "perfect_fairness_root", (0.0, 0.0), (DEGENERATE_FLAG,))
    grid = scan_grid(lo, hi)
    values = [ev.gamma(e)[0] for e in grid]
    for e, v in zip(grid, values):
        if v == 0.0:
            return _result(ev, e, "perfect_fairness_root", (e, e))
    changes = [(grid[k], grid[k + 1]) for k in range(len(grid) - 1) if (values[k] > 0) != (values[k + 1] > 0)]
    if not changes:
        sign = "positive" if values[0] > 0 else "negative"
        raise NoRootBracketed(
            f"fairness gap stays {sign} on [{grid[0]:g}, {grid[-1]:g}]", scanned=(grid[0], grid[-1])
        )
    a, b = changes[0]
    f_a = values[grid.index(a)]

    def stop(x, val, hw):
        return abs(val) <= tol or (not ev.exact and abs(val) <= hw)

    fa_val, fa_hw = ev.gamma(a)
    if stop(a, fa_val, fa_hw):
        x, blo, bhi, stopped = a, a, b, True
    else:
        x, blo, bhi, stopped = _bisect(ev.gamma, a, b, f_a, stop)
    flags = []
    if len(changes) > 1:
        flags.append(f"multiple sign changes: {len(changes)}")
    if not ev.exact and stopped and abs(ev.gamma(x)[0]) > tol:
        flags.append("stopped at Monte Carlo noise floor")
        blo, bhi = _noise_interval(ev, x, grid[0], grid[-1], max(bhi - blo, tol))
    elif not stopped:
        flags.append("tolerance not reached")
    return _result(ev, x, "perfect_fairness_root", (blo, bhi), flags, changes)


def _noise_interval(ev, x, lo, hi, start_step):
    """Largest interval around ``x`` inside ``[lo, hi]`` whose gap estimates
    cannot be separated from zero.

    Steps outward with doubling steps until the confidence interval excludes
    zero, then bisects each edge.  Not limited to the scan cell holding the
    sign change: correlated Monte Carlo error can move that cell.
    """

    def inside(e):
        v, hw = ev.gamma(e)
        return abs(v) <= hw

    def edge(direction, bound):
        good, step = x, start_step
        bad = None
        while bad is None:
            trial = x + direction * step
            if (trial - bound) * direction >= 0:
                if inside(bound):
                    return bound
                bad = bound
            elif inside(trial):
                good = trial
                step *= 2.0
            else:
                bad = trial
        for _ in range(20):
            mid = 0.5 * (good + bad)
            if inside(mid):
                good = mid
            else:
                bad = mid
        return good

    return edge(-1.0, lo), edge(1.0, hi)


def _boundary(ev, gamma_max, feasible_eps, infeasible_eps, tol):
    """Largest feasible epsilon between a feasible and an infeasible point."""

    def excess(e):
        v, hw = ev.gamma(e)
        return abs(v) - gamma_max - _TIE_TOL, hw

    lo, hi = feasible_eps, infeasible_eps
    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if excess(mid)[0] <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def solve_constrained_optimum(
    model: PopulationModel,
    config: SelectionConfig,
    epsilon_max: float,
    gamma_max: float,
    tol: float = DEFAULT_TOL,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    grid_points: int = 201,
) -> SolveResult:
    """Most accurate epsilon subject to ``eps <= epsilon_max`` and
    ``|gamma| <= gamma_max``.

    When the score distributions have the MLR property, accuracy is
    nondecreasing in epsilon, so the answer is ``epsilon_max`` if it is
    feasible and otherwise the largest epsilon where ``|gamma|`` meets the
    cap.  Without MLR the accuracy is maximized over a uniform grid (plus the
    refined feasibility boundaries) and the result is flagged.

    Raises:
      InfeasibleConstraint: ``gamma_max`` or ``tol`` is negative, so even the
        uniform selector at epsilon = 0 is ruled out.
    """
    if gamma_max < 0 or tol < 0:
        raise InfeasibleConstraint(
            f"gamma_max={gamma_max} and tol={tol} must be nonnegative; epsilon = 0 has gap 0"
        )
    if not epsilon_max > 0 or not math.isfinite(epsilon_max):
        raise ConfigError("epsilon_max must be positive and finite")
    mlr = check_mlr(model)
    ev = make_curve_evaluator(model, config, notion, engine, samples, seed)
    kind = "constrained_optimum"

    def feasible(e):
        # uniform selection at epsilon = 0 has gap 0 by definition
        return e == 0.0 or abs(ev.gamma(e)[0]) <= gamma_max + _TIE_TOL

    grid = list(np.linspace(0.0, epsilon_max, grid_points))
    ok = [feasible(e) for e in grid]
    switches = sum(1 for x, y in zip(ok, ok[1:]) if x != y)
    flags = []
    if switches > 1:
        flags.append("non-monotone gap: feasible set is not an interval")

    if mlr.holds:
        if ok[-1]:
            return _result(ev, epsilon_max, kind, (epsilon_max, epsilon_max), flags, mlr=mlr)
        last = max(k for k, v in enumerate(ok) if v)
        eps = _boundary(ev, gamma_max, grid[last], grid[last + 1], tol)
        return _result(ev, eps, kind, (grid[last], grid[last + 1]), flags, mlr=mlr)

    flags.append("MLR fails: accuracy monotonicity not guaranteed; grid search over theta")
    candidates = [e for e, v in zip(grid, ok) if v]
    for k in range(len(grid) - 1):
        if ok[k] and not ok[k + 1]:
            candidates.append(_boundary(ev, gamma_max, grid[k], grid[k + 1], tol))
    thetas = [ev.theta(e)[0] for e in candidates]
    best = int(np.argmax(thetas))
    eps = candidates[best]
    step = epsilon_max / (grid_points - 1)
    return _result(ev, eps, kind, (max(0.0, eps - step), min(epsilon_max, eps + step)), flags, mlr=mlr)


def fairness_threshold(
    model: PopulationModel,
    config: SelectionConfig,
    tol: float = 1e-9,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    hi: float = DEFAULT_HI,
) -> SolveResult:
    """Edge of the region where the mechanism is strictly fairer than argmax.

    Returns the first epsilon at which ``|gamma(eps)|`` climbs above
    ``|gamma_inf| + tol``, refined by bisection, so every epsilon in
    ``(0, epsilon_star)`` has ``|gamma| <= |gamma_inf| + tol``.  When the gap
    never exceeds the argmax gap on the scanned range, ``epsilon_star`` is
    the end of the range and the result is flagged.
    """
    ev = make_curve_evaluator(model, config, notion, engine, samples, seed)
    g_inf, g_inf_hw = ev.gamma(math.inf)
    kind = "fairness_threshold"
    if abs(g_inf) <= max(tol, g_inf_hw):
        return _result(ev, 0.0, kind, (0.0, 0.0), ("degenerate: argmax gap is zero",))
    level = abs(g_inf)
    grid = scan_grid(SCAN_START, hi)
    prev = 0.0
    for e in grid:
        v, hw = ev.gamma(e)
        if abs(v) > level + tol + hw:
            lo, up = prev, e
            for _ in range(_MAX_BISECTIONS):
                if up - lo <= 1e-9 * max(1.0, up):
                    break
                mid = 0.5 * (lo + up)
                vm, hm = ev.gamma(mid)
                if abs(vm) > level + tol + hm:
                    up = mid
                else:
                    lo = mid
            return _result(ev, lo, kind, (lo, up))
        prev = e
    return _result(
        ev, grid[-1], kind, (grid[0], grid[-1]), ("gap stays within the argmax gap on the scanned range",)
    )


# ---------------------------------------------------------------------------
# Accuracy at perfect fairness


@dataclass(frozen=True)
class TableRow:
    m: int
    epsilon_o: float
    theta_o: float
    theta_inf: float
    reduction_pct: float
    note: str = ""


def accuracy_reduction_table(
    model: PopulationModel,
    configs,
    tol: float = DEFAULT_TOL,
    notion: str = "eo",
    engine: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> list:
    """Accuracy lost by running at the perfectly fair epsilon.

    One row per configuration: the root, the accuracy there, the argmax
    accuracy and the relative reduction in percent.  When no positive root
    exists the row reports epsilon_o = 0 and the accuracy of uniform
    selection.
    """
    rows = []
    for config in configs:
        ev = make_curve_evaluator(model, config, notion, engine, samples, seed)
        theta_inf = ev.theta(math.inf)[0]
        note = ""
        try:
            res = solve_perfect_fairness(
                model, config, notion, tol=tol, engine=engine, samples=samples, seed=seed
            )
            eps_o, theta_o = res.epsilon_star, res.achieved_theta
            if DEGENERATE_FLAG in res.flags:
                note = "degenerate"
        except NoRootBracketed as err:
            eps_o, theta_o = 0.0, ev.theta(0.0)[0]
            note = f"no root: {err}"
        reduction = (theta_inf - theta_o) / theta_inf * 100.0 if theta_inf > 0 else 0.0
        rows.append(TableRow(config.m, eps_o, theta_o, theta_inf, reduction, note))
    return rows
