"""Fairness and accuracy of differentially private selection.

A pool of n applicants draws qualification scores from a two-group
population, and the exponential mechanism selects m of them.  The package
computes the fairness gap and the accuracy of that selection as functions of
the privacy parameter epsilon, exactly for small instances and by Monte Carlo
otherwise.
"""

__version__ = "0.1.0"

from .analysis import (
    ConditionReport,
    SolveResult,
    TableRow,
    accuracy_reduction_table,
    check_conditions,
    fairness_threshold,
    solve_constrained_optimum,
    solve_perfect_fairness,
)
from .curves import ExactCurve, MonteCarloCurve, make_curve_evaluator, tradeoff_curve
from .dataio import (
    GroupScoreTable,
    emit_curve,
    emit_model,
    from_group_tables,
    load_curve,
    load_group_tables,
    load_model,
    parse_model,
)
from .datasets import standin_model
from .engine import (
    Accuracy,
    ExactEvaluator,
    FairnessGap,
    conditional_inclusion,
    demographic_parity_gap,
    derivative_coefficient,
    gamma_exact,
    gamma_prime_zero,
    limit_gamma_theta,
    theta_exact,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    EngineInvariantError,
    FairSelectError,
    InconsistentSupport,
    InfeasibleConstraint,
    LimitExceeded,
    ModelError,
    NoRootBracketed,
    NonMonotoneCdf,
    NonNormalizedPmf,
    OutOfRangeProbability,
    ParseError,
    SchemaError,
    UnsortedSupport,
)
from .model import (
    DerivedMarginals,
    MlrResult,
    PopulationModel,
    ScoreSupport,
    build_model,
    check_mlr,
    derive_marginals,
)
from .montecarlo import (
    Condition,
    CrnEvaluator,
    Estimate,
    TradeoffCurve,
    TradeoffPoint,
    estimate_conditional_expectation,
    estimate_tradeoff_curve,
)
from .oracle import OracleLimits, OracleResult, oracle_gamma_theta, oracle_limit
from .sampler import (
    DPReport,
    ScoreVector,
    SelectionOutcome,
    select_argmax,
    select_one,
    select_subset,
    verify_dp,
)
from .selection import SelectionConfig, sensitivity
