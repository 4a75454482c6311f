"""Command-line front end.

Every command that writes an output file also writes a run manifest next to
it (``<out>.manifest.json``).  The manifest records the argument vector, the
resolved configuration, the engine that ran and the budgets in force;
``fairselect replay <manifest>`` re-runs it.

Exit codes: 0 success, 1 failed verification, 2 input error, 3 budget
exceeded, 4 no root or infeasible constraint.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_HI,
    DEFAULT_TOL,
    accuracy_reduction_table,
    check_conditions,
    fairness_threshold,
    solve_constrained_optimum,
    solve_perfect_fairness,
)
from .curves import choose_engine, tradeoff_curve
from .dataio import emit_curve, load_model
from .engine import ENUM_BUDGET, MEAN_BUDGET, SINGLE_BUDGET, exact_cost
from .errors import (
    BudgetExceeded,
    ConfigError,
    InfeasibleConstraint,
    ModelError,
    NoRootBracketed,
    ParseError,
    SchemaError,
)
from .model import check_mlr, derive_marginals
from .montecarlo import DEFAULT_SAMPLES
from .sampler import GENERATOR, verify_dp
from .selection import NOTIONS, SCORE_KINDS, SelectionConfig

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_NO_ROOT = 4

MANIFEST_SUFFIX = ".manifest.json"


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairselect",
        description="Fairness and accuracy of differentially private selection.",
    )
    parser.add_argument("--version", action="version", version=f"fairselect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--model", required=True, help="model file (JSON, format v1)")
        if needs_config:
            p.add_argument("--n", type=int, required=True, help="pool size")
            p.add_argument("--m", type=int, default=1, help="number of selections")
            p.add_argument("--score-kind", choices=SCORE_KINDS, default="mean")
            p.add_argument("--notion", choices=NOTIONS, default="eo")
            p.add_argument("--engine", choices=("auto", "exact", "mc"), default="auto")
            p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file; stdout when omitted")
        p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("validate", help="check a model file and print its marginals")
    common(p, needs_config=False)

    p = sub.add_parser("curve", help="fairness gap and accuracy over an epsilon grid")
    common(p)
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--eps", type=float, help="a single epsilon")
    grid.add_argument("--eps-grid", type=_float_list, help="comma-separated epsilons")
    grid.add_argument("--eps-max", type=float, help="uniform grid on [0, eps-max]")
    p.add_argument("--points", type=int, default=41, help="grid size with --eps-max")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(format="csv")

    p = sub.add_parser("solve", help="solve for a privacy level")
    common(p)
    p.add_argument("--mode", choices=("fair-root", "constrained", "threshold"), required=True)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--eps-max", type=float, help="privacy cap (constrained mode)")
    p.add_argument("--gamma-max", type=float, help="fairness cap (constrained mode)")
    p.add_argument("--hi", type=float, default=DEFAULT_HI, help="end of the root scan")

    p = sub.add_parser("conditions", help="check the sufficient conditions for perfect fairness")
    common(p)

    p = sub.add_parser("report-table1", help="accuracy at the perfectly fair epsilon, per m")
    common(p)
    p.add_argument("--m-list", type=_int_list, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(format="csv")

    p = sub.add_parser("verify-dp", help="check the differential privacy bound exhaustively")
    common(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--trials", type=int, default=None, help="random vectors; exhaustive when omitted")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


# ---------------------------------------------------------------------------
# Output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2) + "\n").encode("utf-8")


def _rows_csv(columns, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format(v, ".12g") if isinstance(v, float) else str(v) for v in r])
    return buf.getvalue().encode("utf-8")


class Run:
    """Collects the outputs and manifest data of one command."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.start = time.perf_counter()
        self.engine = None
        self.config = {}
        self.budgets = {}

    def write(self, payload: bytes):
        out = getattr(self.args, "out", None)
        if out:
            with open(out, "wb") as fh:
                fh.write(payload)
            self._write_manifest(out)
        else:
            sys.stdout.write(payload.decode("utf-8"))

    def _write_manifest(self, out):
        manifest = {
            "tool": "fairselect",
            "version": __version__,
            "command": self.args.command,
            "argv": self.argv,
            "config": self.config,
            "seed": getattr(self.args, "seed", None),
            "rng": GENERATOR,
            "engine": self.engine,
            "budgets": self.budgets,
            "output": out,
            "wall_time_s": round(time.perf_counter() - self.start, 6),
        }
        with open(out + MANIFEST_SUFFIX, "wb") as fh:
            fh.write(_dump_json(manifest))


def _config(args, epsilon=0.0) -> SelectionConfig:
    return SelectionConfig(args.n, args.m, epsilon, args.score_kind)


def _record(run, model, config):
    run.config = {
        "n": config.n,
        "m": config.m,
        "score_kind": config.score_kind,
        "notion": run.args.notion,
        "samples": run.args.samples,
        "engine_flag": run.args.engine,
    }
    run.engine = choose_engine(model, config, run.args.engine)
    cost, budget = exact_cost(model, config)
    run.budgets = {
        "exact_cost": cost,
        "exact_budget": budget,
        "single_budget": SINGLE_BUDGET,
        "mean_budget": MEAN_BUDGET,
        "enum_budget": ENUM_BUDGET,
    }


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args, run) -> int:
    model = load_model(args.model)
    marg = derive_marginals(model)
    mlr = check_mlr(model)
    report = {
        "valid": True,
        "support": list(model.support.values),
        "prior_a0": model.prior_a0,
        "qual_rate": list(model.qual_rate),
        "pr_y1": marg.pr_y1,
        "f_R": marg.f_R.tolist(),
        "mean_R_given_A_Y1": marg.mean_R_given_A_Y1.tolist(),
        "mean_R_given_A": marg.mean_R_given_A.tolist(),
        "mlr": {"holds": mlr.holds, "witness": mlr.witness},
    }
    if not mlr.holds:
        rho, rho2 = mlr.witness
        print(
            f"warning: likelihood ratio f(R|Y=1)/f(R|Y=0) decreases between {rho2} and {rho}",
            file=sys.stderr,
        )
    run.write(_dump_json(report))
    return EXIT_OK


def cmd_curve(args, run) -> int:
    model = load_model(args.model)
    config = _config(args)
    if args.eps is not None:
        grid = [args.eps]
    elif args.eps_grid is not None:
        grid = args.eps_grid
    else:
        if args.points < 2:
            raise ConfigError("--points must be at least 2")
        grid = [float(x) for x in np.linspace(0.0, args.eps_max, args.points)]
    _record(run, model, config)
    run.config["epsilon_grid"] = grid
    run.config["workers"] = args.workers
    curve, engine = tradeoff_curve(
        model, config, grid, args.notion, args.engine, args.samples, args.seed, args.workers
    )
    run.engine = engine
    run.write(emit_curve(curve, args.format))
    return EXIT_OK


def _solve_report(res):
    d = asdict(res)
    if res.mlr is not None:
        d["mlr"] = {"holds": res.mlr.holds, "witness": res.mlr.witness}
    return d


def cmd_solve(args, run) -> int:
    model = load_model(args.model)
    config = _config(args)
    _record(run, model, config)
    common = dict(notion=args.notion, engine=args.engine, samples=args.samples, seed=args.seed)
    try:
        if args.mode == "fair-root":
            tol = DEFAULT_TOL if args.tol is None else args.tol
            run.config.update(mode=args.mode, tol=tol, hi=args.hi)
            res = solve_perfect_fairness(model, config, bracket_hint=(0.01, args.hi), tol=tol, **common)
        elif args.mode == "constrained":
            if args.eps_max is None or args.gamma_max is None:
                raise ConfigError("constrained mode needs --eps-max and --gamma-max")
            tol = DEFAULT_TOL if args.tol is None else args.tol
            run.config.update(mode=args.mode, tol=tol, eps_max=args.eps_max, gamma_max=args.gamma_max)
            res = solve_constrained_optimum(model, config, args.eps_max, args.gamma_max, tol, **common)
        else:
            tol = 1e-9 if args.tol is None else args.tol
            run.config.update(mode=args.mode, tol=tol, hi=args.hi)
            res = fairness_threshold(model, config, tol, hi=args.hi, **common)
    except (NoRootBracketed, InfeasibleConstraint) as err:
        report = {"status": type(err).__name__, "message": str(err)}
        if isinstance(err, NoRootBracketed):
            report["scanned"] = list(err.scanned) if err.scanned else None
        run.write(_dump_json(report))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_ROOT
    run.engine = res.engine
    run.write(_dump_json({"status": "ok", **_solve_report(res)}))
    return EXIT_OK


def cmd_conditions(args, run) -> int:
    model = load_model(args.model)
    config = _config(args)
    _record(run, model, config)
    reports = check_conditions(
        model, config, notion=args.notion, engine=args.engine, samples=args.samples, seed=args.seed
    )
    run.write(_dump_json([asdict(r) for r in reports]))
    return EXIT_OK


def cmd_report_table1(args, run) -> int:
    model = load_model(args.model)
    configs = [SelectionConfig(args.n, m, 0.0, args.score_kind) for m in args.m_list]
    _record(run, model, configs[-1])
    run.config["m_list"] = args.m_list
    run.config["tol"] = args.tol
    rows = accuracy_reduction_table(
        model, configs, args.tol, args.notion, args.engine, args.samples, args.seed
    )
    columns = ("m", "epsilon_o", "theta_o", "theta_inf", "reduction_pct", "note")
    if args.format == "csv":
        payload = _rows_csv(columns, [[getattr(r, c) for c in columns] for r in rows])
    else:
        payload = _dump_json({"columns": list(columns), "rows": [asdict(r) for r in rows]})
    run.write(payload)
    return EXIT_OK


def cmd_verify_dp(args, run) -> int:
    model = load_model(args.model)
    config = _config(args, args.eps)
    run.config = {
        "n": config.n,
        "m": config.m,
        "score_kind": config.score_kind,
        "epsilon": config.epsilon,
        "trials": args.trials,
    }
    run.engine = "exact"
    report = verify_dp(model, config, args.trials, args.seed)
    run.write(_dump_json({**asdict(report), "holds": report.holds}))
    return EXIT_OK if report.holds else EXIT_FAILED


COMMANDS = {
    "validate": cmd_validate,
    "curve": cmd_curve,
    "solve": cmd_solve,
    "conditions": cmd_conditions,
    "report-table1": cmd_report_table1,
    "verify-dp": cmd_verify_dp,
}


def _replay(path) -> int:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, dict) or not isinstance(manifest.get("argv"), list):
        raise SchemaError("manifest has no argument vector", "argv")
    return main(manifest["argv"])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "replay":
            return _replay(args.manifest)
        return COMMANDS[args.command](args, Run(args, argv))
    except (ModelError, ConfigError, ParseError, SchemaError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceeded as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except (NoRootBracketed, InfeasibleConstraint) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_ROOT


if __name__ == "__main__":
    sys.exit(main())
