"""File formats for population models and tradeoff curves.

Per-group score tables (CDF plus repayment rate) can also be imported and
turned into a population model.

Model files
-----------
A model file is a JSON document::

    {
      "format": "fairselect-model",
      "format_version": 1,
      "decimals": 6,
      "support": [0.0, 0.5, 1.0],
      "prior_a0": 0.3,
      "qual_rate": [0.4, 0.6],
      "score_pmf": {
        "a0_y0": [0.5, 0.3, 0.2],
        "a0_y1": [0.1, 0.3, 0.6],
        "a1_y0": [0.6, 0.3, 0.1],
        "a1_y1": [0.3, 0.3, 0.4]
      },
      "metadata": {"source": "hand-set", "group_labels": ["group 0", "group 1"]}
    }

``score_pmf["aA_yY"]`` is Pr{R = support[k] | A=A, Y=Y}.  ``decimals`` and
``metadata`` are optional.  Documents are checked against
:data:`MODEL_SCHEMA` before the model is built, and floats are written with
``repr`` so a model survives emit/load unchanged.

Group score tables
------------------
Two CSV files in the layout of the published FICO preprocessing: a CDF table
and a performance table.  The first column is the raw score, every other
column is one group::

    Score,White,Black
    350,0.0,0.1
    ...

The performance table gives Pr{Y=1 | R, A} per group on the same score
grid.  Values above 1 mark a file as percentages.  Raw scores are mapped to
[0, 1] with ``(s - lo) / (hi - lo)``, default range (350, 850).

Curves
------
Columns ``epsilon, gamma, gamma_ci, theta, theta_ci, m, notion, exact`` in
that order, numbers at 12 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections.abc import Mapping
from dataclasses import dataclass

import jsonschema
import numpy as np

from .errors import (
    InconsistentSupport,
    NonMonotoneCdf,
    OutOfRangeProbability,
    ParseError,
    SchemaError,
)
from .model import DEFAULT_DECIMALS, PMF_KEYS, PopulationModel, build_model
from .montecarlo import TradeoffCurve, TradeoffPoint

FORMAT_NAME = "fairselect-model"
FORMAT_VERSION = 1
CURVE_COLUMNS = ("epsilon", "gamma", "gamma_ci", "theta", "theta_ci", "m", "notion", "exact")
FICO_RANGE = (350.0, 850.0)
CDF_TOL = 1e-9
CDF_END_TOL = 1e-6

_prob_list = {"type": "array", "items": {"type": "number"}, "minItems": 2}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format", "format_version", "support", "prior_a0", "qual_rate", "score_pmf"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": FORMAT_NAME},
        "format_version": {"const": FORMAT_VERSION},
        "decimals": {"type": "integer", "minimum": 0, "maximum": 15},
        "support": _prob_list,
        "prior_a0": {"type": "number"},
        "qual_rate": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "score_pmf": {
            "type": "object",
            "required": list(PMF_KEYS),
            "additionalProperties": False,
            "properties": {k: _prob_list for k in PMF_KEYS},
        },
        "metadata": {"type": "object"},
    },
}


# ---------------------------------------------------------------------------
# Model files


def _read_text(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(os.fspath(source), "rb") as fh:
            data = fh.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as err:
            raise ParseError(f"not UTF-8 text: {err}") from None
    return data


def _schema_field(error) -> str:
    path = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1] if "'" in error.message else ""
        path.append(missing)
    return ".".join(path) or "<root>"


def parse_model(text: str) -> PopulationModel:
    """Build a model from the text of a model file.

    Raises:
      ParseError: Malformed JSON, with line and column.
      SchemaError: Missing or mistyped fields, naming the field.
      ModelError: Values that break a model invariant (for example a PMF
        summing to 1.5), naming the field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.lineno, err.colno) from None
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, _schema_field(err))
    return build_model(
        support=doc["support"],
        prior_a0=doc["prior_a0"],
        qual_rates=doc["qual_rate"],
        score_pmfs=doc["score_pmf"],
        metadata=doc.get("metadata"),
        decimals=doc.get("decimals", DEFAULT_DECIMALS),
    )


def load_model(source) -> PopulationModel:
    """Load a model file from a path or a readable stream."""
    return parse_model(_read_text(source))


def model_document(model: PopulationModel) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "decimals": model.support.decimals,
        "support": list(model.support.values),
        "prior_a0": model.prior_a0,
        "qual_rate": list(model.qual_rate),
        "score_pmf": {k: list(v) for k, v in model.score_pmf},
    }
    if model.metadata:
        doc["metadata"] = model.meta
    return doc


def emit_model(model: PopulationModel, dest=None) -> str:
    """Serialize a model; also writes it to ``dest`` (path or stream) if given."""
    text = json.dumps(model_document(model), indent=2) + "\n"
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(os.fspath(dest), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Group score tables


@dataclass(frozen=True)
class GroupScoreTable:
    """Score distribution and repayment rates of one group.

    Attributes:
      name: Group label.
      support: Normalized score levels in [0, 1].
      cdf: Pr{R <= support[k] | group}.
      nondefault_rate: Pr{Y=1 | R=support[k], group}.
      prior: Share of the population, if known.
    """

    name: str
    support: tuple
    cdf: tuple
    nondefault_rate: tuple
    prior: float | None = None

    def __post_init__(self):
        n = len(self.support)
        if len(self.cdf) != n or len(self.nondefault_rate) != n:
            raise InconsistentSupport(
                f"{len(self.support)} scores, {len(self.cdf)} CDF values, {len(self.nondefault_rate)} rates",
                field=f"tables.{self.name}",
            )
        cdf = np.asarray(self.cdf, dtype=float)
        if not np.all(np.isfinite(cdf)) or cdf[0] < -CDF_TOL or np.any(np.diff(cdf) < -CDF_TOL):
            raise NonMonotoneCdf("CDF must be nondecreasing from >= 0", field=f"tables.{self.name}.cdf")
        if abs(cdf[-1] - 1.0) > CDF_END_TOL:
            raise NonMonotoneCdf(f"CDF ends at {cdf[-1]}, not 1", field=f"tables.{self.name}.cdf")
        rate = np.asarray(self.nondefault_rate, dtype=float)
        if np.any(~np.isfinite(rate)) or np.any(rate < 0) or np.any(rate > 1):
            raise OutOfRangeProbability(
                "non-default rates must lie in [0, 1]", field=f"tables.{self.name}.nondefault_rate"
            )

    def pmf(self) -> np.ndarray:
        """Score PMF from first differences of the CDF."""
        cdf = np.asarray(self.cdf, dtype=float)
        p = np.diff(cdf, prepend=0.0)
        p = np.clip(p, 0.0, None)
        return p / p.sum()


def _read_csv_table(source, name):
    text = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{name}: empty table", 1, 1)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise ParseError(f"{name}: need a score column and at least one group column", header_line, 1)
    data = []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise ParseError(f"{name}: expected {len(header)} cells, found {len(row)}", line, 1)
        values = []
        col = 1
        for cell in row:
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"{name}: not a number: {cell!r}", line, col) from None
            col += len(cell) + 1
        data.append(values)
    return header, np.array(data, dtype=float)


def load_group_tables(
    cdf_source,
    performance_source,
    priors: Mapping | None = None,
    score_range: tuple = FICO_RANGE,
    decimals: int = DEFAULT_DECIMALS,
) -> dict:
    """Read CDF and performance CSV files into one table per group.

    Args:
      priors: Optional population share per group name.
      score_range: Raw ``(lo, hi)`` mapped onto [0, 1].

    Raises:
      ParseError: Malformed CSV.
      InconsistentSupport: The two files disagree on groups or score grid.
      NonMonotoneCdf: A decreasing CDF column.
    """
    cdf_header, cdf = _read_csv_table(cdf_source, "cdf table")
    perf_header, perf = _read_csv_table(performance_source, "performance table")
    if cdf_header[1:] != perf_header[1:]:
        raise InconsistentSupport(
            f"group columns differ: {cdf_header[1:]} vs {perf_header[1:]}", field="tables"
        )
    if cdf.shape != perf.shape or not np.array_equal(cdf[:, 0], perf[:, 0]):
        raise InconsistentSupport("CDF and performance tables use different score grids", field="tables")
    lo, hi = score_range
    if not hi > lo:
        raise InconsistentSupport(f"score range {score_range} is empty", field="score_range")
    support = tuple(round((s - lo) / (hi - lo), decimals) for s in cdf[:, 0])
    if cdf[:, 1:].max(initial=0.0) > 1.0 + CDF_END_TOL:
        cdf = cdf.copy()
        cdf[:, 1:] /= 100.0
    if perf[:, 1:].max(initial=0.0) > 1.0 + CDF_END_TOL:
        perf = perf.copy()
        perf[:, 1:] /= 100.0
    priors = dict(priors or {})
    tables = {}
    for j, name in enumerate(cdf_header[1:], start=1):
        tables[name] = GroupScoreTable(
            name=name,
            support=support,
            cdf=tuple(float(x) for x in cdf[:, j]),
            nondefault_rate=tuple(float(x) for x in perf[:, j]),
            prior=priors.get(name),
        )
    return tables


def _group_joint(tables, spec, field):
    """Joint weights Pr{R=rho, Y=y | merged group} for a group spec."""
    if isinstance(spec, str):
        spec = {spec: 1.0}
    weights = {k: float(v) for k, v in dict(spec).items()}
    total = sum(weights.values())
    if total <= 0 or any(w < 0 for w in weights.values()):
        raise SchemaError("merge weights must be nonnegative with a positive sum", field)
    joint1 = joint0 = None
    support = None
    for name, w in weights.items():
        if name not in tables:
            raise SchemaError(f"unknown group {name!r}", field)
        t = tables[name]
        if support is None:
            support = t.support
        elif tuple(t.support) != tuple(support):
            raise InconsistentSupport(f"group {name!r} uses a different score grid", field)
        f = t.pmf()
        q = np.asarray(t.nondefault_rate, dtype=float)
        j1, j0 = w / total * f * q, w / total * f * (1.0 - q)
        joint1 = j1 if joint1 is None else joint1 + j1
        joint0 = j0 if joint0 is None else joint0 + j0
    return support, joint0, joint1


def _conditional(joint, fallback):
    mass = float(joint.sum())
    return (joint / mass if mass > 0 else fallback), mass


def from_group_tables(
    tables: Mapping,
    group0,
    group1,
    prior_a0: float | None = None,
    metadata: Mapping | None = None,
    decimals: int = DEFAULT_DECIMALS,
) -> PopulationModel:
    """Population model for two (possibly merged) groups.

    ``f_{R|A,Y=1}`` is proportional to ``Pr{Y=1|R,A} f_{R|A}`` and the
    qualification rate is its total mass.

    Args:
      tables: Output of :func:`load_group_tables`.
      group0, group1: A group name, or a mapping of names to mixture weights
        (for example ``{"White": 0.64, "Hispanic": 0.36}``).
      prior_a0: Pr{A=0}.  When omitted, taken from the table priors, which
        must then be present for every group involved.
    """
    support, j00, j01 = _group_joint(tables, group0, "group0")
    support1, j10, j11 = _group_joint(tables, group1, "group1")
    if tuple(support) != tuple(support1):
        raise InconsistentSupport("the two groups use different score grids", "group1")
    if prior_a0 is None:
        prior_a0 = _prior_from_tables(tables, group0, group1)
    pmfs, rates = {}, []
    for a, (j0, j1) in enumerate(((j00, j01), (j10, j11))):
        f_a = j0 + j1
        f_a = f_a / f_a.sum()
        pmfs[(a, 1)], q = _conditional(j1, f_a)
        pmfs[(a, 0)], _ = _conditional(j0, f_a)
        rates.append(min(1.0, max(0.0, q / float((j0 + j1).sum()))))
    meta = {"source": "group tables", "group0": _label(group0), "group1": _label(group1)}
    meta.update(metadata or {})
    return build_model(support, prior_a0, rates, pmfs, meta, decimals)


def _label(spec):
    if isinstance(spec, str):
        return spec
    return {k: float(v) for k, v in dict(spec).items()}


def _prior_from_tables(tables, group0, group1):
    def share(spec, field):
        names = [spec] if isinstance(spec, str) else list(dict(spec))
        missing = [n for n in names if tables[n].prior is None]
        if missing:
            raise SchemaError(f"no prior for groups {missing}; pass prior_a0 explicitly", field)
        return sum(tables[n].prior for n in names)

    s0, s1 = share(group0, "group0"), share(group1, "group1")
    return s0 / (s0 + s1)


# ---------------------------------------------------------------------------
# Curves


def _num(x) -> str:
    x = float(x)
    if x == 0.0:
        return "0"
    return format(x, ".12g")


def _curve_rows(curve: TradeoffCurve):
    for p in curve:
        yield [
            _num(p.epsilon),
            _num(p.gamma),
            _num(p.gamma_ci),
            _num(p.theta),
            _num(p.theta_ci),
            str(int(p.m)),
            p.notion,
            "true" if p.exact else "false",
        ]


def emit_curve(curve: TradeoffCurve, fmt: str = "csv") -> bytes:
    """Serialize a curve as CSV or JSON bytes with a fixed column order."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        writer.writerows(_curve_rows(curve))
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        rows = []
        for cells in _curve_rows(curve):
            row = {}
            for col, cell in zip(CURVE_COLUMNS, cells):
                if col == "notion":
                    row[col] = cell
                elif col == "exact":
                    row[col] = cell == "true"
                elif col == "m":
                    row[col] = int(cell)
                else:
                    row[col] = json.loads(cell) if cell != "0" else 0.0
            rows.append(row)
        doc = {"columns": list(CURVE_COLUMNS), "rows": rows}
        return (json.dumps(doc, indent=1) + "\n").encode("utf-8")
    raise SchemaError(f"unknown curve format {fmt!r}", "format")


def load_curve(data, fmt: str = "csv") -> TradeoffCurve:
    """Parse bytes produced by :func:`emit_curve`."""
    text = data.decode("utf-8") if isinstance(data, bytes) else _read_text(data)
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != CURVE_COLUMNS:
            raise ParseError(f"expected header {','.join(CURVE_COLUMNS)}", 1, 1)
        records = [dict(zip(CURVE_COLUMNS, row)) for row in reader if row]
    elif fmt == "json":
        try:
            records = json.loads(text)["rows"]
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise ParseError(f"not a curve document: {err}") from None
    else:
        raise SchemaError(f"unknown curve format {fmt!r}", "format")
    points = []
    for r in records:
        exact = r["exact"] if isinstance(r["exact"], bool) else r["exact"] == "true"
        points.append(
            TradeoffPoint(
                epsilon=float(r["epsilon"]),
                gamma=float(r["gamma"]),
                gamma_ci=float(r["gamma_ci"]),
                theta=float(r["theta"]),
                theta_ci=float(r["theta_ci"]),
                m=int(r["m"]),
                notion=str(r["notion"]),
                exact=exact,
            )
        )
    return TradeoffCurve(tuple(points))
