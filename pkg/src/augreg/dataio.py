"""CSV ingestion and emission, and the analysis-spec JSON format.

CSV files are RFC 4180 with a header row; the only missing-value
markers are the empty string and ``NA``. Floats are written with
shortest round-trip decimals, so an emit/load cycle reproduces the
study exactly.

The analysis spec travels as versioned JSON because the predictor to
surrogate map is structured; see ``parse_analysis_spec`` for the layout.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .data import AnalysisSpec, OutcomeSpec, PredictorSpec, StudyData
from .errors import (
    DataError,
    MissingColumn,
    NonNumericCell,
    ReferenceMissingInValidation,
)
from .resample import BootstrapPlan, JackknifePlan, ResamplePlan

SPEC_SCHEMA_VERSION = 1

_MISSING = ("", "NA")


def _parse_cell(raw: str, line: int, column: str) -> float:
    if raw in _MISSING:
        return float("nan")
    try:
        value = float(raw)
    except ValueError:
        raise NonNumericCell(line, column, raw) from None
    if not np.isfinite(value):
        raise NonNumericCell(line, column, raw)
    return value


def load_csv(path: str | Path, spec: AnalysisSpec, strict_references: bool = False) -> StudyData:
    """Read a study from CSV, validating the two-phase missingness pattern.

    Reference-only columns must be blank outside the validation
    subsample (a warning, or an error with ``strict_references``) and
    present inside it. Surrogate, flag, cluster, and weight columns
    must be complete. Error locations are reported as file line numbers
    (the header is line 1).
    """
    spec.validate()
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    col_index = {name: i for i, name in enumerate(header)}

    wanted = spec.data_columns() + [spec.validation_flag]
    if spec.cluster:
        wanted.append(spec.cluster)
    if spec.weight:
        wanted.append(spec.weight)
    absent = [c for c in wanted if c not in col_index]
    if absent:
        raise MissingColumn(f"{path}: missing columns {absent}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    n = len(rows)
    flag_col = col_index[spec.validation_flag]
    validated = np.zeros(n, dtype=bool)
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        raw = row[flag_col]
        if raw not in ("0", "1"):
            value = _parse_cell(raw, line, spec.validation_flag)
            if value not in (0.0, 1.0):
                raise DataError(
                    f"{path}: line {line}: validation flag must be 0 or 1, got {raw!r}"
                )
            validated[i] = bool(value)
        else:
            validated[i] = raw == "1"
    if not validated.any():
        raise DataError(f"{path}: no validated rows")
    if validated.all():
        raise DataError(f"{path}: validated rows must form a strict subset of the sample")

    surrogate_cols = set(spec.surrogate_columns)
    reference_only = [c for c in spec.reference_columns if c not in surrogate_cols]
    columns: dict[str, np.ndarray] = {}
    for name in spec.data_columns():
        j = col_index[name]
        col = np.empty(n)
        for i, row in enumerate(rows):
            col[i] = _parse_cell(row[j], i + 2, name)
        columns[name] = col

    for name in reference_only:
        col = columns[name]
        missing = np.isnan(col)
        bad_val = np.flatnonzero(validated & missing)
        if bad_val.size:
            raise ReferenceMissingInValidation(
                f"{path}: line {bad_val[0] + 2}: validated row lacks reference column {name!r}"
            )
        extra = np.flatnonzero(~validated & ~missing)
        if extra.size:
            msg = (
                f"{path}: line {extra[0] + 2}: reference column {name!r} present on "
                f"{extra.size} non-validated row(s)"
            )
            if strict_references:
                raise DataError(msg)
            warnings.warn(msg + "; values ignored", stacklevel=2)
            col = col.copy()
            col[~validated] = np.nan
            columns[name] = col
    for name in surrogate_cols:
        missing = np.flatnonzero(np.isnan(columns[name]))
        if missing.size:
            raise DataError(
                f"{path}: line {missing[0] + 2}: missing value in surrogate column {name!r}"
            )

    cluster = None
    if spec.cluster:
        j = col_index[spec.cluster]
        labels = [row[j] for row in rows]
        empty = [i for i, v in enumerate(labels) if v in _MISSING]
        if empty:
            raise DataError(f"{path}: line {empty[0] + 2}: missing cluster label")
        cluster = np.asarray(labels, dtype=object)

    weight = None
    if spec.weight:
        j = col_index[spec.weight]
        weight = np.empty(n)
        for i, row in enumerate(rows):
            weight[i] = _parse_cell(row[j], i + 2, spec.weight)
        if np.any(np.isnan(weight)):
            raise DataError(f"{path}: weight column {spec.weight!r} has missing values")
        if np.any(weight < 0) or weight.sum() <= 0:
            raise DataError(f"{path}: weights must be nonnegative with a positive sum")

    return StudyData(columns=columns, validated=validated, cluster=cluster, weight=weight)


def _format_value(x: float) -> str:
    if np.isnan(x):
        return ""
    # Integral values shed the trailing ".0"; keep the sign of -0.0.
    if x == int(x) and abs(x) < 1e15 and not (x == 0.0 and np.signbit(x)):
        return str(int(x))
    return repr(float(x))


def write_csv(data: StudyData, spec: AnalysisSpec, path: str | Path) -> None:
    """Emit a study as CSV with shortest round-trip decimal rendering."""
    path = Path(path)
    names = [c for c in data.columns if c in set(spec.data_columns())]
    header = names + [spec.validation_flag]
    if spec.cluster and data.cluster is not None:
        header.append(spec.cluster)
    if spec.weight and data.weight is not None:
        header.append(spec.weight)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_full):
            row = [_format_value(float(data.columns[c][i])) for c in names]
            row.append("1" if data.validated[i] else "0")
            if spec.cluster and data.cluster is not None:
                row.append(str(data.cluster[i]))
            if spec.weight and data.weight is not None:
                row.append(_format_value(float(data.weight[i])))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# analysis-spec JSON


def parse_analysis_spec(obj: dict) -> tuple[AnalysisSpec, ResamplePlan | None]:
    """Build an analysis spec (and optional resample plan) from JSON.

    Layout::

        {
          "schema_version": 1,
          "family": "linear" | "logistic" | "cox",
          "outcome": {"reference": ["y"], "surrogate": ["y_s"]},
          "predictors": [
            {"reference": "x1", "surrogates": ["x1_s"], "perfect": false},
            ...
          ],
          "validation_flag": "validated",
          "cluster": null,
          "weight": null,
          "alpha": 0.05,
          "resample": {"method": "jackknife", "groups": null}
                    | {"method": "bootstrap", "replicates": 400, "seed": 0}
        }

    Cox outcomes list the (time, event) columns on each side. A
    predictor with ``perfect: true`` may omit ``surrogates``; it stands
    in for itself.
    """
    if not isinstance(obj, dict):
        raise DataError("analysis spec must be a JSON object")
    version = obj.get("schema_version")
    if version != SPEC_SCHEMA_VERSION:
        raise DataError(
            f"unsupported analysis-spec schema_version {version!r}; expected {SPEC_SCHEMA_VERSION}"
        )
    try:
        outcome = OutcomeSpec(
            reference=tuple(obj["outcome"]["reference"]),
            surrogate=tuple(obj["outcome"]["surrogate"]),
        )
        predictors = []
        for item in obj["predictors"]:
            perfect = bool(item.get("perfect", False))
            surrogates = item.get("surrogates")
            if surrogates is None and perfect:
                surrogates = [item["reference"]]
            predictors.append(
                PredictorSpec(
                    reference=item["reference"],
                    surrogates=tuple(surrogates or ()),
                    perfect=perfect,
                )
            )
        spec = AnalysisSpec(
            family=obj["family"],
            outcome=outcome,
            predictors=tuple(predictors),
            validation_flag=obj.get("validation_flag", "validated"),
            cluster=obj.get("cluster"),
            weight=obj.get("weight"),
            alpha=float(obj.get("alpha", 0.05)),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed analysis spec: {exc!r}") from exc
    spec.validate()
    return spec, _parse_plan(obj.get("resample"))


def _parse_plan(obj) -> ResamplePlan | None:
    if obj is None:
        return None
    method = obj.get("method")
    if method == "jackknife":
        groups = obj.get("groups")
        return JackknifePlan(n_groups=None if groups is None else int(groups))
    if method == "bootstrap":
        return BootstrapPlan(
            replicates=int(obj.get("replicates", 400)), seed=int(obj.get("seed", 0))
        )
    raise DataError(f"unknown resample method {method!r}")


def analysis_spec_to_json(spec: AnalysisSpec, plan: ResamplePlan | None = None) -> dict:
    out = {
        "schema_version": SPEC_SCHEMA_VERSION,
        "family": spec.family,
        "outcome": {
            "reference": list(spec.outcome.reference),
            "surrogate": list(spec.outcome.surrogate),
        },
        "predictors": [
            {"reference": p.reference, "surrogates": list(p.surrogates), "perfect": p.perfect}
            for p in spec.predictors
        ],
        "validation_flag": spec.validation_flag,
        "cluster": spec.cluster,
        "weight": spec.weight,
        "alpha": spec.alpha,
    }
    if plan is not None:
        if isinstance(plan, JackknifePlan):
            out["resample"] = {"method": "jackknife", "groups": plan.n_groups}
        else:
            out["resample"] = {
                "method": "bootstrap",
                "replicates": plan.replicates,
                "seed": plan.seed,
            }
    return out


def load_analysis_spec(path: str | Path) -> tuple[AnalysisSpec, ResamplePlan | None]:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return parse_analysis_spec(obj)
