"""Result documents: inference reports and simulation summaries.

A fit produces a report with three inference tables (augmented,
validation-reference, full-sample surrogate), a diagnostics block, and
a provenance block. JSON is the primary format (schema shipped with the
package); CSV carries the tables with a diagnostics sidecar; the text
rendering shows 6 significant digits.

Nothing time-dependent is written: identical inputs give byte-identical
output files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .augment import AugmentedEstimate, InferenceTable
from .data import AnalysisSpec
from .errors import DataError
from .simulate import ESTIMATOR_NAMES, ReplicationSummary

REPORT_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1

TABLE_ORDER = ("beta_aug", "beta_val", "gamma_ful")
TABLE_TITLES = {
    "beta_aug": "Augmented estimates (reference variables augmented with surrogates)",
    "beta_val": "Validation-subsample estimates (reference variables alone)",
    "gamma_ful": "Full-sample estimates (surrogate variables alone)",
}
_MEASURES = ("mean", "bias", "sd", "rmse", "coverage", "ci_halfwidth_mean")


@dataclass
class ReportDocument:
    tables: dict[str, InferenceTable]
    diagnostics: dict
    provenance: dict = field(default_factory=dict)


def build_report(est: AugmentedEstimate, provenance: dict | None = None) -> ReportDocument:
    return ReportDocument(
        tables=dict(est.tables),
        diagnostics=est.diagnostics.as_dict(),
        provenance=dict(provenance or {}),
    )


def input_digest(*paths: str | Path) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return "sha256:" + h.hexdigest()


def report_to_json_dict(report: ReportDocument) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tables": {
            name: {"rows": table.rows()}
            for name, table in report.tables.items()
        },
        "diagnostics": report.diagnostics,
        "provenance": report.provenance,
    }


def report_from_json_dict(obj: dict) -> ReportDocument:
    if not isinstance(obj, dict) or obj.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise DataError(
            f"unsupported report schema_version {obj.get('schema_version')!r}"
            if isinstance(obj, dict) else "report must be a JSON object"
        )
    tables = {}
    try:
        for name, table in obj["tables"].items():
            rows = table["rows"]
            tables[name] = InferenceTable(
                terms=[r["term"] for r in rows],
                estimate=np.array([r["estimate"] for r in rows], dtype=np.float64),
                se=np.array([r["se"] for r in rows], dtype=np.float64),
                lcl=np.array([r["lcl"] for r in rows], dtype=np.float64),
                ucl=np.array([r["ucl"] for r in rows], dtype=np.float64),
                z=np.array([r["z"] for r in rows], dtype=np.float64),
                p=np.array([r["p"] for r in rows], dtype=np.float64),
            )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed report document: {exc!r}") from exc
    return ReportDocument(
        tables=tables,
        diagnostics=obj.get("diagnostics", {}),
        provenance=obj.get("provenance", {}),
    )


def load_report(path: str | Path) -> ReportDocument:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return report_from_json_dict(obj)


def report_schema() -> dict:
    """The JSON schema the report documents conform to."""
    text = resources.files("augreg").joinpath("report_schema.json").read_text()
    return json.loads(text)


def render_report_json(report: ReportDocument) -> str:
    return json.dumps(report_to_json_dict(report), indent=2, allow_nan=False) + "\n"


def render_report_csv(report: ReportDocument) -> str:
    """Tables only; diagnostics travel in the JSON sidecar."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["table", "term", "estimate", "se", "lcl", "ucl", "z", "p"])
    for name in TABLE_ORDER:
        if name not in report.tables:
            continue
        for row in report.tables[name].rows():
            writer.writerow(
                [name, row["term"]]
                + [repr(row[k]) for k in ("estimate", "se", "lcl", "ucl", "z", "p")]
            )
    return buf.getvalue()


def render_report_text(report: ReportDocument) -> str:
    lines = []
    for name in TABLE_ORDER:
        if name not in report.tables:
            continue
        table = report.tables[name]
        lines.append(TABLE_TITLES.get(name, name))
        header = ["term", "estimate", "se", "lcl", "ucl", "z", "p"]
        rows = [
            [r["term"]] + [f"{r[k]:.6g}" for k in header[1:]]
            for r in table.rows()
        ]
        widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
        lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
        for row in rows:
            lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
        lines.append("")
    diag = report.diagnostics
    if diag:
        lines.append("diagnostics: " + ", ".join(f"{k}={v}" for k, v in diag.items()))
    prov = report.provenance
    if prov:
        lines.append("provenance:  " + ", ".join(f"{k}={v}" for k, v in prov.items()))
    return "\n".join(lines) + "\n"


def write_report(report: ReportDocument, path: str | Path | None, fmt: str = "json"):
    """Write (or return, when path is None) the rendered report.

    CSV format also writes a ``<name>.diag.json`` sidecar holding the
    diagnostics and provenance blocks.
    """
    if fmt == "json":
        text = render_report_json(report)
    elif fmt == "csv":
        text = render_report_csv(report)
    elif fmt == "text":
        text = render_report_text(report)
    else:
        raise DataError(f"unknown report format {fmt!r}")
    if path is None:
        return text
    path = Path(path)
    path.write_text(text)
    if fmt == "csv":
        sidecar = path.with_suffix(path.suffix + ".diag.json")
        sidecar.write_text(
            json.dumps(
                {"diagnostics": report.diagnostics, "provenance": report.provenance},
                indent=2,
            )
            + "\n"
        )
    return text


# ---------------------------------------------------------------------------
# simulation summaries


def wide_summary_labels(spec: AnalysisSpec) -> tuple[list[str], list[str]]:
    """Column labels for the wide summary, and the label of each
    surrogate coefficient.

    Duplicate surrogates for one reference extend the columns with a
    ``_d`` suffix (then ``_d3``, ...), so the layout stays aligned with
    the reference coefficients.
    """
    ref_terms = spec.reference_terms
    labels = list(ref_terms)
    gamma_labels = []
    seen: dict[int, int] = {}
    for ref_idx in spec.surrogate_to_reference():
        count = seen.get(ref_idx, 0)
        if count == 0:
            lab = ref_terms[ref_idx]
        else:
            lab = ref_terms[ref_idx] + ("_d" if count == 1 else f"_d{count + 1}")
            labels.append(lab)
        seen[ref_idx] = count + 1
        gamma_labels.append(lab)
    return labels, gamma_labels


def summary_to_json_dict(summary: ReplicationSummary) -> dict:
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "scenario": summary.scenario,
        "family": summary.family,
        "n_full": summary.n_full,
        "n_val": summary.n_val,
        "seed": summary.seed,
        "requested_replicates": summary.requested,
        "completed_replicates": summary.completed,
        "failures": summary.failures,
        "method": summary.method,
        "estimators": {
            name: {
                "terms": est.terms,
                "truth": [float(v) for v in est.truth],
                **{
                    m: [float(v) for v in getattr(est, m)]
                    for m in _MEASURES
                },
            }
            for name, est in summary.estimators.items()
        },
    }


def render_summary_json(summary: ReplicationSummary) -> str:
    return json.dumps(summary_to_json_dict(summary), indent=2, allow_nan=False) + "\n"


def render_summary_csv(summary: ReplicationSummary, spec: AnalysisSpec) -> str:
    """Wide per-coefficient grid: one row per estimator and measure."""
    labels, gamma_labels = wide_summary_labels(spec)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["scenario", "estimator", "measure"] + labels)
    for name in ESTIMATOR_NAMES:
        est = summary.estimators[name]
        cols = gamma_labels if name == "gamma_ful" else spec.reference_terms
        for measure in _MEASURES:
            values = dict(zip(cols, getattr(est, measure)))
            writer.writerow(
                [summary.scenario, name, measure]
                + [repr(float(values[lab])) if lab in values else "" for lab in labels]
            )
    return buf.getvalue()


def render_replicate_dump(summary: ReplicationSummary, spec: AnalysisSpec) -> str:
    """Long per-replicate CSV for external re-aggregation or plotting."""
    if summary.replicates is None:
        raise DataError("replicate records were not kept; rerun with keep_replicates")
    truth = {
        name: summary.estimators[name].truth for name in ESTIMATOR_NAMES
    }
    terms = {name: summary.estimators[name].terms for name in ESTIMATOR_NAMES}
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["replicate", "estimator", "term", "truth", "estimate", "se", "lcl", "ucl", "covered"]
    )
    for rec in summary.replicates:
        for name in ESTIMATOR_NAMES:
            est = rec.estimates[name]
            for j, term in enumerate(terms[name]):
                t = float(truth[name][j])
                lo, hi = float(rec.lcl[name][j]), float(rec.ucl[name][j])
                writer.writerow(
                    [
                        rec.index,
                        name,
                        term,
                        repr(t),
                        repr(float(est[j])),
                        repr(float(rec.se[name][j])),
                        repr(lo),
                        repr(hi),
                        int(lo <= t <= hi),
                    ]
                )
    return buf.getvalue()
