"""Figure rendering for reports and simulation runs.

Writes PNG files next to the delimited output: per-coefficient boxplots
of replicate estimation error for simulation runs, and interval plots
for the three inference tables of a fit report.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import AnalysisSpec
from .errors import DataError
from .report import ReportDocument, TABLE_ORDER, wide_summary_labels
from .simulate import ESTIMATOR_NAMES, ReplicationSummary

_COLORS = {"beta_aug": "#336699", "beta_val": "#cc7722", "gamma_ful": "#779944"}
_PNG_META = {"Software": "augreg"}


def save_error_boxplots(
    summary: ReplicationSummary, spec: AnalysisSpec, path: str | Path
) -> Path:
    """Boxplots of (estimate - truth) per coefficient and estimator.

    Needs per-replicate records (``keep_replicates=True``). Coefficients
    sit side by side with one box per estimator; duplicate-surrogate
    coefficients get their own columns.
    """
    if summary.replicates is None:
        raise DataError("replicate records were not kept; rerun with keep_replicates")
    labels, gamma_labels = wide_summary_labels(spec)
    by_est_label: dict[tuple[str, str], np.ndarray] = {}
    for name in ESTIMATOR_NAMES:
        cols = gamma_labels if name == "gamma_ful" else spec.reference_terms
        errors = np.vstack([rec.estimates[name] for rec in summary.replicates])
        errors = errors - summary.estimators[name].truth
        for j, lab in enumerate(cols):
            by_est_label[(name, lab)] = errors[:, j]

    width = 0.26
    fig, ax = plt.subplots(figsize=(1.6 * max(5, len(labels)) + 1.5, 4.5))
    for k, name in enumerate(ESTIMATOR_NAMES):
        positions, series = [], []
        for i, lab in enumerate(labels):
            if (name, lab) in by_est_label:
                positions.append(i + (k - 1) * width)
                series.append(by_est_label[(name, lab)])
        if not positions:
            continue
        boxes = ax.boxplot(
            series,
            positions=positions,
            widths=width * 0.9,
            patch_artist=True,
            showfliers=True,
            flierprops={"markersize": 2, "alpha": 0.4},
        )
        for patch in boxes["boxes"]:
            patch.set_facecolor(_COLORS[name])
            patch.set_alpha(0.6)
        for med in boxes["medians"]:
            med.set_color("black")
        ax.plot([], [], color=_COLORS[name], label=name)
    ax.axhline(0.0, color="grey", linewidth=0.8, zorder=0)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel("estimate - truth")
    ax.set_title(
        f"{summary.scenario}: {summary.completed} replicates, "
        f"n={summary.n_full}, validation={summary.n_val}"
    )
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def save_interval_plot(report: ReportDocument, path: str | Path) -> Path:
    """Estimates with confidence intervals, one panel per table."""
    names = [n for n in TABLE_ORDER if n in report.tables]
    if not names:
        raise DataError("report has no tables to plot")
    heights = [len(report.tables[n].terms) for n in names]
    fig, axes = plt.subplots(
        len(names),
        1,
        figsize=(7, 1.2 + 0.42 * sum(heights)),
        gridspec_kw={"height_ratios": heights},
        squeeze=False,
    )
    for ax, name in zip(axes[:, 0], names):
        table = report.tables[name]
        ypos = np.arange(len(table.terms))[::-1]
        ax.errorbar(
            table.estimate,
            ypos,
            xerr=np.vstack([table.estimate - table.lcl, table.ucl - table.estimate]),
            fmt="o",
            color=_COLORS.get(name, "#444444"),
            ecolor=_COLORS.get(name, "#444444"),
            capsize=3,
            markersize=4,
        )
        ax.axvline(0.0, color="grey", linewidth=0.8, zorder=0)
        ax.set_yticks(ypos)
        ax.set_yticklabels(table.terms, fontsize=9)
        ax.set_title(name, fontsize=10, loc="left")
    axes[-1, 0].set_xlabel("coefficient")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path
