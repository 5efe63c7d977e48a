"""Joint coefficient statistic and its resampled covariance blocks.

Three fits make up the joint statistic: reference variables on the
validation subsample, surrogate variables on the validation subsample,
and surrogate variables on the full sample. The covariance of
(validation-reference coefficients, surrogate coefficient difference) is
estimated by a grouped jackknife or a stratified bootstrap, honoring
clusters (resampled as whole units) and sampling weights (applied as
case weights in the two validation-subsample fits).

Covariance reductions use exact (fsum) summation, so results are
bit-identical under any ordering of groups, replicates, or workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .data import AnalysisSpec, ModelArrays, StudyData, check_study_data, side_arrays
from .errors import (
    AugregError,
    DataError,
    FitError,
    GroupTooSmall,
    InsufficientGroups,
    TooManyFailures,
)
from .models import fit_cox, fit_linear, fit_logistic
from .parallel import ordered_map

# Default grouped-jackknife size once delete-1 gets expensive.
AUTO_DELETE1_LIMIT = 2000
AUTO_GROUPS = 500

# Bootstrap replicates whose fits fail are dropped; more than this
# fraction dropped aborts the run.
MAX_DROP_FRACTION = 0.05

_MAX_BOOT_PER_CONTEXT = 1 << 20


@dataclass(frozen=True)
class JackknifePlan:
    """Leave-one-group-out plan; ``n_groups=None`` picks delete-1 for up
    to ``AUTO_DELETE1_LIMIT`` units and ``AUTO_GROUPS`` groups beyond."""

    n_groups: int | None = None

    method = "jackknife"


@dataclass(frozen=True)
class BootstrapPlan:
    replicates: int = 400
    seed: int = 0

    method = "bootstrap"


ResamplePlan = JackknifePlan | BootstrapPlan


@dataclass
class JointStatistic:
    """Stacked coefficient estimates and the surrogate difference."""

    beta_val: np.ndarray
    gamma_val: np.ndarray
    gamma_ful: np.ndarray
    gamma_diff: np.ndarray
    reference_terms: list[str]
    surrogate_terms: list[str]

    @property
    def p(self) -> int:
        return len(self.beta_val)

    @property
    def q(self) -> int:
        return len(self.gamma_val)


@dataclass
class CovBlocks:
    """Covariance estimates for the joint statistic.

    ``val_cov`` (p x p) covers the validation reference coefficients,
    ``diff_cov`` (q x q) the surrogate coefficient difference, and
    ``cross_cov`` (p x q) the covariance between the two. ``ful_cov``
    carries the covariance of the full-sample surrogate coefficients
    from the same resampling pass, used for that table's standard
    errors.
    """

    val_cov: np.ndarray
    cross_cov: np.ndarray
    diff_cov: np.ndarray
    ful_cov: np.ndarray | None = None
    method: str = ""
    n_resamples: int = 0
    dropped: int = 0

    def stacked(self) -> np.ndarray:
        top = np.hstack([self.val_cov, self.cross_cov])
        bottom = np.hstack([self.cross_cov.T, self.diff_cov])
        return np.vstack([top, bottom])


# ---------------------------------------------------------------------------
# estimation task: the three fits on arbitrary row subsets


class _SideFit:
    """Pre-extracted arrays for one regression, with fast subset refits.

    For Cox models the arrays are pre-sorted by time so that boolean
    masks preserve sort order and the fitter can skip its own sort.
    """

    def __init__(self, family: str, ties: str, arrays: ModelArrays, w: np.ndarray):
        self.family = family
        self.ties = ties
        self.w = w
        self.order: np.ndarray | None = None
        self.X_orig = arrays.X
        self.resp_orig = arrays
        if family == "cox":
            order = np.argsort(arrays.time, kind="stable")
            self.order = order
            self.X = arrays.X[order]
            self.time = arrays.time[order]
            self.event = arrays.event[order]
            self.ws = w[order]
        else:
            self.X = arrays.X
            self.y = arrays.y
            self.ws = w

    def fit_mask(self, mask: np.ndarray | None, start: np.ndarray | None) -> np.ndarray:
        if mask is not None and self.order is not None:
            mask = mask[self.order]
        if mask is None:
            X, w = self.X, self.ws
        else:
            X, w = self.X[mask], self.ws[mask]
        if self.family == "linear":
            y = self.y if mask is None else self.y[mask]
            return fit_linear(X, y, w).coefficients
        if self.family == "logistic":
            y = self.y if mask is None else self.y[mask]
            return fit_logistic(X, y, w, start=start).coefficients
        t = self.time if mask is None else self.time[mask]
        e = self.event if mask is None else self.event[mask]
        return fit_cox(X, t, e, w, ties=self.ties, start=start, assume_sorted=True).coefficients

    def fit_rows(self, rows: np.ndarray, start: np.ndarray | None) -> np.ndarray:
        X = self.X_orig[rows]
        w = self.w[rows]
        if self.family == "linear":
            return fit_linear(X, self.resp_orig.y[rows], w).coefficients
        if self.family == "logistic":
            return fit_logistic(X, self.resp_orig.y[rows], w, start=start).coefficients
        return fit_cox(
            X, self.resp_orig.time[rows], self.resp_orig.event[rows], w,
            ties=self.ties, start=start,
        ).coefficients


class EstimationTask:
    """The three fits of the augmented design on one study."""

    def __init__(self, data: StudyData, spec: AnalysisSpec, ties: str = "efron"):
        check_study_data(data, spec)
        self.data = data
        self.spec = spec
        self.val_idx = np.flatnonzero(data.validated)
        w = data.weights()
        w_val = w[self.val_idx]
        n = data.n_full
        # Sampling weights enter the validation-subsample fits; the
        # full-sample surrogate fit is unweighted (every row is in it).
        self.ref = _SideFit(spec.family, ties, side_arrays(data, spec, "reference", self.val_idx), w_val)
        self.sur_val = _SideFit(spec.family, ties, side_arrays(data, spec, "surrogate", self.val_idx), w_val)
        self.sur_ful = _SideFit(spec.family, ties, side_arrays(data, spec, "surrogate", slice(None)), np.ones(n))
        self.p = spec.n_ref_coef
        self.q = spec.n_sur_coef
        self._warm: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def full(self) -> JointStatistic:
        beta_val = self._fit("beta_val", self.ref, None, None, None)
        gamma_val = self._fit("gamma_val", self.sur_val, None, None, None)
        gamma_ful = self._fit("gamma_ful", self.sur_ful, None, None, None)
        self._warm = (beta_val, gamma_val, gamma_ful)
        return JointStatistic(
            beta_val=beta_val,
            gamma_val=gamma_val,
            gamma_ful=gamma_ful,
            gamma_diff=gamma_val - gamma_ful,
            reference_terms=self.spec.reference_terms,
            surrogate_terms=self.spec.surrogate_terms,
        )

    def warm(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._warm is None:
            self.full()
        return self._warm

    def _fit(self, stage, side, mask, rows, start):
        try:
            if rows is not None:
                return side.fit_rows(rows, start)
            return side.fit_mask(mask, start)
        except AugregError as exc:
            raise FitError(stage, exc) from exc

    def stat_mask(self, keep: np.ndarray, refit_val: bool = True):
        """Leave-out statistic for a boolean keep mask over all rows.

        When the removed rows contain no validated rows the two
        validation fits are unchanged and only the full-sample surrogate
        fit is redone.
        """
        wb, wgv, wgf = self.warm()
        gamma_ful = self._fit("gamma_ful", self.sur_ful, keep, None, wgf)
        if not refit_val:
            return wb, wgv, gamma_ful
        val_keep = keep[self.val_idx]
        beta_val = self._fit("beta_val", self.ref, val_keep, None, wb)
        gamma_val = self._fit("gamma_val", self.sur_val, val_keep, None, wgv)
        return beta_val, gamma_val, gamma_ful

    def stat_rows(self, rows: np.ndarray):
        """Replicate statistic for resampled row indices (with repeats)."""
        wb, wgv, wgf = self.warm()
        val_rows = rows[self.data.validated[rows]]
        val_pos = self._val_positions()[val_rows]
        beta_val = self._fit("beta_val", self.ref, None, val_pos, wb)
        gamma_val = self._fit("gamma_val", self.sur_val, None, val_pos, wgv)
        gamma_ful = self._fit("gamma_ful", self.sur_ful, None, rows, wgf)
        return beta_val, gamma_val, gamma_ful

    def _val_positions(self) -> np.ndarray:
        pos = np.full(self.data.n_full, -1)
        pos[self.val_idx] = np.arange(len(self.val_idx))
        return pos


def compute_joint_statistic(data: StudyData, spec: AnalysisSpec, ties: str = "efron") -> JointStatistic:
    """Fit the three models and return the stacked coefficient statistic."""
    return EstimationTask(data, spec, ties=ties).full()


# ---------------------------------------------------------------------------
# units, groups, and the exact covariance reduction


def _row_units(data: StudyData) -> tuple[np.ndarray, int]:
    """Unit index per row; units are clusters when present, else rows."""
    if data.cluster is None:
        n = data.n_full
        return np.arange(n), n
    _, codes = np.unique(np.asarray(data.cluster), return_inverse=True)
    return codes, int(codes.max()) + 1


def _resolve_groups(plan: JackknifePlan, n_units: int) -> int:
    if plan.n_groups is None:
        return n_units if n_units <= AUTO_DELETE1_LIMIT else min(AUTO_GROUPS, n_units)
    g = int(plan.n_groups)
    if g < 2:
        raise InsufficientGroups(f"jackknife needs at least 2 groups, got {g}")
    if g > n_units:
        raise DataError(f"{g} jackknife groups exceed the {n_units} available units")
    return g


def _assign_groups(unit_validated: np.ndarray, n_groups: int) -> np.ndarray:
    """Round-robin group label per unit, within each validation stratum."""
    n_units = unit_validated.shape[0]
    if n_groups == n_units:
        return np.arange(n_units)
    group = np.empty(n_units, dtype=np.intp)
    for stratum in (unit_validated, ~unit_validated):
        k = int(stratum.sum())
        group[stratum] = np.arange(k) % n_groups
    return group


def _exact_cov(stats: np.ndarray, scale: float) -> np.ndarray:
    """scale * sum of centered outer products, via exact summation.

    fsum is exactly rounded, so the result does not depend on the order
    of the rows (replicates or groups).
    """
    g, m = stats.shape
    mean = np.array([math.fsum(stats[:, j]) for j in range(m)]) / g
    dev = stats - mean
    cov = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            v = math.fsum(dev[:, a] * dev[:, b]) * scale
            cov[a, b] = v
            cov[b, a] = v
    return cov


def _split_blocks(cov: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return cov[:p, :p], cov[:p, p:], cov[p:, p:]


# ---------------------------------------------------------------------------
# grouped jackknife


def _check_group_feasible(task: EstimationTask, data: StudyData, spec: AnalysisSpec,
                          group_of_row: np.ndarray, n_groups: int) -> None:
    """Every leave-out must keep enough validated rows, both outcome
    classes (logistic) and at least one event (Cox)."""
    val = data.validated
    need = max(task.p, task.q) + 1
    val_per_group = np.bincount(group_of_row[val], minlength=n_groups)
    retained_val = data.n_val - val_per_group
    with_val = val_per_group > 0
    short = np.flatnonzero(with_val & (retained_val < need))
    if short.size:
        raise GroupTooSmall(
            f"leave-out group {short[0]} retains {retained_val[short[0]]} validated rows; "
            f"at least {need} are required"
        )
    if spec.family == "linear":
        return

    def _indicator(side: str, rows) -> np.ndarray:
        # Binary outcome, or the event column of the (time, event) pair.
        col = spec.outcome.reference[-1] if side == "reference" else spec.outcome.surrogate[-1]
        return data.columns[col][rows]

    checks = [
        ("full-sample surrogate", _indicator("surrogate", slice(None)), group_of_row, None),
        ("validation surrogate", _indicator("surrogate", val), group_of_row[val], with_val),
        ("validation reference", _indicator("reference", val), group_of_row[val], with_val),
    ]
    for label, y, groups, only in checks:
        ones = np.bincount(groups, weights=y, minlength=n_groups)
        kept_ones = y.sum() - ones
        if spec.family == "cox":
            bad = kept_ones < 1
        else:
            zeros = np.bincount(groups, weights=1.0 - y, minlength=n_groups)
            bad = (kept_ones < 1) | (((1.0 - y).sum() - zeros) < 1)
        if only is not None:
            bad = bad & only
        idx = np.flatnonzero(bad)
        if idx.size:
            what = "events" if spec.family == "cox" else "both outcome classes"
            raise GroupTooSmall(
                f"leave-out group {idx[0]} strips the {label} fit of {what}"
            )


def jackknife_cov(
    data: StudyData,
    spec: AnalysisSpec,
    plan: JackknifePlan | None = None,
    ties: str = "efron",
    threads: int = 1,
    task: EstimationTask | None = None,
) -> CovBlocks:
    """Grouped jackknife covariance of the joint statistic.

    Groups are whole clusters when a cluster column is present, assigned
    round-robin within the validated / non-validated strata. Each group
    is left out once; groups holding no validated rows reuse the full
    validation fits and only refit the full-sample surrogate model.
    """
    plan = plan or JackknifePlan()
    if task is None:
        task = EstimationTask(data, spec, ties=ties)
    unit_of_row, n_units = _row_units(data)
    n_groups = _resolve_groups(plan, n_units)
    unit_validated = np.zeros(n_units, dtype=bool)
    unit_validated[unit_of_row[data.validated]] = True
    group_of_unit = _assign_groups(unit_validated, n_groups)
    group_of_row = group_of_unit[unit_of_row]
    _check_group_feasible(task, data, spec, group_of_row, n_groups)

    full = task.full()
    group_has_val = np.zeros(n_groups, dtype=bool)
    group_has_val[group_of_row[data.validated]] = True

    def leave_out(i: int):
        try:
            keep = group_of_row != i
            b, gv, gf = task.stat_mask(keep, refit_val=bool(group_has_val[i]))
        except FitError as exc:
            raise FitError(exc.stage, exc.cause, group=i) from exc.cause
        return np.concatenate([b, gv - gf]), gf

    results = ordered_map(leave_out, range(n_groups), threads=threads)
    stats = np.vstack([r[0] for r in results])
    fuls = np.vstack([r[1] for r in results])
    scale = (n_groups - 1) / n_groups
    cov = _exact_cov(stats, scale)
    val_cov, cross_cov, diff_cov = _split_blocks(cov, task.p)
    return CovBlocks(
        val_cov=val_cov,
        cross_cov=cross_cov,
        diff_cov=diff_cov,
        ful_cov=_exact_cov(fuls, scale),
        method="jackknife",
        n_resamples=n_groups,
    )


# ---------------------------------------------------------------------------
# stratified bootstrap


def _bootstrap_strata(data: StudyData):
    """(validated units, other units, row lists per unit)."""
    unit_of_row, n_units = _row_units(data)
    unit_validated = np.zeros(n_units, dtype=bool)
    unit_validated[unit_of_row[data.validated]] = True
    order = np.argsort(unit_of_row, kind="stable")
    bounds = np.searchsorted(unit_of_row[order], np.arange(n_units + 1))
    rows_of_unit = [order[bounds[u]:bounds[u + 1]] for u in range(n_units)]
    return np.flatnonzero(unit_validated), np.flatnonzero(~unit_validated), rows_of_unit


def _draw_bootstrap_rows(strata, gen: np.random.Generator) -> np.ndarray:
    """One stratified resample: validated and non-validated units drawn
    with replacement within their own stratum, clusters as blocks."""
    val_units, non_units, rows_of_unit = strata
    drawn = [val_units[gen.integers(0, len(val_units), size=len(val_units))]]
    if len(non_units):
        drawn.append(non_units[gen.integers(0, len(non_units), size=len(non_units))])
    return np.concatenate([rows_of_unit[u] for part in drawn for u in part])


def bootstrap_cov(
    data: StudyData,
    spec: AnalysisSpec,
    plan: BootstrapPlan,
    ties: str = "efron",
    threads: int = 1,
    task: EstimationTask | None = None,
    stream_offset: int = 0,
) -> CovBlocks:
    """Stratified bootstrap covariance of the joint statistic.

    Validated and non-validated units are resampled separately with
    replacement, so every replicate keeps the validation subsample size;
    clusters are resampled as whole units. Replicates whose fits fail
    are dropped (at most ``MAX_DROP_FRACTION`` of them).
    """
    B = int(plan.replicates)
    if B < 50:
        raise DataError(f"bootstrap needs at least 50 replicates, got {B}")
    if B > _MAX_BOOT_PER_CONTEXT:
        raise DataError(f"bootstrap replicates capped at {_MAX_BOOT_PER_CONTEXT}")
    if task is None:
        task = EstimationTask(data, spec, ties=ties)
    task.full()

    strata = _bootstrap_strata(data)

    def replicate(b: int):
        gen = rngmod.stream(plan.seed, rngmod.DOMAIN_BOOTSTRAP, stream_offset + b)
        rows = _draw_bootstrap_rows(strata, gen)
        try:
            bv, gv, gf = task.stat_rows(rows)
        except AugregError:
            return None
        return np.concatenate([bv, gv - gf]), gf

    results = ordered_map(replicate, range(B), threads=threads)
    kept = [r for r in results if r is not None]
    dropped = B - len(kept)
    if dropped > MAX_DROP_FRACTION * B:
        raise TooManyFailures(
            f"{dropped} of {B} bootstrap replicates failed (> {MAX_DROP_FRACTION:.0%})"
        )
    if len(kept) < 2:
        raise TooManyFailures("fewer than 2 usable bootstrap replicates")
    stats = np.vstack([r[0] for r in kept])
    fuls = np.vstack([r[1] for r in kept])
    scale = 1.0 / (len(kept) - 1)
    cov = _exact_cov(stats, scale)
    val_cov, cross_cov, diff_cov = _split_blocks(cov, task.p)
    return CovBlocks(
        val_cov=val_cov,
        cross_cov=cross_cov,
        diff_cov=diff_cov,
        ful_cov=_exact_cov(fuls, scale),
        method="bootstrap",
        n_resamples=B,
        dropped=dropped,
    )


def resample_cov(
    data: StudyData,
    spec: AnalysisSpec,
    plan: ResamplePlan,
    ties: str = "efron",
    threads: int = 1,
    task: EstimationTask | None = None,
    stream_offset: int = 0,
) -> CovBlocks:
    """Dispatch on the plan type."""
    if isinstance(plan, JackknifePlan):
        return jackknife_cov(data, spec, plan, ties=ties, threads=threads, task=task)
    if isinstance(plan, BootstrapPlan):
        return bootstrap_cov(
            data, spec, plan, ties=ties, threads=threads, task=task, stream_offset=stream_offset
        )
    raise DataError(f"unknown resample plan {plan!r}")
