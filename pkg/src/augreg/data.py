"""Study data and analysis specification.

A study holds the full sample: surrogate outcome and predictor values on
every row, and reference (gold standard) values on the validation
subsample only. The analysis spec names which columns play which role,
including the one-to-many map from each reference predictor to its
surrogate column(s).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, MissingColumn

FAMILIES = ("linear", "logistic", "cox")

INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class PredictorSpec:
    """One reference predictor and its surrogate column(s).

    A perfect surrogate is the reference column itself, observed on the
    full sample; ``surrogates`` must then name exactly that column.
    """

    reference: str
    surrogates: tuple[str, ...]
    perfect: bool = False

    def __post_init__(self):
        object.__setattr__(self, "surrogates", tuple(self.surrogates))


@dataclass(frozen=True)
class OutcomeSpec:
    """Reference and surrogate outcome columns.

    One column each for linear/logistic; a (time, event) pair on each
    side for Cox.
    """

    reference: tuple[str, ...]
    surrogate: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "surrogate", tuple(self.surrogate))


@dataclass(frozen=True)
class AnalysisSpec:
    family: str
    outcome: OutcomeSpec
    predictors: tuple[PredictorSpec, ...]
    validation_flag: str = "validated"
    cluster: str | None = None
    weight: str | None = None
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))

    # -- shape -----------------------------------------------------------

    @property
    def has_intercept(self) -> bool:
        return self.family != "cox"

    @property
    def n_ref_coef(self) -> int:
        return len(self.predictors) + (1 if self.has_intercept else 0)

    @property
    def n_sur_coef(self) -> int:
        return sum(len(p.surrogates) for p in self.predictors) + (1 if self.has_intercept else 0)

    @property
    def reference_terms(self) -> list[str]:
        terms = [p.reference for p in self.predictors]
        return [INTERCEPT] + terms if self.has_intercept else terms

    @property
    def surrogate_terms(self) -> list[str]:
        terms = [s for p in self.predictors for s in p.surrogates]
        return [INTERCEPT] + terms if self.has_intercept else terms

    def surrogate_to_reference(self) -> list[int]:
        """Map each surrogate coefficient index to its reference index.

        Dual surrogates map to the shared reference coefficient, so the
        result may repeat indices.
        """
        out = [0] if self.has_intercept else []
        offset = 1 if self.has_intercept else 0
        for i, p in enumerate(self.predictors):
            out.extend([i + offset] * len(p.surrogates))
        return out

    @property
    def reference_columns(self) -> list[str]:
        return list(self.outcome.reference) + [p.reference for p in self.predictors]

    @property
    def surrogate_columns(self) -> list[str]:
        return list(self.outcome.surrogate) + [s for p in self.predictors for s in p.surrogates]

    def data_columns(self) -> list[str]:
        """All value columns the spec touches, deduplicated in order."""
        seen: dict[str, None] = {}
        for c in self.reference_columns + self.surrogate_columns:
            seen.setdefault(c)
        return list(seen)

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise DataError(f"unknown model family {self.family!r}")
        want = 2 if self.family == "cox" else 1
        if len(self.outcome.reference) != want or len(self.outcome.surrogate) != want:
            kind = "(time, event) pair" if self.family == "cox" else "single column"
            raise DataError(f"{self.family} outcome must be a {kind} on each side")
        if self.family == "cox" and not self.predictors:
            raise DataError("a Cox analysis needs at least one predictor")
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"alpha must lie in (0, 1), got {self.alpha}")
        for p in self.predictors:
            if not p.surrogates:
                raise DataError(f"predictor {p.reference!r} has no surrogate column")
            if p.perfect and tuple(p.surrogates) != (p.reference,):
                raise DataError(
                    f"perfect predictor {p.reference!r} must use itself as its "
                    "only surrogate"
                )
        names = [p.reference for p in self.predictors]
        if len(set(names)) != len(names):
            raise DataError("duplicate reference predictor names")
        special = [self.validation_flag]
        if self.cluster:
            special.append(self.cluster)
        if self.weight:
            special.append(self.weight)
        clash = set(special) & set(self.data_columns())
        if clash:
            raise DataError(f"columns used both as values and roles: {sorted(clash)}")
        outcome_perfect = self.outcome.reference == self.outcome.surrogate
        if outcome_perfect and all(p.perfect for p in self.predictors):
            raise DataError("at least one surrogate must differ from its reference")


@dataclass
class StudyData:
    """Full-sample rows, with reference values on validated rows only."""

    columns: dict[str, np.ndarray]
    validated: np.ndarray
    cluster: np.ndarray | None = None
    weight: np.ndarray | None = None

    def __post_init__(self):
        self.validated = np.asarray(self.validated, dtype=bool)
        self.columns = {k: np.asarray(v, dtype=np.float64) for k, v in self.columns.items()}
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=np.float64)

    @property
    def n_full(self) -> int:
        return int(self.validated.shape[0])

    @property
    def n_val(self) -> int:
        return int(self.validated.sum())

    def weights(self) -> np.ndarray:
        return np.ones(self.n_full) if self.weight is None else self.weight


def check_study_data(data: StudyData, spec: AnalysisSpec, strict_subset: bool = False) -> None:
    """Validate a study against its spec before estimation.

    With ``strict_subset`` the validated rows must form a nonempty strict
    subset of the sample; the in-memory pipeline tolerates degenerate
    full validation (useful for sanity checks), the CSV loader does not.
    """
    spec.validate()
    n = data.n_full
    if n == 0:
        raise DataError("study data has no rows")
    for name in data.columns:
        col = data.columns[name]
        if col.shape != (n,):
            raise DataError(f"column {name!r} length {col.shape} does not match {n} rows")
    missing = [c for c in spec.data_columns() if c not in data.columns]
    if missing:
        raise MissingColumn(f"columns named by the spec are absent: {missing}")
    n_val = data.n_val
    if n_val == 0:
        raise DataError("no validated rows")
    if strict_subset and n_val >= n:
        raise DataError("validated rows must form a strict subset of the sample")
    surrogate_cols = set(spec.surrogate_columns)
    val = data.validated
    for c in spec.data_columns():
        col = data.columns[c]
        if c in surrogate_cols:
            if not np.all(np.isfinite(col)):
                raise DataError(f"surrogate column {c!r} has missing or non-finite values")
        elif not np.all(np.isfinite(col[val])):
            raise DataError(f"reference column {c!r} has missing values on validated rows")
    if data.weight is not None:
        w = data.weight
        if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise DataError("sampling weights must be finite, nonnegative, not all zero")
    if data.cluster is not None and len(data.cluster) != n:
        raise DataError("cluster labels length does not match the sample")


def _stack(columns: list[np.ndarray], n_rows: int) -> np.ndarray:
    return np.column_stack(columns) if columns else np.empty((n_rows, 0))


@dataclass
class ModelArrays:
    """Design and response arrays for one side (reference or surrogate)."""

    X: np.ndarray
    y: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None


def side_arrays(data: StudyData, spec: AnalysisSpec, side: str, rows) -> ModelArrays:
    """Extract design/response arrays for ``side`` over ``rows``.

    ``side`` is "reference" or "surrogate"; the reference side is only
    meaningful on validated rows. Linear/logistic designs get a leading
    intercept column, Cox designs do not.
    """
    if side == "reference":
        out_cols = list(spec.outcome.reference)
        pred_cols = [p.reference for p in spec.predictors]
    else:
        out_cols = list(spec.outcome.surrogate)
        pred_cols = [s for p in spec.predictors for s in p.surrogates]
    out0 = data.columns[out_cols[0]][rows]
    n_rows = out0.shape[0]
    columns = [data.columns[c][rows] for c in pred_cols]
    if spec.has_intercept:
        columns = [np.ones(n_rows)] + columns
    X = _stack(columns, n_rows)
    if spec.family == "cox":
        return ModelArrays(X=X, time=out0, event=data.columns[out_cols[1]][rows])
    return ModelArrays(X=X, y=out0)


def subset_rows(data: StudyData, rows: np.ndarray) -> StudyData:
    """A new study restricted to ``rows`` (indices or boolean mask)."""
    return StudyData(
        columns={k: v[rows] for k, v in data.columns.items()},
        validated=data.validated[rows],
        cluster=None if data.cluster is None else np.asarray(data.cluster)[rows],
        weight=None if data.weight is None else data.weight[rows],
    )


def blank_references(data: StudyData, spec: AnalysisSpec) -> StudyData:
    """Set reference-only columns to NaN outside the validation subsample."""
    surrogate_cols = set(spec.surrogate_columns)
    cols = dict(data.columns)
    for c in spec.reference_columns:
        if c in surrogate_cols:
            continue
        blanked = cols[c].copy()
        blanked[~data.validated] = np.nan
        cols[c] = blanked
    return replace(data, columns=cols)
