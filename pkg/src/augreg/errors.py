"""Exception hierarchy.

Two families matter to callers: :class:`DataError` for invalid input data,
specs or resampling plans (CLI exit code 2), and :class:`EstimationError`
for numerical failures while fitting or combining estimates (exit code 3).
"""

from __future__ import annotations


class AugregError(Exception):
    """Base class for all errors raised by this package."""


class DataError(AugregError):
    """Invalid input data, analysis spec, or resampling plan."""


class EstimationError(AugregError):
    """A model fit or covariance/augmentation step failed numerically."""


# -- data / plan errors ------------------------------------------------------

class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} in column {column!r}, data row {row}")


class ReferenceMissingInValidation(DataError):
    pass


class ReferencePresentOutsideValidation(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonfiniteInput(DataError):
    pass


class DegenerateSE(DataError):
    """A zero standard error makes Wald inference undefined for a row."""


class GroupTooSmall(DataError):
    """A jackknife leave-out retains too few rows, classes, or events."""


class InsufficientGroups(DataError):
    pass


# -- estimation errors -------------------------------------------------------

class RankDeficient(EstimationError):
    pass


class Degenerate(EstimationError):
    """Single-class outcome: the logistic likelihood has no interior maximum."""


class Separation(EstimationError):
    """Logistic coefficients diverging: data (quasi-)separated."""


class NoEvents(EstimationError):
    pass


class NotConverged(EstimationError):
    def __init__(self, message: str, monotone: bool = False):
        self.monotone = monotone
        super().__init__(message)


class FitError(EstimationError):
    """A fit inside the estimation pipeline failed; records which one."""

    def __init__(self, stage: str, cause: Exception, group: int | None = None):
        self.stage = stage
        self.cause = cause
        self.group = group
        where = f"{stage} fit" if group is None else f"{stage} fit in leave-out group {group}"
        super().__init__(f"{where} failed: {cause}")


class TooManyFailures(EstimationError):
    """More resampling replicates failed than the tolerated fraction."""
