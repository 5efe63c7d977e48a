"""Augmented regression estimates under measurement error.

Given a full sample observed with error-prone surrogate variables and a
randomly selected validation subsample carrying the reference (gold
standard) measurements, the augmented estimator corrects the
validation-subsample fit with full-sample surrogate information,
shrinking its variance without modeling the error structure. Supports
linear, logistic and Cox regression, grouped-jackknife or stratified
bootstrap covariances, clusters, and sampling weights.
"""

__version__ = "0.1.0"

from .augment import AugmentedEstimate, Diagnostics, InferenceTable, augment, wald_table
from .data import AnalysisSpec, OutcomeSpec, PredictorSpec, StudyData, check_study_data
from .dataio import (
    analysis_spec_to_json,
    load_analysis_spec,
    load_csv,
    parse_analysis_spec,
    write_csv,
)
from .errors import (
    AugregError,
    DataError,
    Degenerate,
    DegenerateSE,
    DimensionMismatch,
    EstimationError,
    FitError,
    GroupTooSmall,
    InsufficientGroups,
    MissingColumn,
    NoEvents,
    NonNumericCell,
    NonfiniteInput,
    NotConverged,
    RankDeficient,
    ReferenceMissingInValidation,
    Separation,
    TooManyFailures,
)
from .models import RegressionFit, fit_cox, fit_linear, fit_logistic
from .report import (
    ReportDocument,
    build_report,
    load_report,
    report_schema,
    report_to_json_dict,
    write_report,
)
from .resample import (
    BootstrapPlan,
    CovBlocks,
    EstimationTask,
    JackknifePlan,
    JointStatistic,
    ResamplePlan,
    bootstrap_cov,
    compute_joint_statistic,
    jackknife_cov,
    resample_cov,
)
from .simulate import (
    ReplicationSummary,
    ScenarioSpec,
    SCENARIO_NAMES,
    analysis_spec_for,
    generate,
    misclassify,
    run_replications,
    scoring_truth,
)

__all__ = [name for name in dir() if not name.startswith("_")]
