"""Simulation scenarios and the Monte Carlo replication harness.

Four built-in generators cover differential outcome misclassification in
a logistic model, survival data with error in the time, the event flag
and a predictor, a linear model with a dual-surrogate predictor, and a
linear model whose surrogates are exact changes of scale. Scenario
defaults: full sample 4000, validation subsample 400.

Replicates draw from seed-derived Philox streams, so summaries are
bit-identical for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import rng as rngmod
from .augment import augment
from .data import AnalysisSpec, OutcomeSpec, PredictorSpec, StudyData
from .errors import AugregError, DataError, TooManyFailures
from .parallel import ordered_map
from .resample import (
    BootstrapPlan,
    EstimationTask,
    JackknifePlan,
    ResamplePlan,
    resample_cov,
)

# Replicate-level failures beyond this fraction abort the run.
MAX_REPLICATE_FAILURES = 0.02

# Bootstrap stream indices are partitioned per replicate in blocks of 2^20.
_BOOT_BLOCK = 1 << 20


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    n_full: int = 4000
    n_val: int = 400
    seed: int = 0
    true_beta: tuple[float, ...] | None = None

    def resolved_beta(self) -> np.ndarray:
        if self.true_beta is not None:
            return np.asarray(self.true_beta, dtype=np.float64)
        if self.name not in _DEFAULT_BETA:
            raise DataError(f"scenario {self.name!r} needs an explicit true_beta")
        return np.asarray(_DEFAULT_BETA[self.name], dtype=np.float64)


_DEFAULT_BETA = {
    "example1": (-0.5, 0.5, 0.2, 1.0, 0.5),
    "example2": (-0.5, 0.5, 0.2, 1.0, 0.5),
    "example3": (-0.5, 0.5, 0.2, 0.5, 1.0),
    "example4": (2.0, 0.2, 0.3, 0.7, 0.4),
}

SCENARIO_NAMES = tuple(_DEFAULT_BETA)


def misclassify(truth: np.ndarray, sens, spec, rng: np.random.Generator) -> np.ndarray:
    """Flip binary values: keep 1 with probability ``sens``, keep 0 with
    probability ``spec``. Both rates may vary per row."""
    truth = np.asarray(truth)
    u = rng.random(truth.shape)
    return np.where(truth == 1, (u < sens), (u >= spec)).astype(np.float64)


def _validation_flags(n_full: int, n_val: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 < n_val <= n_full:
        raise DataError(f"validation size {n_val} outside (0, {n_full}]")
    flags = np.zeros(n_full, dtype=bool)
    flags[rng.choice(n_full, size=n_val, replace=False)] = True
    return flags


def _bern(rng: np.random.Generator, prob: float, n: int) -> np.ndarray:
    return (rng.random(n) < prob).astype(np.float64)


def _blank(col: np.ndarray, validated: np.ndarray) -> np.ndarray:
    out = col.copy()
    out[~validated] = np.nan
    return out


def gen_example1(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Logistic outcome, differentially misclassified; perfect predictors."""
    n = spec.n_full
    beta = spec.resolved_beta()
    x1 = _bern(rng, 0.25, n)
    x2 = _bern(rng, 0.15, n)
    x3 = rng.standard_normal(n)
    x4 = rng.standard_normal(n)
    eta = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3 + beta[4] * x4
    y = (rng.random(n) < expit(eta)).astype(np.float64)
    sens = np.where(x1 == 1, 0.95, 0.85)
    spc = np.where(x1 == 1, 0.80, 0.90)
    y_s = misclassify(y, sens, spc, rng)
    validated = _validation_flags(n, spec.n_val, rng)
    return StudyData(
        columns={
            "y": _blank(y, validated),
            "y_s": y_s,
            "x1": x1,
            "x2": x2,
            "x3": x3,
            "x4": x4,
        },
        validated=validated,
    )


def gen_example2(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Survival data: noisy times, misclassified events and a predictor,
    plus a nonlinear heteroscedastic surrogate for one predictor.

    Event times are exponential with hazard ``exp(eta)``; the leading
    coefficient acts as the log baseline hazard. Censoring is
    exponential with rate 0.3, capped at 3.
    """
    n = spec.n_full
    beta = spec.resolved_beta()
    x1 = _bern(rng, 0.25, n)
    x2 = _bern(rng, 0.15, n)
    x3 = rng.standard_normal(n)
    x4 = rng.standard_normal(n)
    eta = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3 + beta[4] * x4
    t_event = rng.exponential(np.exp(-eta))
    censor = rng.exponential(1.0 / 0.3, n)
    cap = np.minimum(censor, 3.0)
    y = np.minimum(t_event, cap)
    e = (t_event <= cap).astype(np.float64)

    t_sur = t_event * np.exp(rng.normal(0.0, 0.05, n))
    y_s = np.minimum(t_sur, cap)
    e_s = misclassify(e, np.where(x1 == 1, 0.90, 0.95), np.where(x1 == 1, 0.95, 0.90), rng)
    x1_s = misclassify(x1, np.where(e == 1, 0.95, 0.90), np.where(e == 1, 0.95, 0.90), rng)
    quad = np.maximum(0.0, x3 + 2.0) ** 2
    sd = float(quad.std())
    scaled = quad * (0.9 / sd) if sd > 0 else quad
    x3_s = scaled + rng.normal(0.0, np.maximum(0.05, 0.05 * (x3 + 2.0)))

    validated = _validation_flags(n, spec.n_val, rng)
    return StudyData(
        columns={
            "time": _blank(y, validated),
            "event": _blank(e, validated),
            "time_s": y_s,
            "event_s": e_s,
            "x1": _blank(x1, validated),
            "x1_s": x1_s,
            "x2": x2,
            "x3": _blank(x3, validated),
            "x3_s": x3_s,
            "x4": x4,
        },
        validated=validated,
    )


def gen_example3(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Linear model with differential outcome error, a misclassified
    predictor, and two noisy surrogates for one predictor."""
    n = spec.n_full
    beta = spec.resolved_beta()
    x1 = _bern(rng, 0.25, n)
    x2 = _bern(rng, 0.15, n)
    x3 = rng.standard_normal(n)
    x4 = rng.standard_normal(n)
    err = rng.standard_normal(n)
    y = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3 + beta[4] * x4 + err
    y_s = y + np.where(x1 == 1, -0.5, 0.5) + rng.normal(0.0, 0.1, n)
    x1_s = misclassify(
        x1, np.where(err > 0, 0.95, 0.90), np.where(err > 0, 0.91, 0.90), rng
    )
    x4_s1 = 1.1 * x4 + rng.normal(0.0, 0.05, n)
    x4_s2 = 0.9 * x4 + rng.normal(0.0, 0.05, n)
    validated = _validation_flags(n, spec.n_val, rng)
    return StudyData(
        columns={
            "y": _blank(y, validated),
            "y_s": y_s,
            "x1": _blank(x1, validated),
            "x1_s": x1_s,
            "x2": x2,
            "x3": x3,
            "x4": _blank(x4, validated),
            "x4_s1": x4_s1,
            "x4_s2": x4_s2,
        },
        validated=validated,
    )


def gen_example4(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Linear model whose surrogates are exact changes of scale."""
    n = spec.n_full
    beta = spec.resolved_beta()
    x = rng.standard_normal((n, 4))
    y = beta[0] + x @ beta[1:] + rng.standard_normal(n)
    validated = _validation_flags(n, spec.n_val, rng)
    return StudyData(
        columns={
            "y": _blank(y, validated),
            "y_s": 0.14 + 0.9 * y,
            "x1": _blank(x[:, 0], validated),
            "x1_s": 0.82 * x[:, 0],
            "x2": _blank(x[:, 1], validated),
            "x2_s": 1.05 * x[:, 1],
            "x3": _blank(x[:, 2], validated),
            "x3_s": 0.80 * x[:, 2],
            "x4": _blank(x[:, 3], validated),
            "x4_s": 1.05 * x[:, 3],
        },
        validated=validated,
    )


def _perfect(name: str) -> PredictorSpec:
    return PredictorSpec(reference=name, surrogates=(name,), perfect=True)


_ANALYSIS_SPECS = {
    "example1": AnalysisSpec(
        family="logistic",
        outcome=OutcomeSpec(reference=("y",), surrogate=("y_s",)),
        predictors=(
            _perfect("x1"),
            _perfect("x2"),
            _perfect("x3"),
            _perfect("x4"),
        ),
    ),
    "example2": AnalysisSpec(
        family="cox",
        outcome=OutcomeSpec(reference=("time", "event"), surrogate=("time_s", "event_s")),
        predictors=(
            PredictorSpec(reference="x1", surrogates=("x1_s",)),
            _perfect("x2"),
            PredictorSpec(reference="x3", surrogates=("x3_s",)),
            _perfect("x4"),
        ),
    ),
    "example3": AnalysisSpec(
        family="linear",
        outcome=OutcomeSpec(reference=("y",), surrogate=("y_s",)),
        predictors=(
            PredictorSpec(reference="x1", surrogates=("x1_s",)),
            _perfect("x2"),
            _perfect("x3"),
            PredictorSpec(reference="x4", surrogates=("x4_s1", "x4_s2")),
        ),
    ),
    "example4": AnalysisSpec(
        family="linear",
        outcome=OutcomeSpec(reference=("y",), surrogate=("y_s",)),
        predictors=(
            PredictorSpec(reference="x1", surrogates=("x1_s",)),
            PredictorSpec(reference="x2", surrogates=("x2_s",)),
            PredictorSpec(reference="x3", surrogates=("x3_s",)),
            PredictorSpec(reference="x4", surrogates=("x4_s",)),
        ),
    ),
}

_GENERATORS = {
    "example1": gen_example1,
    "example2": gen_example2,
    "example3": gen_example3,
    "example4": gen_example4,
}


def scenario_family(name: str) -> str:
    return analysis_spec_for(name).family


def analysis_spec_for(name: str) -> AnalysisSpec:
    if name not in _ANALYSIS_SPECS:
        raise DataError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    return _ANALYSIS_SPECS[name]


def _require_generator(name: str):
    if name not in _GENERATORS:
        raise DataError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    return _GENERATORS[name]


def generate(spec: ScenarioSpec, replicate: int = 0) -> StudyData:
    """Generate one dataset from the replicate's derived random stream."""
    gen = rngmod.stream(spec.seed, rngmod.DOMAIN_SIMULATE, replicate)
    return _require_generator(spec.name)(spec, gen)


def scoring_truth(spec: ScenarioSpec) -> np.ndarray:
    """True coefficients in the fitted model's parameterization.

    Cox fits carry no intercept, so the leading coefficient (the log
    baseline hazard) drops out of the comparison.
    """
    beta = spec.resolved_beta()
    return beta[1:] if scenario_family(spec.name) == "cox" else beta


# ---------------------------------------------------------------------------
# replication harness


@dataclass
class ReplicateRecord:
    index: int
    estimates: dict[str, np.ndarray]
    lcl: dict[str, np.ndarray]
    ucl: dict[str, np.ndarray]
    se: dict[str, np.ndarray]


@dataclass
class EstimatorSummary:
    terms: list[str]
    truth: np.ndarray
    mean: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray
    ci_halfwidth_mean: np.ndarray


@dataclass
class ReplicationSummary:
    scenario: str
    family: str
    n_full: int
    n_val: int
    seed: int
    requested: int
    completed: int
    failures: int
    method: str
    estimators: dict[str, EstimatorSummary]
    failure_messages: list[str] = field(default_factory=list)
    replicates: list[ReplicateRecord] | None = None


ESTIMATOR_NAMES = ("beta_aug", "beta_val", "gamma_ful")


def _summarize(values: np.ndarray, lcl: np.ndarray, ucl: np.ndarray,
               truth: np.ndarray, terms: list[str]) -> EstimatorSummary:
    r = values.shape[0]
    mean = values.mean(axis=0)
    bias = mean - truth
    sd = values.std(axis=0, ddof=1) if r > 1 else np.zeros_like(mean)
    rmse = np.sqrt(np.mean((values - truth) ** 2, axis=0))
    covered = (lcl <= truth) & (truth <= ucl)
    return EstimatorSummary(
        terms=terms,
        truth=truth.copy(),
        mean=mean,
        bias=bias,
        sd=sd,
        rmse=rmse,
        coverage=covered.mean(axis=0),
        ci_halfwidth_mean=((ucl - lcl) / 2.0).mean(axis=0),
    )


def run_replications(
    scenario: ScenarioSpec,
    reps: int,
    plan: ResamplePlan | None = None,
    alpha: float = 0.05,
    ties: str = "efron",
    threads: int = 1,
    keep_replicates: bool = False,
    generator=None,
    analysis_spec: AnalysisSpec | None = None,
) -> ReplicationSummary:
    """Generate, estimate and score ``reps`` replicates of a scenario.

    Per coefficient and estimator the summary reports mean, bias, SD,
    RMSE, the coverage of nominal 1-alpha Wald intervals, and the mean
    CI half-width. Full-sample surrogate coefficients are scored against
    the true coefficient of their reference predictor (dual surrogates
    both against the shared one). Replicate failures are tolerated up to
    MAX_REPLICATE_FAILURES of the runs.

    Custom scenarios pass ``generator`` (a ``fn(scenario, rng) ->
    StudyData``) plus ``analysis_spec``; ``scenario.true_beta`` is then
    required, with the leading entry dropped from scoring for Cox
    families (the fitted model has no intercept).
    """
    if reps < 2:
        raise DataError(f"at least 2 replicates are required, got {reps}")
    if (generator is None) != (analysis_spec is None):
        raise DataError("custom runs need both generator and analysis_spec")
    aspec = analysis_spec if analysis_spec is not None else analysis_spec_for(scenario.name)
    gen_fn = generator if generator is not None else _require_generator(scenario.name)
    plan = plan or JackknifePlan()

    def one(r: int) -> ReplicateRecord | str:
        try:
            data = gen_fn(scenario, rngmod.stream(scenario.seed, rngmod.DOMAIN_SIMULATE, r))
            task = EstimationTask(data, aspec, ties=ties)
            js = task.full()
            cov = resample_cov(
                data, aspec, plan, ties=ties, task=task,
                stream_offset=r * _BOOT_BLOCK if isinstance(plan, BootstrapPlan) else 0,
            )
            est = augment(js, cov, alpha=alpha)
        except AugregError as exc:
            return f"replicate {r}: {exc}"
        record = ReplicateRecord(index=r, estimates={}, lcl={}, ucl={}, se={})
        for name in ESTIMATOR_NAMES:
            t = est.tables[name]
            record.estimates[name] = np.asarray(t.estimate, dtype=np.float64)
            record.lcl[name] = np.asarray(t.lcl)
            record.ucl[name] = np.asarray(t.ucl)
            record.se[name] = np.asarray(t.se)
        return record

    results = ordered_map(one, range(reps), threads=threads)
    records = [r for r in results if isinstance(r, ReplicateRecord)]
    messages = [r for r in results if isinstance(r, str)]
    failures = len(messages)
    if failures > MAX_REPLICATE_FAILURES * reps:
        raise TooManyFailures(
            f"{failures} of {reps} replicates failed "
            f"(> {MAX_REPLICATE_FAILURES:.0%}); first: {messages[0]}"
        )
    if not records:
        raise TooManyFailures("no replicate completed")

    beta = scenario.resolved_beta()
    truth_ref = beta[1:] if aspec.family == "cox" else beta
    truth_map = {
        "beta_aug": truth_ref,
        "beta_val": truth_ref,
        "gamma_ful": truth_ref[aspec.surrogate_to_reference()],
    }
    term_map = {
        "beta_aug": aspec.reference_terms,
        "beta_val": aspec.reference_terms,
        "gamma_ful": aspec.surrogate_terms,
    }
    estimators = {}
    for name in ESTIMATOR_NAMES:
        values = np.vstack([rec.estimates[name] for rec in records])
        lcl = np.vstack([rec.lcl[name] for rec in records])
        ucl = np.vstack([rec.ucl[name] for rec in records])
        estimators[name] = _summarize(values, lcl, ucl, truth_map[name], term_map[name])

    return ReplicationSummary(
        scenario=scenario.name,
        family=aspec.family,
        n_full=scenario.n_full,
        n_val=scenario.n_val,
        seed=scenario.seed,
        requested=reps,
        completed=len(records),
        failures=failures,
        method=plan.method,
        estimators=estimators,
        failure_messages=messages,
        replicates=records if keep_replicates else None,
    )
