"""Fitter unit tests: closed-form cases, independent oracles, invariances."""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from augreg import (
    DataError,
    Degenerate,
    NoEvents,
    NotConverged,
    RankDeficient,
    fit_cox,
    fit_linear,
    fit_logistic,
)
from augreg.models import cox_score, logistic_score

TOL = 1e-8


# ---------------------------------------------------------------------------
# linear


def test_linear_intercept_only_is_weighted_mean():
    fit = fit_linear(np.ones((3, 1)), np.array([1.0, 2.0, 3.0]))
    assert fit.coefficients[0] == 2.0
    assert fit.converged and fit.iterations == 1
    # log_likelihood records the weighted residual sum of squares
    assert fit.log_likelihood == pytest.approx(2.0)


def test_linear_duplicate_columns_rank_deficient():
    x = np.random.default_rng(1).standard_normal(10)
    X = np.column_stack([np.ones(10), x, x])
    with pytest.raises(RankDeficient):
        fit_linear(X, np.zeros(10))


def test_linear_matches_normal_equations_oracle():
    rng = np.random.default_rng(42)
    X = np.column_stack([np.ones(20), rng.standard_normal((20, 3))])
    beta = np.array([1.0, -2.0, 0.5, 3.0])
    y = X @ beta + rng.standard_normal(20)
    w = rng.uniform(0.5, 2.0, 20)
    fit = fit_linear(X, y, w)
    sw = np.sqrt(w)
    oracle, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    assert np.abs(fit.coefficients - oracle).max() < 1e-10


def test_linear_rejects_wide_and_nonfinite_designs():
    with pytest.raises(RankDeficient):
        fit_linear(np.ones((2, 3)), np.zeros(2))
    X = np.ones((4, 1))
    X[2, 0] = np.inf
    with pytest.raises(DataError):
        fit_linear(X, np.zeros(4))


# ---------------------------------------------------------------------------
# logistic


def test_logistic_intercept_only_closed_form():
    y = np.array([1.0, 0, 0, 0] * 10)
    fit = fit_logistic(np.ones((40, 1)), y)
    assert fit.coefficients[0] == pytest.approx(np.log(0.25 / 0.75), abs=1e-10)
    assert fit.converged


def test_logistic_single_class_degenerate():
    with pytest.raises(Degenerate):
        fit_logistic(np.ones((10, 1)), np.zeros(10))
    # weights can silence a class even when both values appear
    y = np.array([1.0, 0, 0, 0])
    with pytest.raises(Degenerate):
        fit_logistic(np.ones((4, 1)), y, w=np.array([0.0, 1, 1, 1]))


def test_logistic_matches_two_by_two_table_closed_form():
    rng = np.random.default_rng(7)
    x = (rng.random(50) < 0.4).astype(float)
    y = (rng.random(50) < np.where(x == 1, 0.7, 0.3)).astype(float)
    n11 = np.sum((x == 1) & (y == 1))
    n10 = np.sum((x == 1) & (y == 0))
    n01 = np.sum((x == 0) & (y == 1))
    n00 = np.sum((x == 0) & (y == 0))
    intercept = np.log(n01 / n00)
    slope = np.log(n11 * n00 / (n10 * n01))
    fit = fit_logistic(np.column_stack([np.ones(50), x]), y)
    assert abs(fit.coefficients[0] - intercept) < 1e-8
    assert abs(fit.coefficients[1] - slope) < 1e-8


def test_logistic_rejects_nonbinary_outcome():
    with pytest.raises(DataError):
        fit_logistic(np.ones((3, 1)), np.array([0.0, 0.5, 1.0]))


def test_logistic_score_small_at_solution():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(300), rng.standard_normal((300, 2))])
    y = (rng.random(300) < 1 / (1 + np.exp(-(X @ np.array([-0.3, 0.8, -0.5]))))).astype(float)
    fit = fit_logistic(X, y)
    assert np.abs(logistic_score(X, y, np.ones(300), fit.coefficients)).max() < 10 * TOL


# ---------------------------------------------------------------------------
# Cox


def _naive_partial_ll(beta, x, time, event):
    # no ties: plain product over risk sets, O(n^2)
    ll = 0.0
    for i in range(len(x)):
        if event[i]:
            at_risk = time >= time[i]
            ll += beta * x[i] - np.log(np.exp(beta * x[at_risk]).sum())
    return ll


def test_cox_single_predictor_matches_brute_force_maximizer():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(30)
    t = rng.exponential(np.exp(-0.7 * x))
    c = rng.exponential(2.0, 30)
    time = np.minimum(t, c)
    event = (t <= c).astype(float)
    assert len(np.unique(time)) == 30  # continuous: ties method immaterial
    fit = fit_cox(x[:, None], time, event)
    res = minimize_scalar(
        lambda b: -_naive_partial_ll(b, x, time, event),
        bounds=(-10, 10),
        method="bounded",
        options={"xatol": 1e-10},
    )
    assert abs(fit.coefficients[0] - res.x) < 1e-6
    assert fit.log_likelihood == pytest.approx(-res.fun, abs=1e-9)


def test_cox_monotone_likelihood_diagnostic():
    # event at the x=1 subject first, the other censored later: the
    # partial likelihood increases in beta without bound
    x = np.array([[1.0], [0.0]])
    with pytest.raises(NotConverged) as exc:
        fit_cox(x, np.array([1.0, 2.0]), np.array([1.0, 0.0]))
    assert exc.value.monotone


def test_cox_flat_predictor_returns_zero():
    x = np.ones((6, 1))
    t = np.array([1.0, 2, 3, 4, 5, 6])
    e = np.array([1.0, 0, 1, 0, 1, 0])
    fit = fit_cox(x, t, e)
    assert fit.coefficients[0] == 0.0
    assert fit.converged


def test_cox_no_events_raises():
    with pytest.raises(NoEvents):
        fit_cox(np.ones((3, 1)), np.array([1.0, 2, 3]), np.zeros(3))
    with pytest.raises(DataError):
        fit_cox(np.ones((3, 1)), np.array([0.0, 2, 3]), np.array([1.0, 0, 0]))


def _naive_tied_ll(beta, X, time, event, w, ties):
    # direct textbook formulas, independent of the vectorized fitter
    ll = 0.0
    for u in np.unique(time[event == 1]):
        deaths = np.flatnonzero((time == u) & (event == 1))
        risk = np.flatnonzero(time >= u)
        eta = X @ beta
        r = w * np.exp(eta)
        s0 = r[risk].sum()
        s0d = r[deaths].sum()
        d = len(deaths)
        wsum = w[deaths].sum()
        ll += float(w[deaths] @ eta[deaths])
        if ties == "breslow":
            ll -= wsum * np.log(s0)
        else:
            for el in range(d):
                ll -= wsum / d * np.log(s0 - el / d * s0d)
    return ll


@pytest.mark.parametrize("ties", ["efron", "breslow"])
def test_cox_tied_loglik_matches_naive_formulas(ties):
    rng = np.random.default_rng(23)
    X = rng.standard_normal((40, 2))
    time = np.ceil(rng.exponential(1.0, 40) * 4) / 4  # heavy ties
    event = (rng.random(40) < 0.7).astype(float)
    event[0] = 1.0
    w = rng.uniform(0.5, 2.0, 40)
    fit = fit_cox(X, time, event, w, ties=ties)
    expected = _naive_tied_ll(fit.coefficients, X, time, event, w, ties)
    assert fit.log_likelihood == pytest.approx(expected, rel=1e-10)
    assert np.abs(cox_score(X, time, event, w, fit.coefficients, ties)).max() < 10 * TOL


def test_cox_score_small_at_solution():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((200, 3))
    t = rng.exponential(np.exp(-(X @ np.array([0.4, -0.2, 0.1]))))
    c = rng.exponential(1.5, 200)
    time = np.minimum(t, c)
    event = (t <= c).astype(float)
    for ties in ("efron", "breslow"):
        fit = fit_cox(X, time, event, ties=ties)
        assert np.abs(cox_score(X, time, event, np.ones(200), fit.coefficients, ties)).max() < 10 * TOL


# ---------------------------------------------------------------------------
# shared invariances


def _sim_logistic(rng, n=120):
    X = np.column_stack([np.ones(n), rng.standard_normal(n), rng.standard_normal(n)])
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ np.array([0.2, -0.7, 0.4]))))).astype(float)
    return X, y


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_affine_equivariance(seed):
    rng = np.random.default_rng(seed)
    X, y = _sim_logistic(rng)
    a, b = 1.7, -2.5
    Xt = X.copy()
    Xt[:, 1] = a + b * X[:, 1]

    lin = fit_linear(X, X[:, 2] + y)
    lin_t = fit_linear(Xt, X[:, 2] + y)
    assert abs(lin_t.coefficients[1] - lin.coefficients[1] / b) < 1e-8
    assert abs(lin_t.coefficients[0] - (lin.coefficients[0] - a * lin.coefficients[1] / b)) < 1e-8

    log = fit_logistic(X, y)
    log_t = fit_logistic(Xt, y)
    assert abs(log_t.coefficients[1] - log.coefficients[1] / b) < 1e-8
    assert abs(log_t.coefficients[0] - (log.coefficients[0] - a * log.coefficients[1] / b)) < 1e-8


@pytest.mark.parametrize("seed", [0, 1])
def test_weight_scaling_invariance(seed):
    rng = np.random.default_rng(seed)
    X, y = _sim_logistic(rng)
    w = rng.uniform(0.5, 2.0, len(y))
    t = rng.exponential(1.0, len(y))

    for c in (7.5, 0.125):
        assert np.abs(
            fit_linear(X, y, w).coefficients - fit_linear(X, y, c * w).coefficients
        ).max() < 1e-10
        assert np.abs(
            fit_logistic(X, y, w).coefficients - fit_logistic(X, y, c * w).coefficients
        ).max() < 1e-10
        assert np.abs(
            fit_cox(X[:, 1:], t, y, w).coefficients
            - fit_cox(X[:, 1:], t, y, c * w).coefficients
        ).max() < 1e-10


@pytest.mark.parametrize("seed", [0, 1])
def test_duplication_equals_doubled_weights(seed):
    rng = np.random.default_rng(seed)
    X, y = _sim_logistic(rng)
    t = rng.exponential(1.0, len(y))
    idx = np.repeat(np.arange(len(y)), 2)

    dbl = fit_linear(X, y, 2.0 * np.ones(len(y))).coefficients
    dup = fit_linear(X[idx], y[idx]).coefficients
    assert np.abs(dbl - dup).max() < 1e-10

    dbl = fit_logistic(X, y, 2.0 * np.ones(len(y))).coefficients
    dup = fit_logistic(X[idx], y[idx]).coefficients
    assert np.abs(dbl - dup).max() < 1e-10

    # Efron's correction counts tied death rows, so duplication is only
    # equivalent to weighting under the Breslow correction.
    dbl = fit_cox(X[:, 1:], t, y, 2.0 * np.ones(len(y)), ties="breslow").coefficients
    dup = fit_cox(X[idx][:, 1:], t[idx], y[idx], ties="breslow").coefficients
    assert np.abs(dbl - dup).max() < 1e-10


def test_warm_start_matches_cold_start():
    rng = np.random.default_rng(9)
    X, y = _sim_logistic(rng, n=200)
    cold = fit_logistic(X, y)
    warm = fit_logistic(X, y, start=cold.coefficients + 0.05)
    assert np.abs(cold.coefficients - warm.coefficients).max() < 1e-10

    t = rng.exponential(1.0, 200)
    cold = fit_cox(X[:, 1:], t, y)
    warm = fit_cox(X[:, 1:], t, y, start=cold.coefficients + 0.05)
    assert np.abs(cold.coefficients - warm.coefficients).max() < 1e-10


def test_case_weight_validation():
    X = np.ones((4, 1))
    y = np.array([1.0, 0, 1, 0])
    with pytest.raises(DataError):
        fit_linear(X, y, w=np.array([1.0, -1, 1, 1]))
    with pytest.raises(DataError):
        fit_linear(X, y, w=np.zeros(4))
    with pytest.raises(DataError):
        fit_linear(X, y, w=np.array([1.0, np.nan, 1, 1]))
