"""Weighted regression fitters: linear, logistic, Cox proportional hazards.

All three produce a :class:`RegressionFit` holding the coefficient vector
and convergence diagnostics. They are pure functions of their inputs and
safe to call concurrently.

Conventions
-----------
* The caller builds the design matrix; an intercept column, when wanted,
  is prepended by the caller (linear/logistic). Cox designs carry no
  intercept: it is absorbed into the baseline hazard.
* Case weights default to 1. Multiplying all weights by a positive
  constant leaves coefficients unchanged; duplicating a row is the same
  as doubling its weight.
* ``log_likelihood`` holds the maximized weighted log likelihood
  (partial log likelihood for Cox). For the linear model it records the
  weighted residual sum of squares instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import expit

from .errors import DataError, Degenerate, NoEvents, NotConverged, RankDeficient, Separation

# Smallest/largest eigenvalue ratio of the weighted Gram (or Hessian) below
# which the design is treated as rank deficient.
RANK_TOL = 1e-12

# Beyond this linear-predictor magnitude the Bernoulli / partial likelihood
# is flat to machine precision; used to detect separation and monotone
# likelihoods.
LINPRED_GUARD = 30.0

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
_MAX_HALVINGS = 30


@dataclass
class RegressionFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float


# ---------------------------------------------------------------------------
# input checks


def _as_design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"design matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("design matrix contains non-finite entries")
    if X.shape[0] < X.shape[1]:
        raise RankDeficient(
            f"design has more columns ({X.shape[1]}) than rows ({X.shape[0]})"
        )
    return X


def _as_weights(w: np.ndarray | None, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise DataError(f"weights length {w.shape} does not match {n} rows")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("case weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise DataError("case weights sum to zero")
    return w


def _as_response(y: np.ndarray, n: int, name: str = "response") -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise DataError(f"{name} length {y.shape} does not match {n} design rows")
    if not np.all(np.isfinite(y)):
        raise DataError(f"{name} contains non-finite values")
    return y


def _solve_spd(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        return cho_solve(cho_factor(A, check_finite=False), b, check_finite=False)
    except LinAlgError as exc:
        raise RankDeficient(f"{what} is singular or indefinite") from exc


# ---------------------------------------------------------------------------
# linear model


def fit_linear(X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> RegressionFit:
    """Weighted least squares via the normal equations.

    Coefficients minimize ``sum(w * (y - X b)**2)``. Raises
    :class:`RankDeficient` when the weighted Gram matrix has an
    eigenvalue ratio below ``RANK_TOL``.
    """
    X = _as_design(X)
    n = X.shape[0]
    y = _as_response(y, n)
    w = _as_weights(w, n)

    Xw = X * w[:, None]
    gram = Xw.T @ X
    rhs = Xw.T @ y
    evals = np.linalg.eigvalsh(gram)
    if evals[-1] <= 0 or evals[0] < RANK_TOL * evals[-1]:
        raise RankDeficient("weighted Gram matrix is numerically singular")
    beta = _solve_spd(gram, rhs, "weighted Gram matrix")
    resid = y - X @ beta
    rss = float(w @ (resid * resid))
    return RegressionFit(coefficients=beta, converged=True, iterations=1, log_likelihood=rss)


# ---------------------------------------------------------------------------
# logistic model


def logistic_score(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of the weighted Bernoulli log likelihood at ``beta``."""
    mu = expit(X @ beta)
    return X.T @ (w * (y - mu))


def _logistic_ll(X, y, w, beta):
    eta = X @ beta
    ll = float(w @ (y * eta - np.logaddexp(0.0, eta)))
    return ll, float(np.max(np.abs(eta)))


def _logistic_derivatives(X, y, w, beta):
    eta = X @ beta
    mu = expit(eta)
    ll = float(w @ (y * eta - np.logaddexp(0.0, eta)))
    grad = X.T @ (w * (y - mu))
    wdiag = w * mu * (1.0 - mu)
    hess = (X * wdiag[:, None]).T @ X
    return ll, grad, hess


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: np.ndarray | None = None,
) -> RegressionFit:
    """Damped Newton maximization of the weighted Bernoulli log likelihood.

    Convergence is declared when the accepted coefficient step has
    max-norm below ``tol``. Raises :class:`Degenerate` when only one
    outcome class carries weight, :class:`Separation` when the linear
    predictor runs past ``LINPRED_GUARD`` without the steps shrinking,
    and :class:`NotConverged` after ``max_iter`` iterations.
    """
    X = _as_design(X)
    n = X.shape[0]
    y = _as_response(y, n, "binary outcome")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("binary outcome must contain only 0 and 1")
    w = _as_weights(w, n)
    if float(w[y == 1.0].sum()) <= 0 or float(w[y == 0.0].sum()) <= 0:
        raise Degenerate("a single outcome class carries all the weight")

    p = X.shape[1]
    beta = np.zeros(p) if start is None else np.asarray(start, dtype=np.float64).copy()
    ll, grad, hess = _logistic_derivatives(X, y, w, beta)
    grad_floor = 1e-10 * max(1.0, float(w.sum()))
    prev_step = np.inf

    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) <= grad_floor:
            return RegressionFit(beta, converged=True, iterations=it - 1, log_likelihood=ll)
        delta = _solve_spd(hess, grad, "logistic Hessian")
        step = delta
        if float(np.max(np.abs(step))) < tol:
            # The convergence step: its likelihood effect is below fp
            # noise, so halving against it would stall the iteration.
            beta = beta + step
            new_ll, _ = _logistic_ll(X, y, w, beta)
            return RegressionFit(beta, converged=True, iterations=it, log_likelihood=new_ll)
        new_ll, eta_max = _logistic_ll(X, y, w, beta + step)
        halvings = 0
        while new_ll < ll and halvings < _MAX_HALVINGS:
            step = step / 2.0
            new_ll, eta_max = _logistic_ll(X, y, w, beta + step)
            halvings += 1
        if new_ll < ll:
            raise NotConverged("logistic step-halving failed to improve the likelihood")
        beta = beta + step
        step_norm = float(np.max(np.abs(step)))
        if step_norm < tol:
            return RegressionFit(beta, converged=True, iterations=it, log_likelihood=new_ll)
        if eta_max > LINPRED_GUARD and step_norm >= prev_step:
            raise Separation(
                "linear predictor exceeded the guard while steps stopped shrinking; "
                "data appear separated"
            )
        prev_step = step_norm
        ll, grad, hess = _logistic_derivatives(X, y, w, beta)
    raise NotConverged(f"logistic fit did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# Cox proportional hazards


def _risk_groups(time: np.ndarray) -> np.ndarray:
    """Start index of each tied-time block in an ascending time array."""
    n = time.shape[0]
    starts = np.flatnonzero(np.diff(time) > 0) + 1
    return np.concatenate(([0], starts)) if n else starts


class _CoxWork:
    """Iteration-invariant aggregates for one time-sorted dataset.

    Tied-event groups are split once: groups with a single event (the
    bulk, under continuous times) take a vectorized path, groups with
    several share the tie correction. Under Breslow all groups take the
    plain path.
    """

    def __init__(self, X: np.ndarray, event: np.ndarray, w: np.ndarray,
                 starts: np.ndarray, ties: str):
        n, p = X.shape
        self.X = X
        self.event = event
        self.w = w
        self.p = p
        self.we = w * event
        self.base_grad = X.T @ self.we
        # Upper triangle of the per-row outer products; the Hessian is
        # reassembled symmetric from these columns.
        iu, ju = np.triu_indices(p)
        self.iu, self.ju = iu, ju
        self.xout_u = X[:, iu] * X[:, ju]
        d = np.add.reduceat(self.event, starts)
        wsum = np.add.reduceat(self.we, starts)
        has = d > 0
        if ties == "breslow":
            plain = has
            multi = np.empty(0, dtype=np.intp)
        else:
            plain = has & (d == 1.0)
            multi = np.flatnonzero(has & (d > 1.0))
        self.starts_plain = starts[plain]
        self.wsum_plain = wsum[plain]
        # Death-row indices per multi group, for the tie-corrected sums.
        ends = np.concatenate([starts[1:], [len(self.event)]])
        self.multi = [
            (
                np.flatnonzero(self.event[starts[k]:ends[k]] > 0) + starts[k],
                int(starts[k]),
                float(d[k]),
                float(wsum[k]),
            )
            for k in multi
        ]

    def _suffix0(self, r: np.ndarray) -> np.ndarray:
        return np.cumsum(r[::-1])[::-1]

    def ll(self, beta: np.ndarray) -> tuple[float, float]:
        """(partial log likelihood, linear-predictor spread)."""
        eta = self.X @ beta
        shift = float(eta.max())
        spread = shift - float(eta.min())
        r = self.w * np.exp(eta - shift)
        s0 = self._suffix0(r)
        ll = float(self.we @ (eta - shift))
        if len(self.starts_plain):
            ll -= float(self.wsum_plain @ np.log(s0[self.starts_plain]))
        for rows, start, dk, wsum in self.multi:
            s0d = float(r[rows].sum())
            frac = np.arange(dk) / dk
            ll -= wsum / dk * float(np.log(s0[start] - frac * s0d).sum())
        return ll, spread

    def derivatives(self, beta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, float]:
        """(ll, gradient, Hessian, linear-predictor spread)."""
        X, p = self.X, self.p
        eta = X @ beta
        shift = float(eta.max())
        spread = shift - float(eta.min())
        r = self.w * np.exp(eta - shift)
        s0 = self._suffix0(r)
        rX = r[:, None] * X
        s1 = np.cumsum(rX[::-1], axis=0)[::-1]
        s2u = np.cumsum((r[:, None] * self.xout_u)[::-1], axis=0)[::-1]

        ll = float(self.we @ (eta - shift))
        grad = self.base_grad.copy()
        hess_u = np.zeros(len(self.iu))

        sp = self.starts_plain
        if len(sp):
            S0p = s0[sp]
            wp = self.wsum_plain
            u = s1[sp] / S0p[:, None]
            ll -= float(wp @ np.log(S0p))
            grad -= u.T @ wp
            hess_u += (wp / S0p) @ s2u[sp]
            hess_u -= (u[:, self.iu] * u[:, self.ju]).T @ wp

        for rows, start, dk, wsum in self.multi:
            rd = r[rows]
            s0d = float(rd.sum())
            s1d = rd @ X[rows]
            s2d = rd @ self.xout_u[rows]
            mw = wsum / dk
            frac = (np.arange(dk) / dk)[:, None]
            denom = s0[start] - frac * s0d
            u = (s1[start][None, :] - frac * s1d[None, :]) / denom
            ll -= mw * float(np.log(denom).sum())
            grad -= mw * u.sum(axis=0)
            num2 = s2u[start][None, :] - frac * s2d[None, :]
            hess_u += mw * (num2 / denom).sum(axis=0)
            hess_u -= mw * np.einsum("ki,kj->ij", u, u)[self.iu, self.ju]

        hess = np.zeros((p, p))
        hess[self.iu, self.ju] = hess_u
        hess.T[self.iu, self.ju] = hess_u
        return ll, grad, hess, spread


def cox_score(
    X: np.ndarray,
    time: np.ndarray,
    event: np.ndarray,
    w: np.ndarray,
    beta: np.ndarray,
    ties: str = "efron",
) -> np.ndarray:
    """Gradient of the weighted partial log likelihood at ``beta``."""
    order = np.argsort(time, kind="stable")
    ts = time[order]
    work = _CoxWork(X[order], event[order], w[order], _risk_groups(ts), ties)
    _, grad, _, _ = work.derivatives(np.asarray(beta, dtype=np.float64))
    return grad


def fit_cox(
    X: np.ndarray,
    time: np.ndarray,
    event: np.ndarray,
    w: np.ndarray | None = None,
    ties: str = "efron",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: np.ndarray | None = None,
    assume_sorted: bool = False,
) -> RegressionFit:
    """Newton maximization of the weighted Cox partial likelihood.

    ``ties`` selects the Efron (default) or Breslow correction for tied
    event times. Raises :class:`NoEvents` when no event carries weight
    and :class:`NotConverged` (with ``monotone=True``) when coefficients
    diverge past the linear-predictor guard, the signature of a monotone
    partial likelihood.
    """
    if ties not in ("efron", "breslow"):
        raise DataError(f"ties must be 'efron' or 'breslow', got {ties!r}")
    X = _as_design(X)
    n = X.shape[0]
    time = _as_response(time, n, "survival time")
    event = _as_response(event, n, "event indicator")
    if np.any(time <= 0):
        raise DataError("survival times must be positive")
    if not np.all((event == 0.0) | (event == 1.0)):
        raise DataError("event indicator must contain only 0 and 1")
    w = _as_weights(w, n)
    if float(w[event == 1.0].sum()) <= 0:
        raise NoEvents("no event carries positive weight")

    if assume_sorted:
        Xs, ts, es, ws = X, time, event, w
    else:
        order = np.argsort(time, kind="stable")
        Xs, ts, es, ws = X[order], time[order], event[order], w[order]
    p = X.shape[1]
    work = _CoxWork(Xs, es, ws, _risk_groups(ts), ties)

    beta = np.zeros(p) if start is None else np.asarray(start, dtype=np.float64).copy()
    ll, grad, hess, _ = work.derivatives(beta)
    grad_floor = 1e-10 * max(1.0, float(ws.sum()))
    prev_step = np.inf

    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) <= grad_floor:
            return RegressionFit(beta, converged=True, iterations=it - 1, log_likelihood=ll)
        delta = _solve_spd(hess, grad, "partial-likelihood Hessian")
        step = delta
        if float(np.max(np.abs(step))) < tol:
            # The convergence step: its likelihood effect is below fp
            # noise, so halving against it would stall the iteration.
            beta = beta + step
            new_ll, _ = work.ll(beta)
            return RegressionFit(beta, converged=True, iterations=it, log_likelihood=new_ll)
        new_ll, spread = work.ll(beta + step)
        halvings = 0
        while new_ll < ll and halvings < _MAX_HALVINGS:
            step = step / 2.0
            new_ll, spread = work.ll(beta + step)
            halvings += 1
        if new_ll < ll:
            raise NotConverged("Cox step-halving failed to improve the partial likelihood")
        beta = beta + step
        step_norm = float(np.max(np.abs(step)))
        if step_norm < tol:
            return RegressionFit(beta, converged=True, iterations=it, log_likelihood=new_ll)
        if spread > LINPRED_GUARD and step_norm >= prev_step:
            raise NotConverged(
                "coefficients diverging past the linear-predictor guard; "
                "the partial likelihood appears monotone",
                monotone=True,
            )
        prev_step = step_norm
        ll, grad, hess, _ = work.derivatives(beta)
    raise NotConverged(f"Cox fit did not converge in {max_iter} iterations")
