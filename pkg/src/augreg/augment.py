"""Combine the joint statistic with its covariance into augmented estimates.

The validation-reference coefficients are corrected by regressing their
sampling error on the observed surrogate coefficient difference: the
correction is ``cross_cov @ solve(diff_cov, gamma_diff)`` and the
variance shrinks by the matching quadratic form. Wald tables are built
for the augmented, validation-reference, and full-sample surrogate
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm

from .errors import DataError, DegenerateSE, DimensionMismatch, NonfiniteInput
from .resample import CovBlocks, JointStatistic

# Relative eigenvalue threshold below which diff_cov is treated as
# singular and solved by a truncated pseudo-inverse.
PINV_TOL = 1e-10

# Negative eigenvalues of the augmented variance beyond this relative
# size count as a material repair and are surfaced in the diagnostics.
PSD_TOL = 1e-10


@dataclass
class InferenceTable:
    terms: list[str]
    estimate: np.ndarray
    se: np.ndarray
    lcl: np.ndarray
    ucl: np.ndarray
    z: np.ndarray
    p: np.ndarray

    def rows(self) -> list[dict]:
        return [
            {
                "term": t,
                "estimate": float(self.estimate[i]),
                "se": float(self.se[i]),
                "lcl": float(self.lcl[i]),
                "ucl": float(self.ucl[i]),
                "z": float(self.z[i]),
                "p": float(self.p[i]),
            }
            for i, t in enumerate(self.terms)
        ]


@dataclass
class Diagnostics:
    k_condition: float | None = None
    pseudo_inverse: bool = False
    psd_repaired: bool = False
    no_augmentation: bool = False
    method: str = ""
    n_resamples: int = 0
    dropped_replicates: int = 0

    def as_dict(self) -> dict:
        cond = self.k_condition
        if cond is not None and not np.isfinite(cond):
            cond = None
        return {
            "k_condition": cond,
            "pseudo_inverse": self.pseudo_inverse,
            "psd_repaired": self.psd_repaired,
            "no_augmentation": self.no_augmentation,
            "method": self.method,
            "n_resamples": self.n_resamples,
            "dropped_replicates": self.dropped_replicates,
        }


@dataclass
class AugmentedEstimate:
    beta_aug: np.ndarray
    var_aug: np.ndarray
    tables: dict[str, InferenceTable]
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def se(self) -> np.ndarray:
        return self.tables["beta_aug"].se


def wald_table(
    estimate: np.ndarray,
    cov: np.ndarray,
    alpha: float = 0.05,
    terms: list[str] | None = None,
) -> InferenceTable:
    """Per-coefficient normal-quantile Wald inference.

    Raises :class:`DegenerateSE` for any zero standard error rather than
    reporting infinite z values.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    k = estimate.shape[0]
    if cov.shape != (k, k):
        raise DimensionMismatch(f"covariance {cov.shape} does not match {k} estimates")
    if not (np.all(np.isfinite(estimate)) and np.all(np.isfinite(cov))):
        raise NonfiniteInput("estimates and covariance must be finite")
    terms = list(terms) if terms is not None else [f"b{i}" for i in range(k)]
    if len(terms) != k:
        raise DimensionMismatch("term labels do not match the estimate length")
    var = np.diag(cov)
    if np.any(var < 0):
        bad = terms[int(np.argmin(var))]
        raise DataError(f"negative variance for {bad!r}")
    se = np.sqrt(var)
    zero = np.flatnonzero(se == 0)
    if zero.size:
        raise DegenerateSE(
            f"zero standard error for {[terms[i] for i in zero]}; Wald inference undefined"
        )
    zq = norm.ppf(1.0 - alpha / 2.0)
    z = estimate / se
    return InferenceTable(
        terms=terms,
        estimate=estimate,
        se=se,
        lcl=estimate - zq * se,
        ucl=estimate + zq * se,
        z=z,
        p=2.0 * norm.sf(np.abs(z)),
    )


def _solve_diff_cov(K: np.ndarray, rhs: np.ndarray, diag: Diagnostics) -> np.ndarray | None:
    """Solve diff_cov @ x = rhs, falling back to an eigen-truncated
    pseudo-inverse when the matrix is singular to ``PINV_TOL``.

    Returns None when the spectrum carries no positive information at
    all, in which case no augmentation is possible.
    """
    evals, vecs = np.linalg.eigh(K)
    largest = float(evals[-1])
    smallest = float(evals[0])
    if largest <= 0:
        diag.no_augmentation = True
        return None
    diag.k_condition = largest / smallest if smallest > 0 else float("inf")
    if smallest >= PINV_TOL * largest:
        try:
            return cho_solve(cho_factor(K, check_finite=False), rhs, check_finite=False)
        except LinAlgError:
            pass  # fall through to the pseudo-inverse
    diag.pseudo_inverse = True
    keep = evals >= PINV_TOL * largest
    vk = vecs[:, keep]
    proj = vk.T @ rhs
    return vk @ (proj / evals[keep][:, None])


def augment(js: JointStatistic, cov: CovBlocks, alpha: float = 0.05) -> AugmentedEstimate:
    """Augmented coefficients, variance, and Wald tables.

    An exactly zero ``diff_cov`` yields the validation-reference
    estimate unchanged (variance ``val_cov``) with the NoAugmentation
    diagnostic set. A materially indefinite augmented variance is
    repaired by clipping negative eigenvalues to zero, with the repair
    flagged.
    """
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    p, q = js.p, js.q
    Sigma, Omega, K = cov.val_cov, cov.cross_cov, cov.diff_cov
    if Sigma.shape != (p, p) or Omega.shape != (p, q) or K.shape != (q, q):
        raise DimensionMismatch(
            f"blocks {Sigma.shape}/{Omega.shape}/{K.shape} do not conform to p={p}, q={q}"
        )
    if js.gamma_diff.shape != (q,):
        raise DimensionMismatch("gamma_diff length does not match the surrogate blocks")
    for name, m in (("val_cov", Sigma), ("cross_cov", Omega), ("diff_cov", K)):
        if not np.all(np.isfinite(m)):
            raise NonfiniteInput(f"{name} contains non-finite entries")

    diag = Diagnostics(
        method=cov.method, n_resamples=cov.n_resamples, dropped_replicates=cov.dropped
    )

    solved = None
    if K.any():
        solved = _solve_diff_cov(K, np.column_stack([js.gamma_diff, Omega.T]), diag)
    else:
        diag.no_augmentation = True
    if solved is None:
        beta_aug = js.beta_val.copy()
        var_aug = (Sigma + Sigma.T) / 2.0
    else:
        beta_aug = js.beta_val - Omega @ solved[:, 0]
        var_aug = Sigma - Omega @ solved[:, 1:]
        var_aug = (var_aug + var_aug.T) / 2.0
        evals, vecs = np.linalg.eigh(var_aug)
        if evals[0] < 0:
            scale = float(np.abs(evals).max())
            if evals[0] < -PSD_TOL * scale:
                diag.psd_repaired = True
            clipped = np.clip(evals, 0.0, None)
            var_aug = (vecs * clipped) @ vecs.T
            var_aug = (var_aug + var_aug.T) / 2.0

    tables = {
        "beta_aug": wald_table(beta_aug, var_aug, alpha, js.reference_terms),
        "beta_val": wald_table(js.beta_val, Sigma, alpha, js.reference_terms),
    }
    if cov.ful_cov is not None:
        tables["gamma_ful"] = wald_table(js.gamma_ful, cov.ful_cov, alpha, js.surrogate_terms)
    return AugmentedEstimate(beta_aug=beta_aug, var_aug=var_aug, tables=tables, diagnostics=diag)
