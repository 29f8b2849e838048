"""Plug-in variance estimators for the standardized scores.

All estimators are sample averages evaluated at the null fits.  The
``u1`` side (``s_ex``, ``h``, ``sigma11``) uses binomial-variance
weights from the aggregated-genotype null fit on the extended design
row ``z_e = (1, x, genotype_sum)``; the ``u2`` side (``s_x``, ``s_xy``,
``sigma22``) uses weights from the covariate-only fit on ``z = (1, x)``.
Each variance is thereby paired with the fit that generated its score.
A ``u1_weight_source`` switch evaluates the ``u1``-side weights at the
covariate-only fit instead, for sensitivity analysis; both choices are
consistent under the null.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import expit

from .data_model import CaseControlDataset, LogisticFit
from .errors import DataValidationError, DegenerateStatisticError, NumericError

U1WeightSource = Literal["null_theta", "null_both"]

_COND_LIMIT = 1e12
_PSD_SLACK = 1e-8
_DIAG_FLOOR = 1e-12


@dataclass(frozen=True)
class NuisanceMatrices:
    """Weighted moment matrices entering the variance estimators.

    ``h`` maps each intercept anchor to the row vector that projects the
    extended design out of the random-effect score contribution.
    ``u1_weights`` caches the per-subject weights used on the ``u1``
    side, so downstream estimators stay consistent with the source
    recorded in ``u1_weight_source``.
    """

    s_x: np.ndarray
    s_ex: np.ndarray
    s_xy: np.ndarray
    h: dict[float, np.ndarray]
    u1_weight_source: U1WeightSource = "null_theta"
    u1_weights: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


@dataclass(frozen=True)
class VarianceBundle:
    """Variance estimates over an anchor grid.

    ``sigma11[i, j]`` estimates the asymptotic covariance of the scaled
    random-effect scores at anchors ``i`` and ``j``; ``sigma22`` the
    asymptotic variance of the scaled fixed-effect score; ``sigma_s`` the
    correlation matrix of the standardized random-effect scores.
    """

    sigma11: np.ndarray
    sigma22: float
    sigma_s: np.ndarray


def _z(ds: CaseControlDataset) -> np.ndarray:
    return np.hstack([np.ones((ds.n, 1)), ds.x])


def _z_e(ds: CaseControlDataset) -> np.ndarray:
    return np.hstack([np.ones((ds.n, 1)), ds.x, ds.genotype_sums[:, None]])


def _binomial_weights(fit: LogisticFit, ds: CaseControlDataset) -> np.ndarray:
    pi = expit(fit.linear_predictor(ds))
    return pi * (1.0 - pi)


def _check_spd(mat: np.ndarray, name: str) -> None:
    eigs = np.linalg.eigvalsh(mat)
    if eigs[0] <= 0.0:
        raise NumericError(f"{name} is singular or not positive definite")
    if eigs[-1] / eigs[0] > _COND_LIMIT:
        raise NumericError(f"{name} is ill conditioned (condition number > {_COND_LIMIT:g})")


def nuisance_matrices(
    ds: CaseControlDataset,
    fit_theta: LogisticFit,
    fit_both: LogisticFit,
    alpha_grid,
    *,
    u1_weight_source: U1WeightSource = "null_theta",
) -> NuisanceMatrices:
    """Sample-average moment matrices at the null fits.

    ``alpha_grid`` lists the intercept anchors at which the projection
    rows ``h`` are needed; the ``1 - 2*pi`` factor inside each ``h`` row
    is evaluated with the anchor replacing the fitted intercept.
    """
    if not (fit_theta.converged and fit_both.converged):
        raise DataValidationError("nuisance matrices require converged fits")
    z = _z(ds)
    ze = _z_e(ds)
    w2 = _binomial_weights(fit_both, ds)
    if u1_weight_source == "null_theta":
        w1 = _binomial_weights(fit_theta, ds)
    elif u1_weight_source == "null_both":
        w1 = w2
    else:
        raise DataValidationError(f"unknown u1_weight_source {u1_weight_source!r}")

    n = ds.n
    s_x = (z * w2[:, None]).T @ z / n
    s_xy = z.T @ (w2 * ds.genotype_sums) / n
    s_ex = (ze * w1[:, None]).T @ ze / n
    _check_spd(s_x, "s_x")
    _check_spd(s_ex, "s_ex")

    h: dict[float, np.ndarray] = {}
    for a in np.asarray(alpha_grid, dtype=float):
        shifted = expit(fit_theta.linear_predictor(ds, intercept=float(a)))
        factor = w1 * (1.0 - 2.0 * shifted) * ds.genotype_sq_norms
        h[float(a)] = factor @ ze / n
    return NuisanceMatrices(
        s_x=s_x,
        s_ex=s_ex,
        s_xy=s_xy,
        h=h,
        u1_weight_source=u1_weight_source,
        u1_weights=w1,
    )


def _c1_values(
    ds: CaseControlDataset,
    fit_theta: LogisticFit,
    nm: NuisanceMatrices,
    alpha_star: float,
) -> np.ndarray:
    key = float(alpha_star)
    if key not in nm.h:
        raise DataValidationError(f"no projection row for anchor {alpha_star!r}")
    shifted = expit(fit_theta.linear_predictor(ds, intercept=key))
    proj = _z_e(ds) @ np.linalg.solve(nm.s_ex, nm.h[key])
    return (1.0 - 2.0 * shifted) * ds.genotype_sq_norms - proj


def sigma11_hat(
    ds: CaseControlDataset,
    fit_theta: LogisticFit,
    nm: NuisanceMatrices,
    a1: float,
    a2: float,
) -> float:
    """Covariance estimate for the scaled random-effect scores at two anchors."""
    c1a = _c1_values(ds, fit_theta, nm, a1)
    c1b = c1a if float(a2) == float(a1) else _c1_values(ds, fit_theta, nm, a2)
    return float(np.sum(nm.u1_weights * c1a * c1b) / ds.n)


def sigma22_hat(
    ds: CaseControlDataset, fit_both: LogisticFit, nm: NuisanceMatrices
) -> float:
    """Variance estimate for the scaled fixed-effect score."""
    w = _binomial_weights(fit_both, ds)
    c2 = ds.genotype_sums - _z(ds) @ np.linalg.solve(nm.s_x, nm.s_xy)
    return float(np.sum(w * c2 * c2) / ds.n)


def sigma11_matrix(
    ds: CaseControlDataset,
    fit_theta: LogisticFit,
    nm: NuisanceMatrices,
    alpha_grid,
) -> np.ndarray:
    """Full anchor-grid covariance matrix of the scaled random-effect scores.

    Entries are computed pairwise with the same kernel as
    :func:`sigma11_hat`, so the matrix is symmetric to the last bit.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    m = grid.size
    c1 = [_c1_values(ds, fit_theta, nm, a) for a in grid]
    out = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            val = float(np.sum(nm.u1_weights * c1[i] * c1[j]) / ds.n)
            out[i, j] = out[j, i] = val
    return out


def sigma_s(sigma11: np.ndarray) -> np.ndarray:
    """Correlation matrix of the standardized random-effect scores.

    Entries are clamped to [-1, 1].  Eigenvalues in ``(-1e-8, 0)`` are
    floored at zero and the matrix re-normalized to unit diagonal; a
    smaller eigenvalue raises, since it would indicate a real defect
    rather than roundoff.
    """
    mat, _ = _sigma_s_with_flag(sigma11)
    return mat


def _sigma_s_with_flag(sigma11: np.ndarray) -> tuple[np.ndarray, bool]:
    s11 = np.atleast_2d(np.asarray(sigma11, dtype=float))
    diag = np.diag(s11)
    if np.any(diag <= _DIAG_FLOOR):
        raise DegenerateStatisticError(
            "degenerate random-effect score variance on the anchor grid"
        )
    scale = 1.0 / np.sqrt(diag)
    corr = np.clip(s11 * scale[:, None] * scale[None, :], -1.0, 1.0)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    eigvals, eigvecs = np.linalg.eigh(corr)
    repaired = False
    if eigvals[0] < 0.0:
        if eigvals[0] <= -_PSD_SLACK:
            raise NumericError(
                f"anchor-score correlation matrix has eigenvalue {eigvals[0]:.3e}"
            )
        rebuilt = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        d = np.sqrt(np.diag(rebuilt))
        corr = np.clip(rebuilt / np.outer(d, d), -1.0, 1.0)
        np.fill_diagonal(corr, 1.0)
        repaired = True
    return corr, repaired


def variance_bundle(
    ds: CaseControlDataset,
    fit_theta: LogisticFit,
    fit_both: LogisticFit,
    alpha_grid,
    *,
    u1_weight_source: U1WeightSource = "null_theta",
) -> VarianceBundle:
    """Assemble all variance estimates for an anchor grid."""
    grid = np.asarray(alpha_grid, dtype=float)
    nm = nuisance_matrices(
        ds, fit_theta, fit_both, grid, u1_weight_source=u1_weight_source
    )
    s11 = sigma11_matrix(ds, fit_theta, nm, grid)
    eigs = np.linalg.eigvalsh(s11)
    if eigs[0] < -_PSD_SLACK * max(1.0, float(eigs[-1])):
        raise NumericError("sigma11 estimate is not positive semidefinite")
    s22 = sigma22_hat(ds, fit_both, nm)
    if s22 < 0.0:
        if s22 < -_DIAG_FLOOR:
            raise NumericError("sigma22 estimate is negative")
        s22 = 0.0
    corr, _ = _sigma_s_with_flag(s11)
    return VarianceBundle(sigma11=s11, sigma22=s22, sigma_s=corr)
