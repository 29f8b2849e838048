"""Null-model logistic maximum likelihood.

Fits the two null designs every score statistic plugs into: the
covariate-only design (intercept, x) and the aggregated-genotype design
(intercept, x, genotype sum).  Newton-Raphson with step halving is used
throughout; the log-likelihood is concave, so on non-separated data the
iteration is globally convergent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data_model import CaseControlDataset, LogisticFit
from .errors import (
    DataValidationError,
    NonConvergenceError,
    NumericError,
    RankDeficiencyError,
    SeparationError,
)


@dataclass(frozen=True)
class NewtonConfig:
    """Newton-Raphson controls.

    ``grad_tol`` bounds the max-norm of the score vector at convergence,
    ``coef_cap`` is the coefficient-norm bound beyond which the data are
    declared separated.
    """

    grad_tol: float = 1e-10
    max_iter: int = 50
    step_halving_max: int = 30
    coef_cap: float = 1e3

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise DataValidationError("grad_tol must be positive")
        if self.max_iter < 1:
            raise DataValidationError("max_iter must be >= 1")


def _log_likelihood(design: np.ndarray, d: np.ndarray, coef: np.ndarray) -> float:
    eta = design @ coef
    return float(d @ eta - np.logaddexp(0.0, eta).sum())


def fit_logistic(
    design,
    d,
    config: NewtonConfig | None = None,
    *,
    design_kind: str = "null_both",
) -> LogisticFit:
    """Maximize the binary log-likelihood over a design with a leading ones column.

    The returned coefficients satisfy the score equations
    ``sum_i (d_i - pi_i) design_ij = 0`` to within ``config.grad_tol``
    in max-norm.

    Raises
    ------
    RankDeficiencyError
        If the design is not of full column rank.
    SeparationError
        If the coefficient norm exceeds ``config.coef_cap``.
    NonConvergenceError
        If the tolerance is not met within ``config.max_iter`` updates.
    """
    cfg = config or NewtonConfig()
    X = np.asarray(design, dtype=float)
    dvec = np.asarray(d, dtype=float)
    if X.ndim != 2:
        raise DataValidationError("design must be a matrix")
    n, k = X.shape
    if dvec.shape != (n,):
        raise DataValidationError("response length does not match design rows")
    if not np.isfinite(X).all() or not np.isfinite(dvec).all():
        raise DataValidationError("non-finite values in design or response")
    if not np.all(X[:, 0] == 1.0):
        raise DataValidationError("design must have a leading all-ones column")
    n1 = int(round(dvec.sum()))
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise DataValidationError("response must contain both classes")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficiencyError("design matrix is rank deficient")

    coef = np.zeros(k)
    coef[0] = math.log(n1 / n0)  # exact maximizer of the intercept-only model
    ll = _log_likelihood(X, dvec, coef)

    iterations = 0
    for _ in range(cfg.max_iter):
        pi = expit(X @ coef)
        grad = X.T @ (dvec - pi)
        max_grad = float(np.abs(grad).max())
        if max_grad <= cfg.grad_tol:
            return _finish(X, dvec, coef, design_kind, iterations, max_grad)
        weights = pi * (1.0 - pi)
        hess = X.T @ (X * weights[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular information matrix during Newton step") from exc

        scale = 1.0
        accepted = False
        for _ in range(cfg.step_halving_max + 1):
            candidate = coef + scale * step
            ll_new = _log_likelihood(X, dvec, candidate)
            if ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "step halving exhausted without likelihood improvement",
                max_gradient=max_grad,
                iterations=iterations,
            )
        coef = candidate
        ll = ll_new
        iterations += 1
        if float(np.abs(coef).max()) > cfg.coef_cap:
            raise SeparationError(
                f"coefficient norm exceeded {cfg.coef_cap:g}; data appear separated"
            )

    pi = expit(X @ coef)
    max_grad = float(np.abs(X.T @ (dvec - pi)).max())
    if max_grad <= cfg.grad_tol:
        return _finish(X, dvec, coef, design_kind, iterations, max_grad)
    raise NonConvergenceError(
        f"no convergence after {cfg.max_iter} iterations "
        f"(last max-gradient {max_grad:.3e})",
        max_gradient=max_grad,
        iterations=iterations,
    )


def _finish(X, dvec, coef, design_kind, iterations, max_grad) -> LogisticFit:
    probs = expit(X @ coef)
    if not ((probs > 0.0) & (probs < 1.0)).all():
        raise SeparationError("fitted probabilities saturated at 0 or 1")
    return LogisticFit(
        coefficients=coef,
        design_kind=design_kind,  # type: ignore[arg-type]
        converged=True,
        iterations=iterations,
        max_gradient=max_grad,
        fitted_probs=probs,
    )


def fit_null_both(ds: CaseControlDataset, config: NewtonConfig | None = None) -> LogisticFit:
    """Fit the covariate-only null design (intercept, x)."""
    design = np.hstack([np.ones((ds.n, 1)), ds.x])
    return fit_logistic(design, ds.d, config, design_kind="null_both")


def fit_null_theta(ds: CaseControlDataset, config: NewtonConfig | None = None) -> LogisticFit:
    """Fit the aggregated-genotype null design (intercept, x, genotype sum)."""
    design = np.hstack([np.ones((ds.n, 1)), ds.x, ds.genotype_sums[:, None]])
    return fit_logistic(design, ds.d, config, design_kind="null_theta")


def case_control_weights(
    fit: LogisticFit, ds: CaseControlDataset
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical distribution weights for controls and cases.

    Control weight ``(1 - pi_i) / n0`` and case weight ``pi_i / n1``; each
    vector sums to one as a consequence of the intercept score equation.
    """
    if not fit.converged:
        raise DataValidationError("weights require a converged fit")
    pi = expit(fit.linear_predictor(ds))
    return (1.0 - pi) / ds.n0, pi / ds.n1
