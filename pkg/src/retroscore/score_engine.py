"""Score statistics for the random-effect and fixed aggregated genetic effects.

Two statistics are produced from the null fits.  ``u1`` targets the
random-effect variance: its residual factor always uses the fitted
intercept of the aggregated-genotype null model, while its weighting
factor ``1 - 2*pi`` is evaluated at an intercept anchor ``alpha_star``
that encodes what is known about the disease prevalence.  ``u2`` targets
the fixed aggregated effect and does not depend on any prevalence
information.  Anchoring ``alpha_star`` at the fitted intercept itself
recovers the statistic one would obtain by treating the sample as
prospectively collected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data_model import CaseControlDataset, LogisticFit, PrevalenceSpec
from .errors import DataValidationError, DegenerateStatisticError
from .logistic_mle import NewtonConfig, fit_null_both, fit_null_theta


@dataclass(frozen=True)
class ScoreBundle:
    """Scores evaluated over a grid of intercept anchors.

    ``u1[i]`` is the random-effect score at ``alpha_grid[i]``; ``u2`` is
    the fixed-effect score.  The two null fits are retained for the
    variance estimators downstream.
    """

    u1: np.ndarray
    u2: float
    alpha_grid: np.ndarray
    fit_theta: LogisticFit
    fit_both: LogisticFit


def d_g_d_theta(eta: float, yty: float) -> float:
    """Derivative of the marginal disease probability in the random-effect
    variance, at variance zero.

    Closed form ``(1 - 2*pi(eta)) * pi(eta) * (1 - pi(eta)) * yty`` for a
    subject with linear predictor ``eta`` and squared dosage norm ``yty``.
    Assumes random-effect components with variance 2, which makes the
    expression carry no extra factor.
    """
    if yty < 0:
        raise DataValidationError("yty must be nonnegative")
    pi = expit(eta)
    return float((1.0 - 2.0 * pi) * pi * (1.0 - pi) * yty)


def _require_kind(fit: LogisticFit, kind: str) -> None:
    if fit.design_kind != kind:
        raise DataValidationError(f"expected a {kind} fit, got {fit.design_kind}")
    if not fit.converged:
        raise DataValidationError("fit has not converged")


def score_u1(ds: CaseControlDataset, fit_theta: LogisticFit, alpha_star: float) -> float:
    """Random-effect score at intercept anchor ``alpha_star``.

    The residual factor uses the fitted intercept; only the ``1 - 2*pi``
    factor is moved to ``alpha_star``.  The fitted covariate and
    aggregated-genotype coefficients enter both factors.
    """
    _require_kind(fit_theta, "null_theta")
    resid = ds.d - expit(fit_theta.linear_predictor(ds))
    shifted = expit(fit_theta.linear_predictor(ds, intercept=alpha_star))
    return float(resid @ ((1.0 - 2.0 * shifted) * ds.genotype_sq_norms))


def score_u1_prospective(ds: CaseControlDataset, fit_theta: LogisticFit) -> float:
    """Random-effect score with the anchor at the fitted intercept."""
    return score_u1(ds, fit_theta, fit_theta.intercept)


def score_u2(ds: CaseControlDataset, fit_both: LogisticFit) -> float:
    """Fixed-effect score: covariate-null residuals against genotype sums."""
    _require_kind(fit_both, "null_both")
    resid = ds.d - expit(fit_both.linear_predictor(ds))
    return float(resid @ ds.genotype_sums)


def score_u2_prospective(ds: CaseControlDataset, fit_both: LogisticFit) -> float:
    """Fixed-effect score derived by treating the sample as prospective.

    The prospective derivation lands on the same plug-in statistic, so
    this is value-identical to :func:`score_u2`; both entry points exist
    so the identity can be asserted.
    """
    return score_u2(ds, fit_both)


def alpha_star_from_prevalence(
    spec: PrevalenceSpec, fit_theta: LogisticFit, ds: CaseControlDataset
) -> float:
    """Single intercept anchor implied by a point prevalence assumption."""
    if spec.kind == "known_alpha_p":
        return float(spec.alpha_p)  # type: ignore[arg-type]
    if spec.kind == "known_prevalence":
        p = float(spec.p)  # type: ignore[arg-type]
        return fit_theta.intercept - math.log(ds.n1 / ds.n0) + math.log(p / (1.0 - p))
    raise DataValidationError("interval prevalence has no single anchor; use a grid")


def score_bundle(
    ds: CaseControlDataset,
    prevalence: PrevalenceSpec,
    config: NewtonConfig | None = None,
    *,
    grid_literal: bool = False,
) -> ScoreBundle:
    """Fit both null models and evaluate the scores on the implied anchor grid.

    Point prevalence assumptions give a length-1 grid; an interval
    assumption gives the grid from :func:`retroscore.score_tests.alpha_grid`.
    """
    if not np.any(ds.genotype_sq_norms > 0.0):
        raise DegenerateStatisticError("all genotype rows are zero; u1 is degenerate")
    fit_theta = fit_null_theta(ds, config)
    fit_both = fit_null_both(ds, config)
    if prevalence.kind == "interval":
        from .score_tests import alpha_grid

        grid = alpha_grid(
            fit_theta, ds, prevalence.b1, prevalence.b2, prevalence.m, literal=grid_literal
        )
    else:
        grid = np.array([alpha_star_from_prevalence(prevalence, fit_theta, ds)])
    u1 = np.array([score_u1(ds, fit_theta, a) for a in grid])
    u2 = score_u2(ds, fit_both)
    return ScoreBundle(u1=u1, u2=u2, alpha_grid=grid, fit_theta=fit_theta, fit_both=fit_both)
