"""Core data types shared by all modules.

``CaseControlDataset`` holds a validated case-control sample,
``PrevalenceSpec`` describes what is assumed known about the disease
prevalence, and ``LogisticFit`` records a fitted null model.  All three
are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Optional

import numpy as np

from .errors import DataValidationError

DesignKind = Literal["null_both", "null_theta"]


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class CaseControlDataset:
    """Validated case-control sample.

    Rows keep their input order; controls and cases may be interleaved.
    Genotypes are stored as real dosages so imputed values are accepted.
    Construct through :func:`validate_dataset`.
    """

    d: np.ndarray  # (n,) disease indicators, 0 control / 1 case
    x: np.ndarray  # (n, d_x) covariates, d_x may be 0
    y: np.ndarray  # (n, q) genotype dosages, q >= 1
    n0: int
    n1: int

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @cached_property
    def genotype_sums(self) -> np.ndarray:
        """Per-subject aggregated dosage, one value per row of ``y``."""
        return _frozen_array(self.y.sum(axis=1))

    @cached_property
    def genotype_sq_norms(self) -> np.ndarray:
        """Per-subject squared euclidean norm of the dosage vector."""
        return _frozen_array((self.y * self.y).sum(axis=1))


def validate_dataset(d, x=None, y=None) -> CaseControlDataset:
    """Validate raw arrays (or revalidate a dataset) into a :class:`CaseControlDataset`.

    ``d`` may also be an existing :class:`CaseControlDataset`, in which
    case an identical dataset is rebuilt (the operation is idempotent).

    Raises
    ------
    DataValidationError
        On dimension mismatch, non-finite values, missing genotype
        columns, or samples containing no cases or no controls.
    """
    if isinstance(d, CaseControlDataset):
        if x is not None or y is not None:
            raise DataValidationError("pass either a dataset or raw arrays, not both")
        d, x, y = d.d, d.x, d.y
    if y is None:
        raise DataValidationError("genotype matrix y is required")

    d_arr = np.asarray(d, dtype=float)
    if d_arr.ndim != 1:
        raise DataValidationError(f"d must be one-dimensional, got shape {d_arr.shape}")
    n = d_arr.shape[0]
    if n == 0:
        raise DataValidationError("empty dataset")
    if not np.isfinite(d_arr).all():
        raise DataValidationError("non-finite values in d")
    if not np.isin(d_arr, (0.0, 1.0)).all():
        raise DataValidationError("d must contain only 0 (control) and 1 (case)")

    x_arr = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float)
    if x_arr.ndim == 1:
        x_arr = x_arr.reshape(-1, 1)
    if x_arr.ndim != 2 or x_arr.shape[0] != n:
        raise DataValidationError(
            f"dimension mismatch: d has {n} rows, x has shape {x_arr.shape}"
        )
    if x_arr.size and not np.isfinite(x_arr).all():
        raise DataValidationError("non-finite values in x")

    y_arr = np.asarray(y, dtype=float)
    if y_arr.ndim == 1:
        y_arr = y_arr.reshape(-1, 1)
    if y_arr.ndim != 2 or y_arr.shape[0] != n:
        raise DataValidationError(
            f"dimension mismatch: d has {n} rows, y has shape {y_arr.shape}"
        )
    if y_arr.shape[1] == 0:
        raise DataValidationError("no genotype columns (q = 0)")
    if not np.isfinite(y_arr).all():
        raise DataValidationError("non-finite values in y")
    if (y_arr < 0).any():
        raise DataValidationError("genotype dosages must be nonnegative")

    n1 = int(round(d_arr.sum()))
    n0 = n - n1
    if n1 == 0:
        raise DataValidationError("no cases in dataset")
    if n0 == 0:
        raise DataValidationError("no controls in dataset")

    return CaseControlDataset(
        d=_frozen_array(d_arr, dtype=np.int64),
        x=_frozen_array(x_arr),
        y=_frozen_array(y_arr),
        n0=n0,
        n1=n1,
    )


@dataclass(frozen=True)
class PrevalenceSpec:
    """What is assumed known about the disease prevalence.

    Exactly one variant is active:

    * ``known_alpha_p``: the population log-odds intercept is given;
    * ``known_prevalence``: the prevalence ``p`` itself is given;
    * ``interval``: only an interval ``[b1, b2]`` for the log odds
      ``log(p / (1 - p))`` is given, scanned on a grid of size ``m``.
    """

    kind: Literal["known_alpha_p", "known_prevalence", "interval"]
    alpha_p: Optional[float] = None
    p: Optional[float] = None
    b1: Optional[float] = None
    b2: Optional[float] = None
    m: int = 1

    def __post_init__(self):
        if self.kind == "known_alpha_p":
            if self.alpha_p is None or not math.isfinite(self.alpha_p):
                raise DataValidationError("known_alpha_p requires a finite alpha_p")
        elif self.kind == "known_prevalence":
            if self.p is None or not (0.0 < self.p < 1.0):
                raise DataValidationError("known_prevalence requires p in (0, 1)")
        elif self.kind == "interval":
            if self.b1 is None or self.b2 is None:
                raise DataValidationError("interval requires b1 and b2")
            if not (math.isfinite(self.b1) and math.isfinite(self.b2)):
                raise DataValidationError("interval endpoints must be finite")
            if self.b1 > self.b2:
                raise DataValidationError("interval requires b1 <= b2")
            if self.m < 1:
                raise DataValidationError("grid size m must be >= 1")
            if self.b1 < self.b2 and self.m < 2:
                raise DataValidationError("a non-degenerate interval requires m >= 2")
        else:
            raise DataValidationError(f"unknown prevalence kind {self.kind!r}")

    @classmethod
    def known_alpha(cls, alpha_p: float) -> "PrevalenceSpec":
        return cls(kind="known_alpha_p", alpha_p=float(alpha_p))

    @classmethod
    def known_prevalence_of(cls, p: float) -> "PrevalenceSpec":
        return cls(kind="known_prevalence", p=float(p))

    @classmethod
    def interval_of(cls, b1: float, b2: float, m: int = 4) -> "PrevalenceSpec":
        return cls(kind="interval", b1=float(b1), b2=float(b2), m=int(m))


@dataclass(frozen=True)
class LogisticFit:
    """Coefficients and diagnostics of a fitted null logistic model.

    ``design_kind`` records which null design produced the fit:
    ``null_both`` is (intercept, covariates), ``null_theta`` additionally
    includes the per-subject genotype sum as the last column, whose
    coefficient is exposed as :attr:`gamma`.
    """

    coefficients: np.ndarray
    design_kind: DesignKind
    converged: bool
    iterations: int
    max_gradient: float
    fitted_probs: np.ndarray

    def __post_init__(self):
        coef = _frozen_array(self.coefficients)
        probs = _frozen_array(self.fitted_probs)
        if coef.ndim != 1 or coef.size < 1:
            raise DataValidationError("coefficients must be a nonempty vector")
        if probs.ndim != 1:
            raise DataValidationError("fitted_probs must be a vector")
        if probs.size and not ((probs > 0.0) & (probs < 1.0)).all():
            raise DataValidationError("fitted probabilities must lie strictly in (0, 1)")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "fitted_probs", probs)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def gamma(self) -> float:
        """Aggregated-genotype coefficient (``null_theta`` fits only)."""
        if self.design_kind != "null_theta":
            raise DataValidationError("gamma is only defined for null_theta fits")
        return float(self.coefficients[-1])

    def covariate_coefficients(self, ds: CaseControlDataset) -> np.ndarray:
        return self.coefficients[1 : 1 + ds.d_x]

    def linear_predictor(
        self, ds: CaseControlDataset, intercept: Optional[float] = None
    ) -> np.ndarray:
        """Linear predictor on ``ds``, optionally with the intercept replaced.

        Covariate and genotype-sum coefficients always stay at their
        fitted values; only the leading intercept may be overridden.
        """
        expected = 1 + ds.d_x + (1 if self.design_kind == "null_theta" else 0)
        if self.coefficients.size != expected:
            raise DataValidationError(
                f"fit has {self.coefficients.size} coefficients but the "
                f"{self.design_kind} design on this dataset needs {expected}"
            )
        a = self.intercept if intercept is None else float(intercept)
        eta = np.full(ds.n, a)
        if ds.d_x:
            eta = eta + ds.x @ self.coefficients[1 : 1 + ds.d_x]
        if self.design_kind == "null_theta":
            eta = eta + self.coefficients[-1] * ds.genotype_sums
        return eta
