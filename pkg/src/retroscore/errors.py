"""Exception hierarchy.

``DataValidationError`` marks bad user input (shapes, values, files,
flags).  ``NumericError`` and its subclasses mark failures of the
numerical machinery on structurally valid input.  The CLI maps the two
branches to distinct exit codes.
"""

from __future__ import annotations


class RetroScoreError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(RetroScoreError):
    """Invalid input data or invalid invocation parameters."""


class NumericError(RetroScoreError):
    """A numerical procedure failed on structurally valid input."""


class FitError(NumericError):
    """Null-model maximization failed."""


class NonConvergenceError(FitError):
    """Newton iteration exhausted without meeting the gradient tolerance."""

    def __init__(self, message: str, max_gradient: float, iterations: int):
        super().__init__(message)
        self.max_gradient = max_gradient
        self.iterations = iterations


class SeparationError(FitError):
    """Coefficients diverged; the classes are (quasi-)separated."""


class RankDeficiencyError(FitError):
    """Design matrix is rank deficient."""


class DegenerateStatisticError(NumericError):
    """A score statistic or its variance estimate is degenerate."""
