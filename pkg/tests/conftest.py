"""Shared fixtures: hand datasets, injected fits, and the acceptance report."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.special import expit

from retroscore import LogisticFit, validate_dataset


@pytest.fixture
def six_row():
    """Fixed six-row dataset used by every hand-arithmetic check."""
    d = [0, 1, 0, 1, 0, 1]
    x = [[0.5], [-1.0], [2.0], [0.0], [1.5], [-0.5]]
    y = [[0, 1], [2, 0], [1, 1], [0, 0], [2, 2], [1, 0]]
    return validate_dataset(d, x, y)


def inject_fit(ds, coefficients, design_kind) -> LogisticFit:
    """Build a fit record with chosen coefficients (no optimization)."""
    coefficients = np.asarray(coefficients, dtype=float)
    eta = np.full(ds.n, coefficients[0])
    if ds.d_x:
        eta = eta + ds.x @ coefficients[1 : 1 + ds.d_x]
    if design_kind == "null_theta":
        eta = eta + coefficients[-1] * ds.genotype_sums
    return LogisticFit(
        coefficients=coefficients,
        design_kind=design_kind,
        converged=True,
        iterations=0,
        max_gradient=0.0,
        fitted_probs=expit(eta),
    )


@pytest.fixture
def six_row_fits(six_row):
    """Injected null fits for the six-row dataset: hand arithmetic is done
    at these fixed coefficients, not at fitted ones."""
    fit_theta = inject_fit(six_row, [-0.2, 0.4, 0.15], "null_theta")
    fit_both = inject_fit(six_row, [0.1, -0.3], "null_both")
    return fit_theta, fit_both


@pytest.fixture
def mirror():
    """Every (x, y) row appears once as a case and once as a control, so all
    null fits are exactly zero and every score vanishes."""
    base_x = [[0.3], [-1.2], [0.8], [2.0]]
    base_y = [[0, 1], [2, 1], [1, 0], [2, 2]]
    d = [0, 1] * 4
    x = [row for row in base_x for _ in (0, 1)]
    y = [row for row in base_y for _ in (0, 1)]
    return validate_dataset(d, x, y)


def random_dataset(rng, n0=60, n1=60, d_x=2, q=3):
    """Small random dataset with both classes, for property tests."""
    n = n0 + n1
    d = np.concatenate([np.zeros(n0), np.ones(n1)])
    rng.shuffle(d)
    x = rng.normal(size=(n, d_x))
    y = rng.binomial(2, 0.3, size=(n, q)).astype(float)
    y[0, 0] = max(y[0, 0], 1.0)  # guard against an all-zero genotype matrix
    return validate_dataset(d, x, y)


# ----------------------------------------------------------------------
# Acceptance reporting: one visible PASS/FAIL line per criterion.
# ----------------------------------------------------------------------

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    _ACCEPTANCE_LINES.append(
        f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
