"""Numeric kernels: chi-square tails, rectangle probabilities, tail integrals.

Oracles: an independent erfc identity for the chi-square tail, closed
forms for products and the bivariate orthant, scipy's own (independent)
rectangle-probability implementation, and a frozen 10^7-draw Monte Carlo
estimate for the combined-statistic tail.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from retroscore import (
    MvnConfig,
    MvnResult,
    NumericError,
    chi2_sf,
    mvn_cdf,
    rsmax_sf,
    ssmax_sf,
)

CFG = MvnConfig(seed=42)

# Bivariate orthant probability at correlation one half:
# 1/4 + arcsin(1/2) / (2 pi) = 1/4 + 1/12.
BVN_HALF = 1.0 / 3.0

# Frozen Monte Carlo oracle for the combined-statistic tail at t = 8 with
# four 0.9-equicorrelated components: 10^7 draws of z0^2 + max(z_i^+)^2,
# generator seed 20260810.
MC_SSMAX_P = 0.0176834
MC_SSMAX_SE = 4.167816858313234e-05


def equicorr(m: int, rho: float) -> np.ndarray:
    c = np.full((m, m), rho)
    np.fill_diagonal(c, 1.0)
    return c


class TestChi2Sf:
    def test_at_zero(self):
        assert chi2_sf(0.0, 1) == 1.0
        assert chi2_sf(0.0, 2) == 1.0

    def test_one_df_against_erfc_oracle(self):
        # Independent oracle: P(chi2_1 > t) = erfc(sqrt(t / 2)).
        for t in (0.5, 1.0, 3.841459, 10.0):
            assert chi2_sf(t, 1) == pytest.approx(math.erfc(math.sqrt(t / 2)), abs=1e-12)
        assert chi2_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-5)

    def test_two_df_closed_form(self):
        # The 5% critical value is -2 ln(0.05); its six-decimal rounding
        # 5.991465 would already move the tail by ~1e-8.
        assert chi2_sf(-2.0 * math.log(0.05), 2) == pytest.approx(0.05, abs=1e-9)
        assert chi2_sf(5.991465, 2) == pytest.approx(0.05, abs=2e-8)
        assert chi2_sf(7.0, 2) == math.exp(-3.5)

    def test_unsupported_df(self):
        with pytest.raises(ValueError):
            chi2_sf(1.0, 3)

    def test_negative_argument(self):
        with pytest.raises(ValueError):
            chi2_sf(-0.1, 1)

    def test_monotone_nonincreasing(self):
        ts = np.linspace(0, 20, 50)
        for k in (1, 2):
            vals = [chi2_sf(t, k) for t in ts]
            assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestMvnCdf:
    def test_univariate_median(self):
        res = mvn_cdf([0.0], [[1.0]], CFG)
        assert res == MvnResult(prob=0.5, abs_error_estimate=0.0)

    def test_identity_three_dims(self):
        res = mvn_cdf([0.0, 0.0, 0.0], np.eye(3), CFG)
        assert res.prob == pytest.approx(0.125, abs=2e-5)

    def test_identity_product_up_to_five_dims(self):
        from scipy.special import ndtr

        rng = np.random.default_rng(1)
        for m in (2, 3, 4, 5):
            u = rng.normal(size=m)
            res = mvn_cdf(u, np.eye(m), CFG)
            assert res.prob == pytest.approx(float(np.prod(ndtr(u))), abs=2e-5)

    def test_bivariate_arcsin_closed_form(self):
        res = mvn_cdf([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], CFG)
        assert res.prob == pytest.approx(BVN_HALF, abs=2e-5)

    def test_against_scipy_random_problems(self):
        rng = np.random.default_rng(3)
        for trial in range(8):
            m = int(rng.integers(2, 6))
            a = rng.normal(size=(m, m + 3))
            c = a @ a.T
            d = np.sqrt(np.diag(c))
            c = c / np.outer(d, d)
            u = rng.normal(size=m)
            mine = mvn_cdf(u, c, MvnConfig(seed=trial)).prob
            ref = multivariate_normal(mean=np.zeros(m), cov=c, allow_singular=True).cdf(u)
            assert mine == pytest.approx(float(ref), abs=5e-5)

    def test_monotone_in_each_bound(self):
        rng = np.random.default_rng(7)
        c = equicorr(3, 0.4)
        for trial in range(6):
            u = rng.normal(size=3)
            base = mvn_cdf(u, c, MvnConfig(seed=trial))
            i = int(rng.integers(0, 3))
            up = u.copy()
            up[i] += float(rng.uniform(0.1, 1.0))
            larger = mvn_cdf(up, c, MvnConfig(seed=trial))
            slack = base.abs_error_estimate + larger.abs_error_estimate + 1e-6
            assert larger.prob >= base.prob - slack

    def test_seed_reproducibility_bitwise(self):
        c = equicorr(3, 0.6)
        u = [1.0, 0.5, 0.2]
        a = mvn_cdf(u, c, MvnConfig(seed=123))
        b = mvn_cdf(u, c, MvnConfig(seed=123))
        assert a == b

    def test_huge_bounds_resolved_exactly(self):
        assert mvn_cdf([-9.0, 0.0], np.eye(2), CFG).prob == 0.0
        res = mvn_cdf([9.0, 0.0], np.eye(2), CFG)
        assert res == MvnResult(prob=0.5, abs_error_estimate=0.0)

    def test_singular_rank_one_matrix(self):
        from scipy.special import ndtr

        res = mvn_cdf([1.0] * 4, np.ones((4, 4)), CFG)
        assert res.prob == pytest.approx(float(ndtr(1.0)), abs=1e-12)

    def test_invalid_correlation_rejected(self):
        with pytest.raises(NumericError):
            mvn_cdf([0.0, 0.0], [[1.0, 0.2], [0.3, 1.0]], CFG)
        with pytest.raises(NumericError):
            mvn_cdf([0.0, 0.0], [[1.0, 1.2], [1.2, 1.0]], CFG)
        with pytest.raises(NumericError):
            mvn_cdf([0.0], [[2.0]], CFG)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(NumericError):
            mvn_cdf([0.0, 0.0, 0.0], np.eye(2), CFG)

    def test_error_estimate_meets_default_target(self):
        res = mvn_cdf([0.5, -0.2, 1.0], equicorr(3, 0.5), CFG)
        assert res.abs_error_estimate <= MvnConfig().target_abs_error


class TestRsMaxSf:
    def test_at_zero(self):
        assert rsmax_sf(0.0, equicorr(4, 0.5), CFG) == 1.0

    def test_univariate_reduction(self):
        t = 3.841459
        assert rsmax_sf(t, [[1.0]], CFG) == pytest.approx(0.5 * chi2_sf(t, 1), abs=1e-10)

    def test_two_independent_components(self):
        t = 3.841459
        assert rsmax_sf(t, np.eye(2), CFG) == pytest.approx(1 - (1 - 0.025) ** 2, abs=5e-5)

    def test_nonincreasing_in_t(self):
        c = equicorr(4, 0.6)
        vals = [rsmax_sf(t, c, CFG) for t in np.linspace(0.0, 12.0, 13)]
        assert all(v1 >= v2 - 2e-5 for v1, v2 in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_negative_t_rejected(self):
        with pytest.raises(ValueError):
            rsmax_sf(-1.0, np.eye(2), CFG)


class TestSsMaxSf:
    def test_at_zero(self):
        assert ssmax_sf(0.0, equicorr(4, 0.5), CFG) == 1.0

    def test_univariate_mixture_reduction(self):
        for t in (1.0, 3.841459, 8.0):
            mixture = 0.5 * chi2_sf(t, 1) + 0.5 * chi2_sf(t, 2)
            assert ssmax_sf(t, [[1.0]], CFG) == pytest.approx(mixture, abs=5e-4)

    def test_matches_monte_carlo_oracle(self):
        got = ssmax_sf(8.0, equicorr(4, 0.9), CFG)
        assert abs(got - MC_SSMAX_P) <= 3.0 * MC_SSMAX_SE

    def test_nonincreasing_in_t(self):
        c = equicorr(4, 0.6)
        vals = [ssmax_sf(t, c, CFG) for t in np.linspace(0.0, 12.0, 13)]
        assert all(v1 >= v2 - 2e-4 for v1, v2 in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_quad_nodes_validated(self):
        with pytest.raises(ValueError):
            ssmax_sf(1.0, np.eye(2), CFG, quad_nodes=1)


class TestMvnConfig:
    def test_invariants(self):
        with pytest.raises(Exception):
            MvnConfig(target_abs_error=0.0)
        with pytest.raises(Exception):
            MvnConfig(randomizations=1)
