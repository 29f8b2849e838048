"""Assembled tests: p-value laws, additivity, anchor grids, max variants."""

from __future__ import annotations

import math

import numpy as np
import pytest

from retroscore import (
    DataValidationError,
    MvnConfig,
    PrevalenceSpec,
    ScoreBundle,
    VarianceBundle,
    alpha_grid,
    chi2_sf,
    evaluate_methods,
    fit_null_theta,
    fs_test,
    rs_max_test,
    rs_test,
    scenario_preset,
    generate_case_control,
    ss_max_test,
    ss_test,
    standardize,
)
from retroscore.errors import DegenerateStatisticError
from tests.conftest import random_dataset

MVN = MvnConfig(seed=99)

# Frozen standardized hand values for the six-row dataset with injected
# coefficients, at anchor -1.0 (same arithmetic as the score and variance
# hand checks).
U1S_HAND = 3.197833946886023
U2S_HAND = -1.2535885596169174

# Root of 0.5 chi2_1 + 0.5 chi2_2 tail = 0.05, found by bisection.
SS_MIXTURE_CRIT_5PCT = 5.138380785321452


@pytest.fixture(scope="module")
def null_ds():
    sc = scenario_preset("D1", 0)
    from dataclasses import replace

    return generate_case_control(replace(sc, n0=400, n1=400), np.random.default_rng(5))[0]


class TestStandardize:
    def test_zero_fixed_effect_score(self, six_row, six_row_fits):
        fit_theta, fit_both = six_row_fits
        scores = ScoreBundle(
            u1=np.array([1.0]),
            u2=0.0,
            alpha_grid=np.array([-1.0]),
            fit_theta=fit_theta,
            fit_both=fit_both,
        )
        vb = VarianceBundle(
            sigma11=np.array([[0.5]]), sigma22=0.3, sigma_s=np.array([[1.0]])
        )
        _, u2s = standardize(scores, vb, n=6)
        assert u2s == 0.0

    def test_unit_standardization_is_definitional(self, six_row, six_row_fits):
        fit_theta, fit_both = six_row_fits
        n, s11 = 6, 0.37
        scores = ScoreBundle(
            u1=np.array([math.sqrt(n * s11)]),
            u2=1.0,
            alpha_grid=np.array([-1.0]),
            fit_theta=fit_theta,
            fit_both=fit_both,
        )
        vb = VarianceBundle(
            sigma11=np.array([[s11]]), sigma22=1.0, sigma_s=np.array([[1.0]])
        )
        u1s, _ = standardize(scores, vb, n=n)
        assert u1s[0] == pytest.approx(1.0, abs=1e-12)

    def test_six_row_hand_values(self, six_row, six_row_fits):
        fit_theta, fit_both = six_row_fits
        scores = ScoreBundle(
            u1=np.array([1.90597302616756]),
            u2=-1.6556654465534626,
            alpha_grid=np.array([-1.0]),
            fit_theta=fit_theta,
            fit_both=fit_both,
        )
        vb = VarianceBundle(
            sigma11=np.array([[0.05920664237436379]]),
            sigma22=0.29072600464159054,
            sigma_s=np.array([[1.0]]),
        )
        u1s, u2s = standardize(scores, vb, n=6)
        assert u1s[0] == pytest.approx(U1S_HAND, abs=1e-12)
        assert u2s == pytest.approx(U2S_HAND, abs=1e-12)

    def test_zero_variance_rejected(self, six_row, six_row_fits):
        fit_theta, fit_both = six_row_fits
        scores = ScoreBundle(
            u1=np.array([1.0]),
            u2=1.0,
            alpha_grid=np.array([-1.0]),
            fit_theta=fit_theta,
            fit_both=fit_both,
        )
        vb = VarianceBundle(
            sigma11=np.array([[0.0]]), sigma22=1.0, sigma_s=np.array([[1.0]])
        )
        with pytest.raises(DegenerateStatisticError):
            standardize(scores, vb, n=6)


class TestAlphaGrid:
    def test_default_offsets_span_interval(self, null_ds):
        fit = fit_null_theta(null_ds)
        grid = alpha_grid(fit, null_ds, -10.0, -0.5, 4)
        base = fit.intercept - math.log(null_ds.n1 / null_ds.n0)
        offsets = grid - base
        expected = [-10.0 + i * (9.5 / 3.0) for i in range(4)]
        assert np.abs(offsets - expected).max() < 1e-12
        assert offsets[0] == -10.0
        assert offsets[-1] == pytest.approx(-0.5, abs=1e-12)

    def test_literal_variant_drops_lower_offset(self, null_ds):
        fit = fit_null_theta(null_ds)
        grid = alpha_grid(fit, null_ds, -10.0, -0.5, 4, literal=True)
        base = fit.intercept - math.log(null_ds.n1 / null_ds.n0)
        assert grid[0] == pytest.approx(base, abs=1e-12)
        assert grid[-1] == pytest.approx(base + 9.5, abs=1e-12)

    def test_degenerate_interval_constant_grid(self, null_ds):
        fit = fit_null_theta(null_ds)
        grid = alpha_grid(fit, null_ds, -2.0, -2.0, 3)
        assert np.ptp(grid) == 0.0

    def test_balanced_quota_base_is_fitted_intercept(self, null_ds):
        fit = fit_null_theta(null_ds)
        grid = alpha_grid(fit, null_ds, -1.0, -0.5, 2)
        assert grid[0] == pytest.approx(fit.intercept - 1.0, abs=1e-12)

    def test_small_grid_rules(self, null_ds):
        fit = fit_null_theta(null_ds)
        with pytest.raises(DataValidationError):
            alpha_grid(fit, null_ds, -2.0, -1.0, 1)
        single = alpha_grid(fit, null_ds, -2.0, -2.0, 1)
        assert single.shape == (1,)


class TestBasicTests:
    def test_mirror_dataset_all_p_one(self, mirror):
        assert fs_test(mirror).p_value == 1.0
        assert rs_test(mirror, -1.0).p_value == 1.0
        assert ss_test(mirror, -1.0).p_value == 1.0

    def test_fs_p_law(self, null_ds):
        res = fs_test(null_ds)
        assert res.p_value == chi2_sf(res.statistic, 1)
        assert res.statistic == pytest.approx(res.u2_standardized**2)

    def test_rs_one_sided_truncation(self, null_ds):
        res = rs_test(null_ds, -2.0)
        u1s = res.u1_standardized[0]
        if u1s <= 0:
            assert res.statistic == 0.0 and res.p_value == 1.0
        else:
            assert res.statistic == u1s**2
            assert res.p_value == 0.5 * chi2_sf(res.statistic, 1)

    def test_rs_fitted_anchor(self, null_ds):
        res = rs_test(null_ds, "fitted")
        fit = fit_null_theta(null_ds)
        assert res.alpha_grid[0] == fit.intercept

    def test_ss_additivity_exact(self, null_ds):
        for anchor in (-2.0, "fitted"):
            rs = rs_test(null_ds, anchor)
            fs = fs_test(null_ds)
            ss = ss_test(null_ds, anchor)
            assert ss.statistic == rs.statistic + fs.statistic

    def test_ss_mixture_law(self, null_ds):
        res = ss_test(null_ds, -2.0)
        t = res.statistic
        assert res.p_value == 0.5 * chi2_sf(t, 1) + 0.5 * chi2_sf(t, 2)

    def test_ss_mixture_critical_value(self):
        # Bisection root of the mixture tail at 5%, frozen above.
        p = 0.5 * chi2_sf(SS_MIXTURE_CRIT_5PCT, 1) + 0.5 * chi2_sf(SS_MIXTURE_CRIT_5PCT, 2)
        assert p == pytest.approx(0.05, abs=1e-9)

    def test_p_values_within_unit_interval(self):
        rng = np.random.default_rng(4)
        for trial in range(3):
            ds = random_dataset(rng, n0=80, n1=80)
            for res in (fs_test(ds), rs_test(ds, -1.0), ss_test(ds, "fitted")):
                assert 0.0 <= res.p_value <= 1.0
                assert res.statistic >= 0.0


class TestMaxTests:
    def test_mirror_dataset_rs_max(self, mirror):
        res = rs_max_test(mirror, mvn=MVN)
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_single_point_interval_reduces_to_rs(self, null_ds):
        spec = PrevalenceSpec.interval_of(-2.5, -2.5, 1)
        fit = fit_null_theta(null_ds)
        anchor = float(alpha_grid(fit, null_ds, -2.5, -2.5, 1)[0])
        res_max = rs_max_test(null_ds, spec, mvn=MVN)
        res_rs = rs_test(null_ds, anchor)
        assert res_max.statistic == pytest.approx(res_rs.statistic, abs=1e-12)
        assert res_max.p_value == pytest.approx(res_rs.p_value, abs=2e-5)

    def test_single_point_interval_reduces_to_ss(self, null_ds):
        spec = PrevalenceSpec.interval_of(-2.5, -2.5, 1)
        fit = fit_null_theta(null_ds)
        anchor = float(alpha_grid(fit, null_ds, -2.5, -2.5, 1)[0])
        res_max = ss_max_test(null_ds, spec, mvn=MVN)
        res_ss = ss_test(null_ds, anchor)
        assert res_max.statistic == pytest.approx(res_ss.statistic, abs=1e-12)
        assert res_max.p_value == pytest.approx(res_ss.p_value, abs=5e-4)

    def test_max_statistic_dominates_members(self, null_ds):
        res = rs_max_test(null_ds, mvn=MVN)
        members = np.maximum(res.u1_standardized, 0.0) ** 2
        assert res.statistic == members.max()
        assert res.alpha_grid.shape == (4,)

    def test_ss_max_adds_fixed_part(self, null_ds):
        rs = rs_max_test(null_ds, mvn=MVN)
        ss = ss_max_test(null_ds, mvn=MVN)
        assert ss.statistic == pytest.approx(
            rs.statistic + rs.u2_standardized**2, abs=1e-12
        )

    def test_interval_required(self, null_ds):
        with pytest.raises(DataValidationError):
            rs_max_test(null_ds, PrevalenceSpec.known_alpha(-1.0), mvn=MVN)


class TestEvaluateMethods:
    def test_shares_results_with_individual_tests(self, null_ds):
        results, errors = evaluate_methods(
            null_ds,
            ["fs", "rs-alpha-p", "ss-alpha-p", "rs-alpha-hat", "rs-max"],
            alpha_p=-2.0,
            mvn=MVN,
        )
        assert not errors
        assert results["fs"].statistic == fs_test(null_ds).statistic
        assert results["rs-alpha-p"].statistic == rs_test(null_ds, -2.0).statistic
        assert results["ss-alpha-p"].statistic == ss_test(null_ds, -2.0).statistic
        assert results["rs-alpha-hat"].statistic == rs_test(null_ds, "fitted").statistic
        assert results["rs-max"].statistic == rs_max_test(null_ds, mvn=MVN).statistic

    def test_alpha_p_required_when_anchored(self, null_ds):
        with pytest.raises(DataValidationError):
            evaluate_methods(null_ds, ["rs-alpha-p"])

    def test_unknown_method_rejected(self, null_ds):
        with pytest.raises(DataValidationError):
            evaluate_methods(null_ds, ["mystery"])

    def test_prospective_anchor_matches_retrospective_when_matched(self):
        # Balanced quotas with prevalence one half: the fitted anchor
        # estimates the population intercept, so the two statistics agree
        # on average.
        sc = scenario_preset("C1", 0)
        from dataclasses import replace

        matched = replace(
            sc, alpha_p=0.0, beta=np.array([0.0, 0.0]), n0=250, n1=250
        )
        rng_root = np.random.SeedSequence(77).spawn(500)
        diffs = []
        for i in range(500):
            ds, _ = generate_case_control(matched, np.random.default_rng(rng_root[i]))
            results, _ = evaluate_methods(
                ds, ["rs-alpha-p", "rs-alpha-hat"], alpha_p=0.0
            )
            diffs.append(
                results["rs-alpha-p"].statistic - results["rs-alpha-hat"].statistic
            )
        assert abs(float(np.mean(diffs))) < 0.05
