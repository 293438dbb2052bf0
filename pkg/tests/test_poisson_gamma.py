import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from dpcounts.core import CountDataset, PriorSpec, RngStream, sample_gamma
from dpcounts.dirichlet_mult import calibrate_md, md_log_pmf
from dpcounts.errors import DomainError, InfeasibleBudgetError, UsageError
from dpcounts.exact_math import exact_normalizer
from dpcounts.poisson_gamma import (
    PgCalibration,
    SynthesisStrategy,
    TargetRule,
    calibrate_pg,
    conditional_log_pmf,
    conditional_log_pmf_all,
    heterogeneity_penalty,
    integer_prior_strength,
    log_normalizer,
    log_normalizer_from_ratio,
    normalizer_ratio_bound,
    pg_expected_counts,
    pg_implied_epsilon,
    pg_synthesize,
    posterior_params,
    predictive_params,
    sample_pair_allocation,
    sanitize_state_rates,
    state_target_rates,
    structure_ratio,
)


class TestPosterior:
    def test_substitution(self):
        post = posterior_params(0, 1.0, 1.0, 1.0)
        assert (post.shape, post.rate) == (1.0, 2.0)
        post = posterior_params(3, 2.0, 5.0, 10.0)
        assert (post.shape, post.rate) == (5.0, 15.0)

    def test_monte_carlo_mean(self):
        post = posterior_params(10, 1.0, 2.0, 8.0)
        draws = sample_gamma(post.shape, post.rate, RngStream(21), size=40_000)
        se = math.sqrt(post.shape / post.rate**2 / 40_000)
        assert abs(draws.mean() - post.mean) < 3 * se

    def test_domain(self):
        with pytest.raises(DomainError):
            posterior_params(1, 0.0, 1.0, 1.0)


class TestPredictive:
    def test_substitution(self):
        n = 3.7
        assert predictive_params(0, 1.0, n, n) == pytest.approx((1.0, 1 / 3))

    def test_small_b_limit(self):
        _, p = predictive_params(2, 1.0, 1e-12, 1.0)
        assert p == pytest.approx(0.5, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(b=st.floats(1e-6, 1e6), n=st.floats(1e-6, 1e6))
    def test_p_below_half(self, b, n):
        _, p = predictive_params(0, 1.0, b, n)
        assert p < 0.5

    def test_marginal_matches_quadrature(self):
        # integrate Pois(z | n lam) against the Gamma posterior directly
        y, a, b, n = 1, 2.0, 3.0, 4.0
        r, p = predictive_params(y, a, b, n)
        shape, rate = y + a, n + b
        for z in range(4):
            def integrand(lam, z=z):
                return stats.poisson.pmf(z, n * lam) * stats.gamma.pdf(lam, shape, scale=1 / rate)
            expected, err = integrate.quad(integrand, 0, np.inf,
                                           epsabs=1e-12, epsrel=1e-12)
            assert err < 1e-9
            got = math.exp(math.lgamma(z + r) - math.lgamma(z + 1) - math.lgamma(r)
                           + z * math.log(p) + r * math.log1p(-p))
            assert got == pytest.approx(expected, abs=1e-8)


class TestStructureRatio:
    def test_uniform_structure_gives_one(self):
        assert structure_ratio(0, [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]) == pytest.approx(1.0)

    def test_substitution(self):
        assert structure_ratio(0, [1.0, 1.0], [2.0, 4.0]) == pytest.approx(1.5)
        assert structure_ratio(0, [1.0, 1.0], [4.0, 2.0]) == pytest.approx(2 / 3)

    def test_pair_reciprocal(self):
        r0 = structure_ratio(0, [1.0, 3.0], [0.5, 4.0])
        r1 = structure_ratio(1, [1.0, 3.0], [0.5, 4.0])
        assert r0 * r1 == pytest.approx(1.0, rel=1e-12)


class TestConditionalPmf:
    def test_symmetric_instance(self):
        ones = np.ones(2)
        log_pmf = conditional_log_pmf_all([1, 1], ones, ones, ones, 2)
        assert log_pmf[0] == pytest.approx(log_pmf[2], abs=1e-13)
        assert np.exp(log_pmf).sum() == pytest.approx(1.0, abs=1e-12)

    def test_hand_summation_oracle(self):
        # independent evaluation with math.gamma term by term
        y, a, b, n = [1, 1], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]
        p = [n[i] / (b[i] + 2 * n[i]) for i in range(2)]
        def term(z1):
            z2 = 2 - z1
            return (math.gamma(z1 + 2) / math.factorial(z1) * p[0] ** z1
                    * math.gamma(z2 + 2) / math.factorial(z2) * p[1] ** z2)
        total = sum(term(z1) for z1 in range(3))
        expected = [term(z1) / total for z1 in range(3)]
        got = np.exp(conditional_log_pmf_all(y, np.array(a), np.array(b), np.array(n), 2))
        assert np.allclose(got, expected, atol=1e-13)
        assert got[1] == pytest.approx(0.4, abs=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(z_total=st.integers(0, 200),
           y1=st.integers(0, 40), y2=st.integers(0, 40),
           a1=st.floats(0.1, 50), a2=st.floats(0.1, 50),
           lam1=st.floats(0.05, 5), lam2=st.floats(0.05, 5),
           n1=st.floats(0.2, 20), n2=st.floats(0.2, 20))
    def test_normalization(self, z_total, y1, y2, a1, a2, lam1, lam2, n1, n2):
        a = np.array([a1, a2])
        log_pmf = conditional_log_pmf_all([y1, y2], a, a / np.array([lam1, lam2]),
                                          np.array([n1, n2]), z_total)
        assert np.exp(log_pmf).sum() == pytest.approx(1.0, abs=1e-12)

    def test_scalar_entry_point(self):
        args = ([2, 3], np.array([1.0, 2.0]), np.array([1.0, 1.0]),
                np.array([1.0, 2.0]), 5)
        full = conditional_log_pmf_all(*args)
        assert conditional_log_pmf(3, *args) == pytest.approx(full[3])
        with pytest.raises(DomainError):
            conditional_log_pmf(6, *args)


class TestLogNormalizer:
    def test_single_term(self):
        value = log_normalizer([1, 1], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], 0)
        assert value == pytest.approx(0.0, abs=1e-13)
        value = log_normalizer([3, 2], [2.0, 2.0], [1.0, 1.0], [1.0, 1.0], 0)
        assert value == pytest.approx(math.lgamma(4) + math.lgamma(3), rel=1e-12)

    def test_four_unit_terms(self):
        # r = 1 and unit shapes make every term 1
        assert log_normalizer_from_ratio([0, 0], [1.0, 1.0], 1.0, 3) == pytest.approx(math.log(4))

    def test_matches_exact_oracle(self):
        for y, a, r, zt in [((1, 3), (1, 1), Fraction(1), 4),
                            ((2, 0), (2, 3), Fraction(1, 3), 6),
                            ((0, 5), (4, 1), Fraction(3, 2), 9)]:
            exact = exact_normalizer(y, a, r, zt)
            got = log_normalizer_from_ratio(np.array(y), np.array(a, dtype=float),
                                            float(r), zt)
            assert got == pytest.approx(math.log(exact), abs=1e-10)

    def test_large_total_finite(self):
        value = log_normalizer([10, 20], [1000.0, 500.0], [5.0, 5.0],
                               [2.0, 2.0], 100_000)
        assert np.isfinite(value)


class TestNormalizerRatioBound:
    def test_substitution(self):
        assert normalizer_ratio_bound([1, 3], [1.0, 1.0], 1.0, 4) == pytest.approx(math.log(4))
        assert normalizer_ratio_bound([1, 3], [1.0, 1.0], 0.5, 4) == pytest.approx(math.log(6))

    def test_exact_ratio_within_bound(self):
        c_y = exact_normalizer((1, 3), (1, 1), 1, 4)
        c_x = exact_normalizer((0, 4), (1, 1), 1, 4)
        assert abs(math.log(c_x / c_y)) <= math.log(4) + 1e-12

    def test_ordering_enforced(self):
        with pytest.raises(UsageError):
            normalizer_ratio_bound([3, 1], [1.0, 1.0], 1.0, 4)
        with pytest.raises(UsageError):
            normalizer_ratio_bound([1, 1], [1.0, 1.0], 1.0, 2)
        with pytest.raises(DomainError):
            normalizer_ratio_bound([0, 3], [1.0, 1.0], 1.0, 3)


class TestHeterogeneityPenalty:
    def test_no_penalty_when_ratio_at_least_one(self):
        assert heterogeneity_penalty([3.0, 2.0], 10, 10, 1.0) == 1.0
        assert heterogeneity_penalty([3.0, 2.0], 10, 10, 1.7) == 1.0

    def test_vanishes_with_informative_complement(self):
        assert heterogeneity_penalty([1.0, 1e12], 10, 10, 0.2) == pytest.approx(1.0, abs=1e-10)

    def test_worst_case_two(self):
        assert heterogeneity_penalty([1.0, 1.0], 10, 10, 0.0) == pytest.approx(2.0)

    @settings(max_examples=60, deadline=None)
    @given(a_comp=st.floats(1.0, 1e4), y_total=st.integers(1, 1000),
           r=st.floats(0.0, 0.999))
    def test_range_when_ratio_below_one(self, a_comp, y_total, r):
        nu = heterogeneity_penalty([1.0, a_comp], y_total, y_total, r)
        assert 1.0 < nu <= 2.0 or (r == 0 and nu == pytest.approx(2.0))


def _pair_dataset(y_total, populations):
    return CountDataset.from_counts([y_total, 0], populations)


class TestCalibratePg:
    def test_uniform_structure_matches_baseline(self):
        data = _pair_dataset(10_000, [1e5, 1e5])
        cal = calibrate_pg(7.0, data)
        assert cal.converged
        assert np.allclose(cal.a_min, 9.127142532217338, rtol=1e-9)
        assert np.allclose(cal.nu, 1.0)
        assert np.allclose(cal.r, 1.0)

    def test_equivalence_against_md_for_any_budget(self):
        data = _pair_dataset(50, [3.0, 3.0])
        for eps in (math.log(2), 1.0, 3.0):
            cal = calibrate_pg(eps, data)
            assert cal.a_min[0] == pytest.approx(calibrate_md(eps, 50).alpha_min, rel=1e-9)

    def test_monotone_in_budget(self):
        data = CountDataset.from_counts([7, 13, 30], [1.0, 5.0, 20.0])
        lam0 = np.array([0.9, 0.3, 1.4])
        tight = calibrate_pg(3.0, data, target_rates=lam0, rule=TargetRule.CUSTOM)
        loose = calibrate_pg(5.0, data, target_rates=lam0, rule=TargetRule.CUSTOM)
        assert np.all(tight.a_min > loose.a_min)

    def test_fixed_point_self_consistent(self):
        data = CountDataset.from_counts([3, 2], [1.0, 4.0])
        cal = calibrate_pg(1.5, data, target_rates=[0.8, 0.25], rule=TargetRule.CUSTOM)
        assert cal.converged
        e_eps = math.exp(cal.epsilon)
        required = cal.z_total / (e_eps / cal.nu - 1.0)
        assert np.allclose(cal.a_min, required, rtol=1e-9)

    def test_low_budget_supported(self):
        data = _pair_dataset(6, [1.0, 4.0])
        cal = calibrate_pg(math.log(2), data, target_rates=[0.8, 0.25],
                           rule=TargetRule.CUSTOM)
        assert cal.converged
        assert np.all(cal.nu < 2.0)

    def test_state_rule(self):
        data = CountDataset.from_counts([4, 6, 10], [10.0, 10.0, 40.0],
                                        state_ids=["a", "a", "b"])
        cal = calibrate_pg(2.0, data, rule=TargetRule.STATE_AVERAGE)
        assert cal.target_rates[0] == pytest.approx(0.5)
        assert cal.target_rates[2] == pytest.approx(0.25)

    def test_custom_rule_needs_rates(self):
        data = _pair_dataset(5, [1.0, 1.0])
        with pytest.raises(UsageError):
            calibrate_pg(1.0, data, rule=TargetRule.CUSTOM)

    def test_record_invariants_enforced(self):
        with pytest.raises(DomainError):
            PgCalibration(epsilon=1.0, z_total=10, y_total=10,
                          a_min=np.array([1.0, 1.0]), nu=np.array([3.0, 1.0]),
                          r=np.array([1.0, 1.0]), iterations=1, converged=True,
                          target_rates=np.array([1.0, 1.0]))
        with pytest.raises(DomainError):
            PgCalibration(epsilon=1.0, z_total=10, y_total=10,
                          a_min=np.array([0.1, 0.1]), nu=np.array([1.0, 1.0]),
                          r=np.array([1.0, 1.0]), iterations=1, converged=True,
                          target_rates=np.array([1.0, 1.0]))

    def test_implied_epsilon_inverts_calibration(self):
        data = CountDataset.from_counts([3, 2], [1.0, 4.0])
        cal = calibrate_pg(1.5, data, target_rates=[0.8, 0.25], rule=TargetRule.CUSTOM)
        implied = pg_implied_epsilon(data.populations, cal.a_min, cal.b_min,
                                     cal.y_total, cal.z_total)
        assert implied == pytest.approx(1.5, rel=1e-9)

    def test_integer_rounding_keeps_requirement(self):
        data = _pair_dataset(6, [1.0, 4.0])
        cal = calibrate_pg(1.0, data, target_rates=[0.8, 0.25], rule=TargetRule.CUSTOM)
        a_int = integer_prior_strength(cal, data.populations)
        assert a_int.dtype == np.int64
        assert np.all(a_int >= cal.a_min - 1e-9)
        implied = pg_implied_epsilon(data.populations, a_int,
                                     a_int / cal.target_rates,
                                     cal.y_total, cal.z_total)
        assert implied <= cal.epsilon + 1e-9


class TestSynthesize:
    def _instance(self):
        data = CountDataset.from_counts([2, 3], [1.0, 2.0])
        prior = PriorSpec.poisson_gamma(a=[1.0, 2.0], target_rates=[1.0, 2.0])
        return data, prior

    def test_strategy_mismatch(self):
        data = CountDataset.from_counts([1, 2, 3], [1.0, 1.0, 1.0])
        prior = PriorSpec.poisson_gamma(a=[1.0] * 3, target_rates=[1.0] * 3)
        with pytest.raises(UsageError):
            pg_synthesize(data, prior, SynthesisStrategy.EXACT_PAIR, RngStream(0))

    def test_mode_mismatch(self):
        data, _ = self._instance()
        with pytest.raises(UsageError):
            pg_synthesize(data, PriorSpec.multinomial_dirichlet([1.0, 1.0]),
                          SynthesisStrategy.EXACT_PAIR, RngStream(0))

    def test_exact_pair_symmetry(self):
        data = CountDataset.from_counts([2, 2], [1.0, 1.0])
        prior = PriorSpec.poisson_gamma(a=[1.5, 1.5], target_rates=[1.0, 1.0])
        draws = np.array([pg_synthesize(data, prior, SynthesisStrategy.EXACT_PAIR,
                                        RngStream(31, i)).counts[0]
                          for i in range(8000)])
        low, high = np.mean(draws == 0), np.mean(draws == 4)
        assert abs(low - high) < 3 * math.sqrt(2 * low * (1 - low) / 8000)

    def test_exact_pair_matches_pmf(self):
        data, prior = self._instance()
        log_pmf = conditional_log_pmf_all(data.counts, prior.a, prior.b,
                                          data.populations, data.total)
        draws = sample_pair_allocation(log_pmf, RngStream(32), size=100_000)
        emp = np.bincount(draws, minlength=data.total + 1) / 100_000
        tv = 0.5 * np.abs(emp - np.exp(log_pmf)).sum()
        assert tv < 0.01

    def test_informative_limit_allocates_by_prior_rates(self):
        # a, b -> inf at fixed a/b: allocation weights tend to n * lam0
        n = np.array([1.0, 3.0])
        lam0 = np.array([2.0, 0.5])
        data = CountDataset.from_counts([40, 0], n)
        prior = PriorSpec.poisson_gamma(a=np.array([1e9, 1e9]), target_rates=lam0)
        draws = np.array([pg_synthesize(data, prior, SynthesisStrategy.LAMBDA_MULTINOMIAL,
                                        RngStream(33, i)).counts
                          for i in range(3000)])
        expected = 40 * n * lam0 / np.sum(n * lam0)
        se = math.sqrt(40 * 0.5 / 3000)
        assert np.all(np.abs(draws.mean(axis=0) - expected) < 4 * se)

    def test_totals_and_provenance(self):
        data, prior = self._instance()
        synth = pg_synthesize(data, prior, SynthesisStrategy.LAMBDA_MULTINOMIAL,
                              RngStream(34))
        assert synth.counts.sum() == data.total
        assert synth.provenance.strategy == "lambda-then-multinomial"
        assert synth.provenance.epsilon > 0


class TestExpectedCounts:
    def test_substitution(self):
        out = pg_expected_counts([0], [1.0], [1.0], [1.0])
        assert out[0] == pytest.approx(0.5)

    def test_informative_limit(self):
        out = pg_expected_counts([3, 9], [1e12, 1e12], [1e12 / 0.5, 1e12 / 2.0],
                                 [10.0, 5.0])
        assert np.allclose(out, [5.0, 10.0], rtol=1e-9)

    def test_data_dominant_limit(self):
        out = pg_expected_counts([3, 9], [1e-12, 1e-12], [1e-12, 1e-12], [10.0, 5.0])
        assert np.allclose(out, [3.0, 9.0], rtol=1e-9)


class TestStateRates:
    def _data(self):
        return CountDataset.from_counts(
            [2, 3, 10, 5], [10.0, 10.0, 50.0, 50.0],
            state_ids=["s1", "s1", "s2", "s2"])

    def test_zero_noise_limit(self):
        data = self._data()
        rates = sanitize_state_rates(data, 1e12, RngStream(41))
        assert rates[0] == pytest.approx(5 / 20, rel=1e-6)
        assert rates[2] == pytest.approx(15 / 100, rel=1e-6)

    def test_unbiased_noise(self):
        data = CountDataset.from_counts([60, 40], [5e5, 5e5], state_ids=["s", "s"])
        draws = np.array([sanitize_state_rates(data, 1.0, RngStream(42, i))[0]
                          for i in range(4000)])
        # Laplace(1) noise on the count: sd of the mean rate is sqrt(2/n)/1e6
        se = math.sqrt(2.0 / 4000) / 1e6
        assert abs(draws.mean() - 1e-4) < 3 * se

    def test_states_are_independent_partitions(self):
        data = self._data()
        full = sanitize_state_rates(data, 5.0, RngStream(43))
        assert full[0] == full[1]
        assert full[2] == full[3]

    def test_floor_applies(self):
        data = CountDataset.from_counts([0, 0, 7], [10.0, 10.0, 10.0],
                                        state_ids=["a", "a", "b"])
        rates = state_target_rates(data)
        assert rates[0] == pytest.approx(0.1 / 20.0)

    def test_missing_states_rejected(self):
        data = CountDataset.from_counts([1, 2], [1.0, 1.0])
        with pytest.raises(UsageError):
            state_target_rates(data)
        with pytest.raises(UsageError):
            sanitize_state_rates(data, 1.0, RngStream(0))


class TestBaselineEquivalence:
    @settings(max_examples=40, deadline=None)
    @given(y1=st.integers(0, 15), y2=st.integers(0, 15),
           a=st.floats(0.2, 40.0), n=st.floats(0.1, 100.0),
           lam0=st.floats(0.01, 10.0))
    def test_uniform_structure_reduces_to_baseline(self, y1, y2, a, n, lam0):
        # equal populations and one shared target rate with one shared prior
        # strength collapse the pair pmf to the baseline model with alpha = a;
        # the baseline pmf fixes the release total at the data total
        z_total = y1 + y2
        y = np.array([y1, y2])
        a_vec = np.full(2, a)
        b_vec = a_vec / lam0
        n_vec = np.full(2, n)
        log_pmf = conditional_log_pmf_all(y, a_vec, b_vec, n_vec, z_total)
        for z1 in range(z_total + 1):
            md = md_log_pmf([z1, z_total - z1], y, a_vec)
            assert log_pmf[z1] == pytest.approx(md, abs=1e-10)


def test_infeasible_budget_guard(monkeypatch):
    # With matched totals the fixed point always exists, so force the
    # penalty past the budget to exercise the guard branch.
    import dpcounts.poisson_gamma as pg

    monkeypatch.setattr(pg, "_penalties", lambda *args, **kwargs: np.full(2, 100.0))
    data = CountDataset.from_counts([3, 3], [1.0, 1.0])
    with pytest.raises(InfeasibleBudgetError):
        calibrate_pg(1.0, data)
