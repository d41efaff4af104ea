import math

import numpy as np
import pytest

from phi4sim.ldp_stats import (
    autocovariance,
    integrated_autocorrelation_time,
    ldp_rate,
    magnetisation_event_counts,
    peierls_decay,
    q_moment_estimate,
    smooth_sign,
    spectral_gap_estimate,
)
from phi4sim.torus import ConfigurationError


class TestEventCounts:
    def test_counts_strict_window(self):
        m = np.array([0.0, 0.49, -0.49, 0.5, -0.5, 2.0])
        k, n = magnetisation_event_counts(m, zeta=0.5, beta=1.0)
        assert (k, n) == (3, 6)


class TestRateTable:
    def _samples(self, rate, side, n, dim, rng):
        p = math.exp(rate * side ** (dim - 1))
        events = rng.random(n) < p
        # magnetisation 0 inside the event, 1 outside (zeta sqrt(beta) = 0.5)
        return np.where(events, 0.0, 1.0)

    def test_recovers_planted_surface_rate(self):
        rng = np.random.default_rng(0)
        rate = -0.2
        data = {
            side: self._samples(rate, side, 400_000, 2, rng)
            for side in (8, 12, 16)
        }
        table = ldp_rate(data, zeta=0.5, beta=1.0, dim=2)
        assert not table.inconclusive
        assert table.consistent_pairwise_2se
        for e in table.entries:
            assert not e.upper_bound_only
            assert abs(e.rate - rate) < 3.0 * e.stderr
            assert abs(e.rate - rate) < 0.02

    def test_zero_events_become_rule_of_three_bound(self):
        data = {8: np.ones(1000), 12: np.zeros(100)}
        table = ldp_rate(data, zeta=0.5, beta=1.0, dim=2)
        by_side = {e.side: e for e in table.entries}
        assert by_side[8].upper_bound_only
        assert by_side[8].log_prob == pytest.approx(math.log(3.0 / 1000))
        assert math.isinf(by_side[8].stderr)
        assert not by_side[12].upper_bound_only

    def test_single_observed_entry_is_not_consistent(self):
        data = {8: np.zeros(100)}
        table = ldp_rate(data, zeta=0.5, beta=1.0, dim=2)
        assert not table.consistent_pairwise_2se
        assert not table.inconclusive

    def test_all_bounds_flag_inconclusive(self):
        data = {8: np.ones(100), 12: np.ones(100)}
        table = ldp_rate(data, zeta=0.5, beta=1.0, dim=2)
        assert table.inconclusive

    def test_inconsistent_rates_detected(self):
        data = {
            8: np.where(np.arange(10000) < 5000, 0.0, 1.0),   # p = 0.5
            16: np.where(np.arange(10000) < 10, 0.0, 1.0),    # p = 1e-3
        }
        table = ldp_rate(data, zeta=0.5, beta=1.0, dim=2)
        assert not table.consistent_pairwise_2se

    def test_zeta_out_of_range_rejected(self):
        with pytest.raises(ConfigurationError):
            ldp_rate({8: np.zeros(10)}, zeta=1.0, beta=1.0, dim=2)


class TestPeierls:
    def test_recovers_planted_exponential_decay(self):
        rng = np.random.default_rng(1)
        c = 0.8
        data = {
            size: (rng.random(200_000) < math.exp(-c * size)).astype(float)
            for size in (1, 2, 3, 4, 6)
        }
        fit = peierls_decay(data)
        assert not fit.upper_bound_only
        assert fit.slope == pytest.approx(-c, abs=3.0 * fit.stderr)
        assert fit.slope == pytest.approx(-c, rel=0.02)
        assert fit.slope < 0.0 and fit.stderr < abs(fit.slope) / 3.0

    def test_fit_anchored_at_origin(self):
        fit = peierls_decay({2: np.ones(100), 4: np.ones(100)})
        assert fit.sizes[0] == 0
        assert fit.log_probs[0] == 0.0

    def test_zero_event_sizes_dropped_and_flagged(self):
        data = {1: np.ones(100), 2: np.zeros(100), 3: np.ones(100)}
        fit = peierls_decay(data)
        assert fit.upper_bound_only
        assert 2 not in fit.sizes

    def test_too_few_points_returns_nan(self):
        fit = peierls_decay({4: np.zeros(50)})
        assert math.isnan(fit.slope)
        assert fit.upper_bound_only


class TestQMoment:
    def test_constant_samples_give_exact_exponent(self):
        sums = np.full(200, 7.0)
        est = q_moment_estimate(sums, total_blocks=14)
        assert est.defined
        assert est.exponent == pytest.approx(0.5, rel=1e-12)
        assert est.stderr == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_log_mean_exp(self):
        rng = np.random.default_rng(2)
        sums = rng.standard_normal(400)
        est = q_moment_estimate(sums, total_blocks=10)
        direct = math.log(np.mean(np.exp(sums))) / 10.0
        assert est.exponent == pytest.approx(direct, rel=1e-10)
        assert est.stderr > 0.0

    def test_zero_blocks_undefined(self):
        est = q_moment_estimate(np.zeros(100), total_blocks=0)
        assert not est.defined

    def test_too_few_samples_rejected(self):
        with pytest.raises(ConfigurationError):
            q_moment_estimate(np.zeros(5), total_blocks=2, n_batches=20)


class TestSmoothSign:
    def test_saturates_outside_threshold(self):
        m = 0.3
        x = np.array([-1.0, -0.31, 0.31, 1.0])
        assert np.array_equal(smooth_sign(x, m), [-1.0, -1.0, 1.0, 1.0])

    def test_odd_and_monotone(self):
        x = np.linspace(-0.5, 0.5, 101)
        y = smooth_sign(x, 0.3)
        assert np.allclose(y, -smooth_sign(-x, 0.3), atol=1e-14)
        assert np.all(np.diff(y) >= 0.0)
        assert smooth_sign(np.array([0.0]), 0.3)[0] == pytest.approx(0.0)


class TestAutocovariance:
    def test_matches_direct_estimator(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(500)
        acov = autocovariance(x, 10)
        xc = x - x.mean()
        for lag in range(11):
            direct = np.sum(xc[: len(x) - lag] * xc[lag:]) / len(x)
            assert acov[lag] == pytest.approx(direct, abs=1e-10)

    def test_tau_of_white_noise_is_half(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(20000)
        tau = integrated_autocorrelation_time(x)
        assert tau == pytest.approx(0.5, abs=0.1)

    def test_tau_of_ar1(self):
        rng = np.random.default_rng(5)
        phi = 0.9
        n = 200_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for i in range(1, n):
            x[i] = phi * x[i - 1] + eps[i]
        # tau = 1/2 + sum_k phi^k = 1/2 + phi/(1-phi)
        expect = 0.5 + phi / (1.0 - phi)
        assert integrated_autocorrelation_time(x) == pytest.approx(expect,
                                                                   rel=0.1)


class TestSpectralGap:
    def _ar1(self, phi, n, seed):
        rng = np.random.default_rng(seed)
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n) * math.sqrt(1.0 - phi * phi)
        for i in range(1, n):
            x[i] = phi * x[i - 1] + eps[i]
        return x

    def test_recovers_ar1_rate(self):
        # an AR(1) chain in the linear regime of the cutoff has
        # autocovariance e^{-lag |log phi|}: rate = -log(phi)/dt
        phi = 0.95
        dt = 0.1
        x = 0.05 * self._ar1(phi, 400_000, seed=6)
        est = spectral_gap_estimate(x, dt=dt, m_threshold=1.0)
        expect = -math.log(phi) / dt
        assert not est.inconclusive
        assert abs(est.rate - expect) < max(3.0 * est.stderr, 0.05 * expect)

    def test_deterministic(self):
        x = 0.05 * self._ar1(0.9, 100_000, seed=7)
        a = spectral_gap_estimate(x, dt=0.1, m_threshold=1.0)
        b = spectral_gap_estimate(x, dt=0.1, m_threshold=1.0)
        assert a.rate == b.rate and a.stderr == b.stderr

    def test_short_trajectory_rejected(self):
        # correlation time comparable to the record length: the lag window
        # needed for the fit does not fit in the trajectory
        x = np.linspace(-0.05, 0.05, 300)
        with pytest.raises(ConfigurationError):
            spectral_gap_estimate(x, dt=0.1, m_threshold=1.0)

    def test_constant_trajectory_inconclusive(self):
        x = np.zeros(10_000)
        est = spectral_gap_estimate(x, dt=0.1, m_threshold=1.0)
        assert est.inconclusive
