import numpy as np
import pytest

from core.errors import ConfigurationError, DegenerateDataError, InsufficientDataError, NonFiniteError
from core.model import ModelState
from core.noisemodel import (GaussianMixture2, compute_weights, estimate_noise, fit_em, posterior_clean,
                             posterior_noisy, sample_weight, sample_weights)


def _planted(rng, n_clean=700, n_noisy=300):
    clean = np.abs(rng.normal(0.5, 0.1, n_clean))
    noisy = np.abs(rng.normal(3.0, 0.3, n_noisy))
    return clean, noisy


class TestFitEm:

    def test_recovers_known_mixture(self, rng):
        n = 5000
        first = rng.random(n) < 0.7
        d = np.where(first, rng.normal(1.0, 0.3, n), rng.normal(4.0, 0.8, n))
        mixture, trace = fit_em(np.abs(d))
        assert mixture.mu[0] == pytest.approx(1.0, abs=0.1)
        assert mixture.mu[1] == pytest.approx(4.0, abs=0.1)
        assert mixture.alpha[0] == pytest.approx(0.7, abs=0.05)
        assert trace.converged

    def test_clean_component_has_smaller_mean(self, rng):
        clean, noisy = _planted(rng)
        mixture, _ = fit_em(np.concatenate([noisy, clean]))
        assert mixture.mu[0] <= mixture.mu[1]

    def test_symmetric_data_gives_symmetric_means(self, rng):
        x = rng.normal(3.0, 1.0, 500)
        x = x[(x > 0) & (x < 10)]
        d = np.concatenate([x, 10.0 - x])
        mixture, _ = fit_em(d)
        assert (mixture.mu[0] + mixture.mu[1]) / 2 == pytest.approx(d.mean(), abs=1e-6)

    def test_log_likelihood_never_decreases(self, rng):
        clean, noisy = _planted(rng)
        _, trace = fit_em(np.concatenate([clean, noisy]))
        history = np.array(trace.log_likelihood_history)
        assert np.all(np.diff(history) >= -1e-8)

    def test_deterministic(self, rng):
        d = np.concatenate(_planted(rng))
        assert fit_em(d)[0] == fit_em(d.copy())[0]

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            fit_em(np.array([0.1, 0.2, 0.3]))

    def test_identical_distances(self):
        with pytest.raises(DegenerateDataError):
            fit_em(np.full(10, 2.0))

    def test_non_finite(self):
        with pytest.raises(NonFiniteError):
            fit_em(np.array([0.1, 0.2, np.nan, 0.4]))

    def test_sigma_floor(self):
        mixture, _ = fit_em(np.array([0.0, 0.0, 0.0, 5.0, 5.0, 5.0]))
        assert min(mixture.sigma) >= 1e-6


class TestPosterior:

    def test_midpoint_is_even(self):
        g = GaussianMixture2((0.5, 0.5), (1.0, 3.0), (0.5, 0.5))
        assert posterior_clean(2.0, g) == pytest.approx(0.5, abs=1e-12)
        assert posterior_noisy(2.0, g) == pytest.approx(0.5, abs=1e-12)

    def test_clean_mean_is_confident(self):
        g = GaussianMixture2((0.5, 0.5), (0.5, 3.0), (0.2, 0.4))
        assert posterior_clean(0.5, g) > 0.99

    def test_far_tail_does_not_underflow(self):
        g = GaussianMixture2((0.5, 0.5), (0.5, 3.0), (0.01, 0.01))
        p = posterior_clean(1e3, g)
        assert np.isfinite(p) and 0.0 <= p <= 1.0

    def test_rejects_non_finite_distance(self):
        g = GaussianMixture2((0.5, 0.5), (1.0, 3.0), (0.5, 0.5))
        with pytest.raises(NonFiniteError):
            posterior_clean(float('inf'), g)


class TestSampleWeight:

    def test_threshold_is_strict(self):
        assert sample_weight(0.5, 0.5) == 0.0

    def test_full_confidence(self):
        assert sample_weight(1.0, 0.5) == 1.0

    def test_linear_rescale(self):
        assert sample_weight(0.75, 0.5) == pytest.approx(0.5)

    def test_eta_zero_is_posterior(self):
        p = np.linspace(0.0, 1.0, 11)
        np.testing.assert_array_equal(sample_weights(p, 0.0), p)

    def test_eta_one_rejected(self):
        with pytest.raises(ConfigurationError):
            sample_weight(0.9, 1.0)

    def test_vectorized_agrees(self, rng):
        p = rng.random(50)
        np.testing.assert_allclose(sample_weights(p, 0.3), [sample_weight(v, 0.3) for v in p])

    def test_planted_clusters_split_cleanly(self, rng):
        clean, noisy = _planted(rng)
        d = np.concatenate([clean, noisy])
        mixture, _ = fit_em(d)
        w = sample_weights(mixture.posterior_clean(d), 0.5)
        assert np.all(w[:clean.size] > 0)
        assert np.all(w[clean.size:] == 0)


class TestEstimateNoise:

    def test_estimate_matches_compute_weights(self, domain_pair):
        source, _ = domain_pair
        model = ModelState.initialize(source.in_dim, (8,), 3, source.class_count, 5.0, seed=0)
        estimate = estimate_noise(model, source, 0.5)
        weights, mixture = compute_weights(model, source, 0.5)
        np.testing.assert_array_equal(estimate.weights, weights)
        assert estimate.mixture == mixture
        assert estimate.retained_fraction == pytest.approx(float((weights > 0).mean()))
        assert np.all((weights >= 0) & (weights <= 1))
