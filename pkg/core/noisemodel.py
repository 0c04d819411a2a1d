"""
Unsupervised noise removal.

A two-component 1-D Gaussian mixture is fitted by EM to the euclidean
distances between source features and their labelled class prototypes.
The smaller-mean component is the clean one; its posterior is turned into a
sample weight by thresholding at eta and rescaling linearly to [0, 1].
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from core.errors import ConfigurationError, DegenerateDataError, InsufficientDataError, NonFiniteError
from core.model import ModelState, prototype_distances

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6
MIN_FIT_SAMPLES = 4
EM_MAX_ITER = 100
EM_TOL = 1e-6


@dataclass(frozen=True)
class GaussianMixture2:
    """Component 1 is clean (smaller mean), component 2 is noisy"""
    alpha: Tuple[float, float]
    mu: Tuple[float, float]
    sigma: Tuple[float, float]

    def relabeled(self) -> 'GaussianMixture2':
        if self.mu[0] <= self.mu[1]:
            return self
        return GaussianMixture2(self.alpha[::-1], self.mu[::-1], self.sigma[::-1])

    def component_log_densities(self, d: np.ndarray) -> np.ndarray:
        """log alpha_k + log N(d | mu_k, sigma_k), shape (N, 2)"""
        d = np.asarray(d, dtype=np.float64).reshape(-1, 1)
        with np.errstate(divide='ignore'):
            log_alpha = np.log(np.asarray(self.alpha))
        return log_alpha + norm.logpdf(d, loc=np.asarray(self.mu), scale=np.asarray(self.sigma))

    def log_likelihood(self, d: np.ndarray) -> float:
        return float(logsumexp(self.component_log_densities(d), axis=1).sum())

    def posterior_clean(self, d: np.ndarray) -> np.ndarray:
        joint = self.component_log_densities(d)
        return np.exp(joint[:, 0] - logsumexp(joint, axis=1))

    def to_dict(self) -> dict:
        return {'alpha': list(self.alpha), 'mu': list(self.mu), 'sigma': list(self.sigma)}


@dataclass
class EmTrace:
    iterations: int = 0
    log_likelihood_history: List[float] = field(default_factory=list)
    converged: bool = False

    def summary(self) -> dict:
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'final_log_likelihood': self.log_likelihood_history[-1] if self.log_likelihood_history else None,
        }


def _initial_mixture(d: np.ndarray) -> GaussianMixture2:
    """Lower half / upper half of the sorted distances, equal priors"""
    ordered = np.sort(d)
    half = len(ordered) // 2
    lower, upper = ordered[:half], ordered[half:]
    return GaussianMixture2(
        alpha=(0.5, 0.5),
        mu=(float(lower.mean()), float(upper.mean())),
        sigma=(max(float(lower.std()), SIGMA_FLOOR), max(float(upper.std()), SIGMA_FLOOR)),
    )


def fit_em(distances: np.ndarray, max_iter: int = EM_MAX_ITER, tol: float = EM_TOL) -> Tuple[GaussianMixture2, EmTrace]:
    """EM for a two-component 1-D Gaussian mixture.

    Stops when the log-likelihood improves by less than ``tol`` or after
    ``max_iter`` iterations. Initialisation is deterministic, so identical
    inputs always give identical parameters.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_FIT_SAMPLES} distances to fit the noise model, got {d.size}")
    if not np.all(np.isfinite(d)):
        raise NonFiniteError("distances contain NaN or Inf")
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    if np.all(d == d[0]):
        raise DegenerateDataError(f"all {d.size} distances equal {d[0]}; no clean/noisy split exists")

    mixture = _initial_mixture(d)
    trace = EmTrace(log_likelihood_history=[mixture.log_likelihood(d)])
    for _ in range(max_iter):
        joint = mixture.component_log_densities(d)
        resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        nk = resp.sum(axis=0)
        mu, sigma = list(mixture.mu), list(mixture.sigma)
        for k in range(2):
            # an emptied component keeps its previous location
            if nk[k] > 1e-12:
                mu[k] = float((resp[:, k] * d).sum() / nk[k])
                var = float((resp[:, k] * (d - mu[k]) ** 2).sum() / nk[k])
                sigma[k] = max(math.sqrt(var), SIGMA_FLOOR)
        alpha = nk / d.size
        mixture = GaussianMixture2((float(alpha[0]), float(alpha[1])), (mu[0], mu[1]), (sigma[0], sigma[1]))
        trace.iterations += 1
        ll = mixture.log_likelihood(d)
        improvement = ll - trace.log_likelihood_history[-1]
        trace.log_likelihood_history.append(ll)
        if improvement < tol:
            trace.converged = True
            break

    mixture = mixture.relabeled()
    logger.debug(f"EM finished after {trace.iterations} iterations: mu={mixture.mu}, alpha={mixture.alpha}")
    return mixture, trace


def posterior_clean(d: float, g: GaussianMixture2) -> float:
    """p(clean | d), evaluated in log space"""
    if not math.isfinite(d):
        raise NonFiniteError(f"distance must be finite, got {d}")
    return float(g.posterior_clean(np.array([d]))[0])


def posterior_noisy(d: float, g: GaussianMixture2) -> float:
    return 1.0 - posterior_clean(d, g)


def _check_eta(eta: float):
    if not 0.0 <= eta < 1.0:
        raise ConfigurationError(f"eta must lie in [0, 1), got {eta}")


def sample_weight(p_clean: float, eta: float) -> float:
    """0 when p_clean <= eta, (p_clean - eta) / (1 - eta) otherwise"""
    _check_eta(eta)
    if not 0.0 <= p_clean <= 1.0:
        raise ValueError(f"clean posterior must lie in [0, 1], got {p_clean}")
    if p_clean <= eta:
        return 0.0
    return (p_clean - eta) / (1.0 - eta)


def sample_weights(p_clean: np.ndarray, eta: float) -> np.ndarray:
    _check_eta(eta)
    p = np.asarray(p_clean, dtype=np.float64)
    return np.where(p > eta, (p - eta) / (1.0 - eta), 0.0)


@dataclass
class NoiseEstimate:
    distances: np.ndarray
    posteriors: np.ndarray
    weights: np.ndarray
    mixture: GaussianMixture2
    trace: EmTrace

    @property
    def retained_fraction(self) -> float:
        return float((self.weights > 0).mean()) if self.weights.size else 0.0


def estimate_noise(model: ModelState, source, eta: float,
                   max_iter: int = EM_MAX_ITER, tol: float = EM_TOL) -> NoiseEstimate:
    """Fit the mixture on the full source set and weight every sample"""
    _check_eta(eta)
    distances = prototype_distances(model, source.features, source.labels)
    mixture, trace = fit_em(distances, max_iter=max_iter, tol=tol)
    posteriors = mixture.posterior_clean(distances)
    weights = sample_weights(posteriors, eta)
    logger.info(f"Noise model refit: mu={tuple(round(m, 4) for m in mixture.mu)}, "
                f"alpha={tuple(round(a, 4) for a in mixture.alpha)}, retained {(weights > 0).mean():.3f}")
    return NoiseEstimate(distances, posteriors, weights, mixture, trace)


def compute_weights(model: ModelState, source, eta: float,
                    max_iter: int = EM_MAX_ITER, tol: float = EM_TOL) -> Tuple[np.ndarray, GaussianMixture2]:
    estimate = estimate_noise(model, source, eta, max_iter=max_iter, tol=tol)
    return estimate.weights, estimate.mixture
