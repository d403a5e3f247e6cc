"""Spike-and-slab prior, mean-field posterior, and the Monte Carlo KL.

The prior over each scalar weight is a zero-mean two-component Gaussian
mixture: a wide "slab" permitting large weights and a narrow "spike"
concentrating mass near zero.  The posterior is a fully factorized
Gaussian with per-weight mean mu and scale sigma = softplus(rho).  The
KL from posterior to a mixture prior has no closed form, so it is
estimated by Monte Carlo over reparameterized draws
theta = mu + sigma * eps, eps ~ N(0, I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import softplus
from .rng import RngStream

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Mixture weight applies to the slab: p = pi*N(0, slab^2) + (1-pi)*N(0, spike^2)."""

    mix_weight: float = 0.5
    slab_sigma: float = 1.0
    spike_sigma: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.mix_weight <= 1.0:
            raise ValueError(f"mix_weight must lie in [0, 1], got {self.mix_weight}")
        if self.slab_sigma <= 0.0 or self.spike_sigma <= 0.0:
            raise ValueError("prior sigmas must be positive")
        if self.spike_sigma > self.slab_sigma:
            raise ValueError(
                f"spike_sigma ({self.spike_sigma}) must not exceed slab_sigma ({self.slab_sigma})"
            )

    @property
    def is_degenerate(self) -> bool:
        """True when the mixture collapses to a single Gaussian."""
        return self.mix_weight in (0.0, 1.0) or self.spike_sigma == self.slab_sigma


@dataclass
class VariationalParams:
    """Per-weight posterior mean and pre-softplus scale, flattened to 1-D."""

    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.mu.ndim != 1 or self.mu.shape != self.rho.shape:
            raise ValueError("mu and rho must be equal-length 1-D vectors")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.rho))):
            raise ValueError("variational parameters must be finite")

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)


@dataclass
class WeightSample:
    """One posterior draw together with the noise that produced it."""

    theta: np.ndarray
    epsilon: np.ndarray


def gaussian_log_pdf(x, mean: float, sigma: float):
    """Exact log N(x; mean, sigma^2); accepts scalar or array x."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    z = (np.asarray(x, dtype=np.float64) - mean) / sigma
    return -np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * z * z


def spike_slab_log_pdf(x, prior: SpikeSlabPrior):
    """log p(x) of the mixture prior via log-sum-exp; scalar or array x."""
    with np.errstate(divide="ignore"):  # log(0) at the pi endpoints is fine
        slab = np.log(prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.slab_sigma)
        spike = np.log1p(-prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.spike_sigma)
    return np.logaddexp(slab, spike)


def spike_slab_score(x, prior: SpikeSlabPrior):
    """d/dx log p(x): responsibility-weighted Gaussian scores."""
    with np.errstate(divide="ignore"):
        slab = np.log(prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.slab_sigma)
        spike = np.log1p(-prior.mix_weight) + gaussian_log_pdf(x, 0.0, prior.spike_sigma)
    r = np.exp(slab - np.logaddexp(slab, spike))
    x = np.asarray(x, dtype=np.float64)
    return r * (-x / prior.slab_sigma**2) + (1.0 - r) * (-x / prior.spike_sigma**2)


def sample_from_epsilon(params: VariationalParams, epsilon) -> WeightSample:
    """Reparameterized draw theta = mu + softplus(rho) * epsilon."""
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != params.mu.shape:
        raise ValueError("epsilon must match the parameter vector length")
    return WeightSample(theta=params.mu + params.sigma * eps, epsilon=eps)


def sample_weights(params: VariationalParams, stream: RngStream) -> WeightSample:
    """Draw one weight sample from the posterior, advancing ``stream``."""
    return sample_from_epsilon(params, stream.normal(len(params)))


def mean_sample(params: VariationalParams) -> WeightSample:
    """The epsilon = 0 sample, i.e. the posterior mean weights."""
    return sample_from_epsilon(params, np.zeros(len(params)))


def posterior_log_pdf(params: VariationalParams, theta) -> float:
    sigma = params.sigma
    z = (np.asarray(theta, dtype=np.float64) - params.mu) / sigma
    return float(np.sum(-np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * z * z))


def prior_log_pdf(theta, prior: SpikeSlabPrior) -> float:
    return float(np.sum(spike_slab_log_pdf(theta, prior)))


def kl_sample_estimate(params: VariationalParams, prior: SpikeSlabPrior, sample: WeightSample) -> float:
    """Single-draw unbiased estimate of KL(q || p); may be negative."""
    return posterior_log_pdf(params, sample.theta) - prior_log_pdf(sample.theta, prior)


def mc_kl(params: VariationalParams, prior: SpikeSlabPrior, n_samples: int, stream: RngStream) -> float:
    """Monte Carlo KL(q || p) averaged over ``n_samples`` posterior draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    k = len(params)
    sigma = params.sigma
    eps = stream.normal(n_samples * k).reshape(n_samples, k)
    theta = params.mu + sigma * eps
    log_q = np.sum(-np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * eps * eps, axis=1)
    log_p = np.sum(spike_slab_log_pdf(theta, prior), axis=1)
    return float(np.mean(log_q - log_p))
