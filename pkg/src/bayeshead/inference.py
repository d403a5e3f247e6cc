"""Monte Carlo predictive inference and the accept/refer triage rule.

A prediction is the mean of per-draw softmax outputs over n posterior
weight draws; its per-class spread (population variance, 1/n) is the
uncertainty signal.  Draw i always uses the child stream keyed by i, so
results are bit-identical no matter how many workers run the draws.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import softmax
from .distributions import sample_weights
from .errors import VariantError
from .network import HeadModel, dense_forward, mean_forward
from .rng import RngStream


@dataclass
class PredictiveResult:
    sample_probs: np.ndarray  # (n, n_classes) per-draw softmax outputs
    mean_probs: np.ndarray
    var_probs: np.ndarray
    entropy_bits: float
    ci_low: np.ndarray
    ci_high: np.ndarray
    predicted_class: int
    uncertainty_scalar: float


@dataclass(frozen=True)
class ReferralDecision:
    action: str  # "accept" | "refer"
    threshold_used: float
    basis: str  # "uncertainty_scalar" | "confidence"


@dataclass(frozen=True)
class ReferralThresholds:
    uncertainty: float = 0.01
    confidence: float = 0.99


def entropy_bits(probs) -> float:
    """Shannon entropy in bits with 0*log0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("entropy needs a nonempty probability vector")
    if np.any(p < -1e-12) or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("input is not a probability vector")
    p = np.clip(p, 0.0, 1.0)
    nz = p > 0.0
    return float(-np.sum(p[nz] * np.log2(p[nz])))


def credible_interval(samples, level: float) -> tuple[float, float]:
    """Empirical percentile interval with linear interpolation."""
    s = np.asarray(samples, dtype=np.float64)
    if s.size == 0:
        raise ValueError("credible interval of empty samples")
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must lie in (0, 1], got {level}")
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(s, [tail, 100.0 - tail])
    return float(low), float(high)


def predictive_from_samples(sample_probs, level: float = 0.95) -> PredictiveResult:
    """Assemble the predictive summary from an (n, n_classes) draw matrix."""
    probs = np.asarray(sample_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
        raise ValueError("sample_probs must be (n_draws, n_classes >= 2)")
    if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("each draw must be a probability vector")
    n = probs.shape[0]
    mean = probs.sum(axis=0) / n  # fixed-order reduction
    var = ((probs - mean) ** 2).sum(axis=0) / n  # population variance, 1/n
    lows, highs = zip(*(credible_interval(probs[:, c], level) for c in range(probs.shape[1])))
    return PredictiveResult(
        sample_probs=probs,
        mean_probs=mean,
        var_probs=var,
        entropy_bits=entropy_bits(mean),
        ci_low=np.array(lows),
        ci_high=np.array(highs),
        predicted_class=int(np.argmax(mean)),
        uncertainty_scalar=float(var.max()),
    )


def predict_mc(
    model: HeadModel,
    x,
    n: int,
    stream: RngStream,
    workers: int = 1,
    level: float = 0.95,
) -> PredictiveResult:
    """n-draw Monte Carlo prediction for one input.

    Does not advance ``stream``: draw i derives the child stream keyed by
    i, which makes parallel execution bit-reproducible.
    """
    if not model.is_bayesian:
        raise VariantError("predict_mc requires the bayesian variant")
    if n < 1:
        raise ValueError("draw count must be >= 1")
    h = dense_forward(model.hidden, np.asarray(x, dtype=np.float64))

    def draw(i: int) -> np.ndarray:
        s = sample_weights(model.output.params, stream.derive(i))
        w, b = model.output.unflatten(s.theta)
        return softmax(h @ w + b)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(draw, range(n)))
    else:
        rows = [draw(i) for i in range(n)]
    return predictive_from_samples(np.array(rows), level)


def predict_deterministic(model: HeadModel, x, level: float = 0.95) -> PredictiveResult:
    """Single-pass prediction (posterior mean / point weights); zero variance."""
    probs = softmax(mean_forward(model, np.asarray(x, dtype=np.float64)))
    return predictive_from_samples(probs[None, :], level)


def referral_decision(
    result: PredictiveResult,
    uncertainty_threshold: float,
    confidence_threshold: float,
) -> ReferralDecision:
    """Refer when predictive variance is too high or confidence too low."""
    if uncertainty_threshold < 0.0:
        raise ValueError("uncertainty threshold must be >= 0")
    if not 0.0 < confidence_threshold <= 1.0:
        raise ValueError("confidence threshold must lie in (0, 1]")
    if result.uncertainty_scalar > uncertainty_threshold:
        return ReferralDecision("refer", uncertainty_threshold, "uncertainty_scalar")
    if float(result.mean_probs.max()) < confidence_threshold:
        return ReferralDecision("refer", confidence_threshold, "confidence")
    return ReferralDecision("accept", uncertainty_threshold, "uncertainty_scalar")
