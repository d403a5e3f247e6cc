import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayeshead import (
    PredictiveResult,
    RngStream,
    TrainConfig,
    VariantError,
    credible_interval,
    entropy_bits,
    init_bayes_model,
    predict_deterministic,
    predict_mc,
    predictive_from_samples,
    referral_decision,
    softmax,
)

prob_rows = st.lists(
    st.floats(min_value=-5.0, max_value=5.0, allow_nan=False).map(lambda x: [x, -x]),
    min_size=1,
    max_size=20,
).map(lambda rows: np.array([softmax(r) for r in rows]))


class TestPredictiveFromSamples:
    def test_hand_computed_mean_and_variance(self):
        result = predictive_from_samples(np.array([[0.2, 0.8], [0.4, 0.6]]))
        assert np.allclose(result.mean_probs, [0.3, 0.7], atol=1e-12)
        assert np.allclose(result.var_probs, [0.01, 0.01], atol=1e-12)
        assert result.predicted_class == 1
        assert result.uncertainty_scalar == pytest.approx(0.01, abs=1e-12)

    def test_single_draw_degeneracy(self):
        result = predictive_from_samples(np.array([[0.9, 0.1]]))
        assert np.array_equal(result.mean_probs, [0.9, 0.1])
        assert np.array_equal(result.var_probs, [0.0, 0.0])
        assert np.array_equal(result.ci_low, result.ci_high)

    def test_mean_is_exact_column_mean(self):
        probs = np.array([softmax(RngStream(1).derive(i).normal(3)) for i in range(40)])
        result = predictive_from_samples(probs)
        assert np.array_equal(result.mean_probs, probs.sum(axis=0) / 40)

    @given(prob_rows)
    def test_two_class_variance_symmetry(self, probs):
        result = predictive_from_samples(probs)
        assert abs(result.var_probs[0] - result.var_probs[1]) < 1e-12

    @given(prob_rows)
    def test_result_invariants(self, probs):
        result = predictive_from_samples(probs)
        assert abs(result.mean_probs.sum() - 1.0) < 1e-9
        assert np.all(result.var_probs >= 0.0)
        assert 0.0 <= result.entropy_bits <= 1.0 + 1e-12  # log2 of 2 classes
        assert np.all(result.ci_low <= result.ci_high)
        assert result.predicted_class == int(np.argmax(result.mean_probs))
        assert result.uncertainty_scalar == float(result.var_probs.max())

    @given(prob_rows)
    def test_entropy_of_mean_at_least_mean_entropy(self, probs):
        # Jensen: entropy is concave
        result = predictive_from_samples(probs)
        per_draw = np.mean([entropy_bits(row) for row in probs])
        assert result.entropy_bits >= per_draw - 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            predictive_from_samples(np.empty((0, 2)))
        with pytest.raises(ValueError):
            predictive_from_samples(np.array([[0.7, 0.7]]))


class TestEntropyBits:
    def test_degenerate_distribution(self):
        assert entropy_bits([1.0, 0.0]) == 0.0

    def test_binary_maximum(self):
        assert entropy_bits([0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)

    def test_hand_binary_entropy(self):
        expected = -(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
        assert entropy_bits([0.9, 0.1]) == pytest.approx(expected, abs=1e-12)
        assert entropy_bits([0.9, 0.1]) == pytest.approx(0.468996, abs=1e-6)

    def test_bounded_by_log_classes(self):
        for c in (2, 3, 5):
            p = np.full(c, 1.0 / c)
            assert entropy_bits(p) <= math.log2(c) + 1e-12

    def test_rejects_nonprobability(self):
        with pytest.raises(ValueError):
            entropy_bits([0.5, 0.6])
        with pytest.raises(ValueError):
            entropy_bits([1.2, -0.2])
        with pytest.raises(ValueError):
            entropy_bits([])


class TestCredibleInterval:
    def test_constant_samples(self):
        assert credible_interval([2.5, 2.5, 2.5], 0.95) == (2.5, 2.5)

    def test_full_level_is_min_max(self):
        samples = [0.3, 0.9, 0.1, 0.5]
        assert credible_interval(samples, 1.0) == (0.1, 0.9)

    def test_uniform_grid_percentiles(self):
        samples = np.linspace(0.0, 1.0, 101)
        low, high = credible_interval(samples, 0.95)
        assert low == pytest.approx(0.025, abs=1e-12)
        assert high == pytest.approx(0.975, abs=1e-12)

    def test_rejects_empty_and_bad_level(self):
        with pytest.raises(ValueError):
            credible_interval([], 0.95)
        with pytest.raises(ValueError):
            credible_interval([1.0], 0.0)
        with pytest.raises(ValueError):
            credible_interval([1.0], 1.5)

    @given(
        st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=1, max_size=30),
        st.floats(min_value=0.5, max_value=1.0),
    )
    def test_bounds_and_median_containment(self, samples, level):
        low, high = credible_interval(samples, level)
        assert min(samples) <= low <= high <= max(samples)
        median = float(np.percentile(samples, 50.0))
        assert low - 1e-12 <= median <= high + 1e-12


def _result_with(uncertainty: float, top_prob: float) -> PredictiveResult:
    mean = np.array([top_prob, 1.0 - top_prob])
    return PredictiveResult(
        sample_probs=mean[None, :],
        mean_probs=mean,
        var_probs=np.full(2, uncertainty),
        entropy_bits=entropy_bits(mean),
        ci_low=mean,
        ci_high=mean,
        predicted_class=int(mean.argmax()),
        uncertainty_scalar=uncertainty,
    )


class TestReferralDecision:
    def test_low_uncertainty_accepted(self):
        decision = referral_decision(_result_with(0.00419, 1.0), 0.01, 0.99)
        assert decision.action == "accept"

    def test_high_uncertainty_referred(self):
        decision = referral_decision(_result_with(0.03669, 1.0), 0.01, 0.99)
        assert decision.action == "refer"
        assert decision.basis == "uncertainty_scalar"
        assert decision.threshold_used == 0.01

    def test_certain_prediction_always_accepted(self):
        decision = referral_decision(_result_with(0.0, 1.0), 0.0, 1.0)
        assert decision.action == "accept"

    def test_low_confidence_referred(self):
        decision = referral_decision(_result_with(0.0, 0.6), 0.01, 0.99)
        assert decision.action == "refer"
        assert decision.basis == "confidence"
        assert decision.threshold_used == 0.99

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            referral_decision(_result_with(0.0, 1.0), -0.1, 0.99)
        with pytest.raises(ValueError):
            referral_decision(_result_with(0.0, 1.0), 0.1, 0.0)


class TestPredictMc:
    def test_single_draw(self, tiny_bayes):
        x = np.array([1.0, 0.5])
        result = predict_mc(tiny_bayes, x, 1, RngStream(12))
        assert result.sample_probs.shape == (1, 2)
        assert np.array_equal(result.mean_probs, result.sample_probs[0])
        assert np.array_equal(result.var_probs, [0.0, 0.0])

    def test_zero_sigma_collapses(self):
        model = init_bayes_model(2, 2, TrainConfig(hidden_dim=4, seed=1))
        model.output.params.rho = np.full(len(model.output.params), -1e6)
        result = predict_mc(model, np.array([0.4, -0.2]), 7, RngStream(3))
        assert np.all(result.sample_probs == result.sample_probs[0])
        assert np.array_equal(result.var_probs, [0.0, 0.0])

    def test_does_not_advance_stream_and_reproduces(self, tiny_bayes):
        stream = RngStream(9).derive(4)
        x = np.array([-0.5, 0.3])
        a = predict_mc(tiny_bayes, x, 20, stream)
        assert stream.counter == 0
        b = predict_mc(tiny_bayes, x, 20, stream)
        assert np.array_equal(a.sample_probs, b.sample_probs)

    def test_workers_do_not_change_bits(self, tiny_bayes):
        x = np.array([0.7, -1.2])
        serial = predict_mc(tiny_bayes, x, 24, RngStream(4), workers=1)
        threaded = predict_mc(tiny_bayes, x, 24, RngStream(4), workers=4)
        assert np.array_equal(serial.sample_probs, threaded.sample_probs)
        assert np.array_equal(serial.mean_probs, threaded.mean_probs)
        assert serial.entropy_bits == threaded.entropy_bits

    def test_rejects_baseline_and_zero_draws(self, tiny_bayes, tiny_baseline):
        with pytest.raises(VariantError):
            predict_mc(tiny_baseline, np.zeros(2), 5, RngStream(0))
        with pytest.raises(ValueError):
            predict_mc(tiny_bayes, np.zeros(2), 0, RngStream(0))

    def test_deterministic_prediction_for_baseline(self, tiny_baseline):
        result = predict_deterministic(tiny_baseline, np.array([2.0, 0.0]))
        assert result.sample_probs.shape == (1, 2)
        assert np.array_equal(result.var_probs, [0.0, 0.0])
        assert result.uncertainty_scalar == 0.0
