import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedunlearn import (PrivacyState, clip_update, gaussian_noise_update, next_budget,
                        noise_sigma)
from fedunlearn.errors import NumericError, ParameterError
from fedunlearn.rng import rng_stream

# mpmath oracle value (40 digits) for sigma(eps=3, delta=1e-5, S=1).
SIGMA_3_1E5_1 = 1.614935087535129807086214052528531310506


def _state(eps_t=1.0, eps_min=0.1, eps_max=3.0, prev_loss=0.0):
    return PrivacyState(
        epsilon_t=eps_t, epsilon_min=eps_min, epsilon_max=eps_max,
        delta=1e-5, clip_norm=1.0, prev_loss=prev_loss,
    )


class TestNextBudget:
    def test_doubles_when_loss_jump_is_ln2(self):
        state = _state(eps_t=1.0, prev_loss=0.0)
        assert next_budget(state, math.log(2.0)) == pytest.approx(2.0, rel=1e-15)

    def test_clamped_at_max(self):
        state = _state(eps_t=3.0, prev_loss=0.0)
        assert next_budget(state, 5.0) == 3.0

    def test_no_change_keeps_budget(self):
        state = _state(eps_t=3.0, prev_loss=1.0)
        assert next_budget(state, 1.0) == 3.0

    def test_records_loss_and_budget(self):
        state = _state(eps_t=1.0, prev_loss=0.5)
        out = next_budget(state, 0.75)
        assert state.prev_loss == 0.75
        assert state.epsilon_t == out

    def test_non_finite_loss_rejected(self):
        state = _state()
        with pytest.raises(NumericError):
            next_budget(state, float("nan"))

    def test_huge_loss_jump_saturates(self):
        state = _state(eps_t=0.5, prev_loss=0.0)
        assert next_budget(state, 1e6) == 3.0

    def test_monotone_in_loss_change(self):
        results = []
        for jump in (0.0, 0.1, 0.2, 0.5, 1.0):
            state = _state(eps_t=0.2, prev_loss=0.0)
            results.append(next_budget(state, jump))
        assert results == sorted(results)

    @settings(max_examples=200)
    @given(st.lists(st.floats(-50.0, 50.0, allow_nan=False), min_size=1, max_size=30))
    def test_budget_always_clamped(self, losses):
        state = _state(eps_t=0.7)
        for loss in losses:
            eps = next_budget(state, loss)
            assert 0.1 <= eps <= 3.0


class TestNoiseSigma:
    def test_matches_high_precision_oracle(self):
        assert noise_sigma(3.0, 1e-5, 1.0) == pytest.approx(SIGMA_3_1E5_1, rel=1e-12)

    def test_inverse_in_epsilon(self):
        assert noise_sigma(2.0, 1e-5, 1.0) == noise_sigma(1.0, 1e-5, 1.0) / 2.0

    def test_linear_in_clip_norm(self):
        assert noise_sigma(1.0, 1e-5, 2.0) == 2.0 * noise_sigma(1.0, 1e-5, 1.0)

    @pytest.mark.parametrize("eps,delta,clip", [(0.0, 1e-5, 1.0), (1.0, 0.0, 1.0),
                                                (1.0, 1.0, 1.0), (1.0, 1e-5, 0.0)])
    def test_domain_violations(self, eps, delta, clip):
        with pytest.raises(ParameterError):
            noise_sigma(eps, delta, clip)

    def test_strictly_monotone(self):
        base = noise_sigma(1.0, 1e-5, 1.0)
        assert noise_sigma(1.5, 1e-5, 1.0) < base
        assert noise_sigma(1.0, 1e-5, 1.5) > base
        assert noise_sigma(1.0, 1e-4, 1.0) < base


class TestClipUpdate:
    def test_rescales_above_threshold(self):
        np.testing.assert_allclose(clip_update([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)

    def test_below_threshold_bitwise_unchanged(self):
        g = np.array([0.1, 0.0])
        out = clip_update(g, 1.0)
        assert out.tobytes() == g.tobytes()

    def test_zero_vector(self):
        np.testing.assert_array_equal(clip_update([0.0, 0.0], 1.0), [0.0, 0.0])

    @settings(max_examples=300)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=12),
           st.floats(1e-3, 1e2))
    def test_norm_never_exceeds_threshold(self, values, clip):
        out = clip_update(np.array(values), clip)
        assert np.linalg.norm(out) <= clip * (1.0 + 1e-12)


class TestGaussianNoise:
    def test_sigma_zero_is_identity(self):
        g = np.array([1.0, -2.0, 3.0])
        out = gaussian_noise_update(g, 0.0, 1.0, rng_stream(0, "noise"))
        np.testing.assert_array_equal(out, g)

    def test_moment_statistics(self):
        # Statistical oracle: mean within 4*sigma*S/sqrt(n), std within 2%.
        g = np.array([0.25, -0.5])
        sigma, clip = 0.8, 1.5
        rng = rng_stream(123, "noise-stats")
        draws = np.stack([gaussian_noise_update(g, sigma, clip, rng) for _ in range(20_000)])
        scale = sigma * clip
        tol = 4.0 * scale / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - g) < tol)
        assert np.all(np.abs(draws.std(axis=0) - scale) < 0.02 * scale)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ParameterError):
            gaussian_noise_update([1.0], -1.0, 1.0, rng_stream(0, "noise"))


def test_privacy_state_invariants():
    with pytest.raises(ParameterError):
        PrivacyState(epsilon_t=0.05, epsilon_min=0.1, epsilon_max=3.0, delta=1e-5, clip_norm=1.0)
    with pytest.raises(ParameterError):
        PrivacyState(epsilon_t=1.0, epsilon_min=2.0, epsilon_max=1.0, delta=1e-5, clip_norm=1.0)
    with pytest.raises(ParameterError):
        PrivacyState(epsilon_t=1.0, epsilon_min=0.1, epsilon_max=3.0, delta=1.5, clip_norm=1.0)
