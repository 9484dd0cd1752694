"""Adaptive privacy-budget allocation and the clipped Gaussian mechanism.

The budget for the next round grows exponentially with the absolute change
in training loss and is clamped to a configured interval. Updates are norm
clipped to a threshold and perturbed with Gaussian noise whose scale is the
classic analytic function of (budget, delta, threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError
from .vectors import as_vector

__all__ = ["PrivacyState", "next_budget", "noise_sigma", "clip_update", "gaussian_noise_update"]

# math.exp overflows above ~709.78; the clamp makes anything that large
# saturate at epsilon_max anyway.
_EXP_ARG_CAP = 709.0


@dataclass
class PrivacyState:
    """Mutable budget-allocation state owned by the training coordinator.

    Attributes:
        epsilon_t: budget in force for the current round.
        epsilon_min / epsilon_max: clamp interval for the budget.
        delta: slack probability of the privacy guarantee, in (0, 1).
        clip_norm: L2 threshold the updates are clipped to.
        prev_loss: last global training loss seen by the allocator.
    """

    epsilon_t: float
    epsilon_min: float
    epsilon_max: float
    delta: float
    clip_norm: float
    prev_loss: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon_min <= self.epsilon_max):
            raise ParameterError("need 0 < epsilon_min <= epsilon_max")
        if not (self.epsilon_min <= self.epsilon_t <= self.epsilon_max):
            raise ParameterError("epsilon_t must lie within [epsilon_min, epsilon_max]")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError("delta must lie in (0, 1)")
        if self.clip_norm <= 0.0:
            raise ParameterError("clip_norm must be positive")


def next_budget(state: PrivacyState, current_loss: float) -> float:
    """Advance the budget: epsilon <- clamp(epsilon * e^|prev - current|).

    Mutates ``state``: stores the new budget and records ``current_loss``
    as the reference for the next call. Returns the new budget.
    """
    if not math.isfinite(current_loss):
        raise NumericError(f"training loss is not finite: {current_loss!r}")
    delta_loss = abs(state.prev_loss - current_loss)
    raw = state.epsilon_t * math.exp(min(delta_loss, _EXP_ARG_CAP))
    state.epsilon_t = min(max(raw, state.epsilon_min), state.epsilon_max)
    state.prev_loss = current_loss
    return state.epsilon_t


def noise_sigma(epsilon: float, delta: float, clip_norm: float) -> float:
    """Noise multiplier clip_norm * sqrt(2 ln(1.25/delta)) / epsilon."""
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not (0.0 < delta < 1.0):
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if clip_norm <= 0.0:
        raise ParameterError(f"clip_norm must be positive, got {clip_norm}")
    return clip_norm * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def clip_update(update, clip_norm: float) -> np.ndarray:
    """Scale an update down to L2 norm ``clip_norm`` if it exceeds it.

    Vectors at or under the threshold pass through bitwise unchanged.
    """
    if clip_norm <= 0.0:
        raise ParameterError(f"clip_norm must be positive, got {clip_norm}")
    g = as_vector(update)
    divisor = max(1.0, float(np.linalg.norm(g)) / clip_norm)
    return g / divisor


def gaussian_noise_update(
    clipped, sigma: float, clip_norm: float, rng: np.random.Generator
) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation sigma * clip_norm.

    With sigma == 0 the input is returned unchanged (modulo a copy), so a
    zero-noise override run is bit-compatible with skipping the mechanism.
    """
    if sigma < 0.0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    g = as_vector(clipped)
    if sigma == 0.0:
        return g.copy()
    return g + rng.normal(0.0, sigma * clip_norm, size=g.shape)
