"""Attack-oriented evaluation: accuracy, membership inference, backdoor success.

The membership probe follows the shadow-model recipe: a binary logistic
classifier is fitted on the logit vectors a trained global model produces
for known member data (class 1) versus held-out test data (class 0), then
applied to fresh logits from whichever model is under evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, TriggerSpec
from .errors import ParameterError, StateError
from .models import ModelState, forward_logits
from .rng import rng_stream

__all__ = ["ShadowModel", "EvalReport", "test_accuracy", "train_shadow",
           "shadow_predict", "misr", "asr"]


@dataclass
class ShadowModel:
    """Binary logistic membership classifier over logit vectors."""

    weights: np.ndarray  # (num_classes,)
    bias: float
    trained: bool = False

    def scores(self, logits: np.ndarray) -> np.ndarray:
        """Membership probabilities for an (n, num_classes) logit matrix."""
        if not self.trained:
            raise StateError("shadow model has not been trained")
        z = np.asarray(logits, dtype=np.float64) @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-z))


def shadow_predict(shadow: ShadowModel, logits: np.ndarray) -> np.ndarray:
    """Hard 0/1 membership decisions (threshold 0.5)."""
    return (shadow.scores(logits) >= 0.5).astype(np.int64)


def test_accuracy(model: ModelState, test_set: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties resolve to the lowest class."""
    if len(test_set) == 0:
        raise ParameterError("test set is empty")
    predictions = np.argmax(forward_logits(model, test_set.features), axis=1)
    return float(np.mean(predictions == test_set.labels))


def _fit_binary_logistic(x: np.ndarray, y: np.ndarray, epochs: int, lr: float) -> ShadowModel:
    w = np.zeros(x.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(x @ w + b)))
        err = p - y
        w -= lr * (x.T @ err) / n
        b -= lr * float(err.mean())
    return ShadowModel(weights=w, bias=b, trained=True)


def train_shadow(
    fl_model: ModelState,
    member_data: Dataset,
    nonmember_data: Dataset,
    seed: int,
    epochs: int = 400,
    lr: float = 0.5,
) -> ShadowModel:
    """Fit the membership classifier on logits from a trained global model.

    Class balance is enforced by truncating the larger side to the smaller
    side's size after a seeded shuffle, so results are deterministic per seed.
    """
    if len(member_data) == 0 or len(nonmember_data) == 0:
        raise ParameterError("shadow training needs non-empty member and nonmember sets")
    rng = rng_stream(seed, "shadow-balance")
    n = min(len(member_data), len(nonmember_data))
    member_rows = rng.permutation(len(member_data))[:n]
    nonmember_rows = rng.permutation(len(nonmember_data))[:n]
    member_logits = forward_logits(fl_model, member_data.features[member_rows])
    nonmember_logits = forward_logits(fl_model, nonmember_data.features[nonmember_rows])
    x = np.vstack([member_logits, nonmember_logits])
    y = np.concatenate([np.ones(n), np.zeros(n)])
    return _fit_binary_logistic(x, y, epochs, lr)


def misr(
    shadow: ShadowModel,
    eval_model: ModelState,
    target_train: Dataset,
    test_sample: Dataset,
    combined: bool = True,
) -> float:
    """Membership-inference success rate under a given evaluation model.

    The evaluation set is the target clients' training data plus an
    equal-size test sample that must be disjoint from the shadow's training
    nonmembers; the rate is the fraction of it the shadow labels as member.
    ``combined=False`` scores the target data alone, the way the attack is
    usually reported while training is still in place.
    """
    if not shadow.trained:
        raise StateError("shadow model has not been trained")
    if len(target_train) == 0:
        raise ParameterError("target training data is empty")
    member_votes = shadow_predict(shadow, forward_logits(eval_model, target_train.features))
    if not combined:
        return float(member_votes.mean())
    if len(test_sample) < len(target_train):
        raise ParameterError(
            f"need at least {len(target_train)} disjoint test samples, got {len(test_sample)}"
        )
    probe = test_sample.features[: len(target_train)]
    test_votes = shadow_predict(shadow, forward_logits(eval_model, probe))
    return float(np.concatenate([member_votes, test_votes]).mean())


def asr(model: ModelState, holdout: Dataset, trigger: TriggerSpec) -> float:
    """Backdoor attack success rate on a triggered copy of ``holdout``.

    Samples already labelled with the trigger's target class are excluded,
    then every remaining sample gets the trigger stamped in and the rate is
    the fraction predicted as the target class.
    """
    if len(holdout) == 0:
        raise ParameterError("holdout set is empty")
    keep = holdout.labels != trigger.target_label
    if not np.any(keep):
        raise ParameterError("no holdout samples left after excluding the target class")
    features = holdout.features[keep].copy()
    idx = np.asarray(trigger.feature_indices, dtype=np.int64)
    if idx.size:
        if idx.min() < 0 or idx.max() >= features.shape[1]:
            raise ParameterError("trigger feature indices out of range for this data")
        features[:, idx] = trigger.trigger_value
    predictions = np.argmax(forward_logits(model, features), axis=1)
    return float(np.mean(predictions == trigger.target_label))


@dataclass
class EvalReport:
    """One evaluation snapshot; attack metrics are optional."""

    phase: str  # "post_fl" or "post_unlearn"
    test_accuracy: float
    misr: Optional[float] = None
    asr: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("test_accuracy", "misr", "asr"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0):
                raise ParameterError(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> dict:
        return {
            "type": "eval",
            "phase": self.phase,
            "test_accuracy": self.test_accuracy,
            "misr": self.misr,
            "asr": self.asr,
        }
