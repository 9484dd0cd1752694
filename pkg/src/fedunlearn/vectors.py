"""Dense float64 vector primitives used throughout the simulator.

Model parameters, client updates, and aggregates are all flat
``numpy.ndarray`` vectors of float64. The helpers here add the shape and
degeneracy checks the higher layers rely on.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, DimensionError, NumericError

__all__ = ["as_vector", "check_finite", "dot", "l2_norm", "cosine_similarity", "relu"]


def as_vector(values) -> np.ndarray:
    """Coerce to a 1-D float64 array (copying only when needed)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def check_finite(vec: np.ndarray, what: str = "vector") -> np.ndarray:
    """Raise NumericError if any entry is NaN or infinite."""
    if not np.all(np.isfinite(vec)):
        raise NumericError(f"{what} contains non-finite entries")
    return vec


def _require_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a, b) -> float:
    """Scalar product of two equal-length vectors."""
    a, b = as_vector(a), as_vector(b)
    _require_same_length(a, b)
    return float(a @ b)


def l2_norm(a) -> float:
    """Euclidean norm; always >= 0."""
    return float(np.linalg.norm(as_vector(a)))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two nonzero vectors, clamped to [-1, 1].

    The clamp protects downstream ReLU/comparison logic from the ~1e-16
    overshoot that floating-point dot/norm arithmetic can produce.
    """
    a, b = as_vector(a), as_vector(b)
    _require_same_length(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity is undefined for zero-norm vectors")
    # normalize before the product so extreme magnitudes cannot overflow
    return float(np.clip(float((a / na) @ (b / nb)), -1.0, 1.0))


def relu(x: float) -> float:
    """max(0, x) for scalars."""
    return x if x > 0.0 else 0.0
