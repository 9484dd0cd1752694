"""Server-side aggregation rules for client updates.

Three rules are provided: dataset-size-weighted averaging, trimmed mean,
and coordinate-wise median. The robust rules operate on unweighted order
statistics per coordinate.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError
from .vectors import as_vector

__all__ = ["WeightedUpdate", "fedavg", "trimmed_mean", "coordinate_median", "aggregate"]


class WeightedUpdate(NamedTuple):
    update: np.ndarray
    weight: float


def _stack(updates: Sequence) -> np.ndarray:
    if len(updates) == 0:
        raise ParameterError("aggregation requires at least one update")
    rows = [as_vector(u) for u in updates]
    dim = rows[0].shape[0]
    for r in rows[1:]:
        if r.shape[0] != dim:
            raise ParameterError("updates must all have the same length")
    return np.stack(rows)


def fedavg(inputs: Sequence[WeightedUpdate]) -> np.ndarray:
    """Weighted mean of updates, weights typically the client dataset sizes."""
    if len(inputs) == 0:
        raise ParameterError("fedavg requires at least one update")
    weights = np.array([float(w) for _, w in inputs])
    if np.any(weights <= 0):
        raise ParameterError("fedavg weights must be positive")
    mat = _stack([u for u, _ in inputs])
    if len(inputs) == 1:
        return mat[0].copy()  # exact identity, no weight round-trip
    return (weights[:, None] * mat).sum(axis=0) / weights.sum()


def trimmed_mean(updates: Sequence[np.ndarray], trim_fraction: float) -> np.ndarray:
    """Per coordinate: sort, drop floor(trim_fraction*n) from each end, average."""
    if not 0.0 <= trim_fraction < 0.5:
        raise ParameterError(f"trim_fraction must be in [0, 0.5), got {trim_fraction}")
    mat = _stack(updates)
    n = mat.shape[0]
    k = math.floor(trim_fraction * n)
    if n - 2 * k < 1:
        raise ParameterError(f"trimming {k} from each end of {n} updates leaves nothing")
    kept = np.sort(mat, axis=0)[k : n - k]
    # Accumulate rows sequentially in ascending order so a plain
    # sort-and-sum reference computation reproduces the result bit for bit.
    total = kept[0].copy()
    for row in kept[1:]:
        total += row
    return total / kept.shape[0]


def coordinate_median(updates: Sequence[np.ndarray]) -> np.ndarray:
    """Per coordinate, the lower median (the (n-1)//2-th order statistic)."""
    mat = _stack(updates)
    return np.sort(mat, axis=0)[(mat.shape[0] - 1) // 2]


def aggregate(rule: str, inputs: Sequence[WeightedUpdate], trim_fraction: float = 0.2) -> np.ndarray:
    """Dispatch to the configured rule; robust rules ignore the weights."""
    if rule == "fedavg":
        return fedavg(inputs)
    if rule == "trimmed_mean":
        return trimmed_mean([u for u, _ in inputs], trim_fraction)
    if rule == "median":
        return coordinate_median([u for u, _ in inputs])
    raise ParameterError(f"unknown aggregation rule: {rule!r}")
