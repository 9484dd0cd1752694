"""Synthetic dataset generation, client partitioning, and backdoor injection.

The synthetic task is a Gaussian-mixture classification problem: class 0 is
centred at the origin and each further class mean sits ``separation * sigma``
away along its own axis, so exactly ``num_classes - 1`` features carry class
signal and the rest are noise. Features are min-max normalized to [0, 1]
over the generated set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import FormatError, ParameterError
from .rng import rng_stream

__all__ = [
    "Sample",
    "Dataset",
    "TriggerSpec",
    "ClientPartition",
    "generate_synthetic",
    "train_test_split",
    "partition",
    "apply_backdoor",
    "load_mnist_idx",
]

_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """A labelled feature matrix; rows are samples."""

    features: np.ndarray  # (n, dim) float64
    labels: np.ndarray  # (n,) int64, values in [0, num_classes)
    num_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ParameterError("features must be (n, dim) and labels (n,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ParameterError("features and labels disagree on sample count")
        if self.labels.size and not (0 <= self.labels.min() and self.labels.max() < self.num_classes):
            raise ParameterError("labels out of range for num_classes")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class TriggerSpec:
    """A fixed-value feature-block trigger with a dirty target label."""

    feature_indices: tuple
    trigger_value: float
    target_label: int
    poison_fraction: float

    def __post_init__(self) -> None:
        # An empty index tuple is legal: a label-only (no-op trigger) attack.
        object.__setattr__(self, "feature_indices", tuple(int(i) for i in self.feature_indices))
        if not (0.0 < self.poison_fraction <= 1.0):
            raise ParameterError("poison_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class ClientPartition:
    """One client's local slice of the training data."""

    client_id: int
    data: Dataset
    poisoned: bool = False
    poison_spec: Optional[TriggerSpec] = None

    def __post_init__(self) -> None:
        if len(self.data) == 0:
            raise ParameterError("client partitions must be non-empty")

    def __len__(self) -> int:
        return len(self.data)


def generate_synthetic(
    num_classes: int,
    dim: int,
    per_class: int,
    seed: int,
    separation: float = 4.0,
    sigma: float = 1.0,
) -> Dataset:
    """Draw a shuffled, normalized Gaussian-mixture classification dataset.

    ``separation`` is the minimum pairwise distance between class means in
    units of the per-class standard deviation ``sigma``. Deterministic for
    a given argument tuple.
    """
    if num_classes < 2:
        raise ParameterError("need at least two classes")
    if dim < 2:
        raise ParameterError("need feature dimension >= 2")
    if per_class < 1:
        raise ParameterError("need at least one sample per class")
    if num_classes - 1 > dim:
        raise ParameterError("need dim >= num_classes - 1 to place the class means")
    if separation <= 0 or sigma <= 0:
        raise ParameterError("separation and sigma must be positive")

    rng = rng_stream(seed, "synthetic-data")
    means = np.zeros((num_classes, dim))
    for k in range(1, num_classes):
        means[k, k - 1] = separation * sigma
    features = np.vstack(
        [rng.normal(means[k], sigma, size=(per_class, dim)) for k in range(num_classes)]
    )
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)

    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    features = (features - lo) / span

    order = rng.permutation(len(labels))
    return Dataset(features[order], labels[order], num_classes)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple:
    """Deterministic shuffle split into (train, test)."""
    if not (0.0 < test_fraction < 1.0):
        raise ParameterError("test_fraction must lie in (0, 1)")
    n = len(dataset)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ParameterError("split leaves an empty side")
    order = rng_stream(seed, "train-test-split").permutation(n)
    return dataset.subset(order[n_test:]), dataset.subset(order[:n_test])


def partition(
    dataset: Dataset,
    num_clients: int,
    scheme: str = "iid",
    seed: int = 0,
    alpha: float = 0.5,
    max_retries: int = 100,
) -> list:
    """Split a dataset into disjoint per-client partitions covering it exactly.

    ``iid`` deals a uniform shuffle round-robin, so client sizes differ by at
    most one. ``dirichlet`` draws per-client class proportions from
    Dirichlet(alpha) and redraws until every client is non-empty.
    """
    if num_clients < 2:
        raise ParameterError("need at least two clients")
    if len(dataset) < num_clients:
        raise ParameterError("fewer samples than clients")

    if scheme == "iid":
        order = rng_stream(seed, "partition-iid").permutation(len(dataset))
        chunks = np.array_split(order, num_clients)
    elif scheme == "dirichlet":
        if alpha <= 0:
            raise ParameterError("dirichlet alpha must be positive")
        rng = rng_stream(seed, "partition-dirichlet")
        for _ in range(max_retries):
            assignments = [[] for _ in range(num_clients)]
            for k in range(dataset.num_classes):
                rows = np.flatnonzero(dataset.labels == k)
                rows = rng.permutation(rows)
                props = rng.dirichlet(np.full(num_clients, alpha))
                cuts = (np.cumsum(props)[:-1] * len(rows)).round().astype(int)
                for c, part in enumerate(np.split(rows, cuts)):
                    assignments[c].extend(part.tolist())
            if all(len(a) > 0 for a in assignments):
                chunks = [np.array(sorted(a), dtype=np.int64) for a in assignments]
                break
        else:
            raise ParameterError(
                f"could not draw a dirichlet({alpha}) partition with non-empty clients"
            )
    else:
        raise ParameterError(f"unknown partition scheme: {scheme!r}")

    return [ClientPartition(c, dataset.subset(idx)) for c, idx in enumerate(chunks)]


def apply_backdoor(part: ClientPartition, spec: TriggerSpec, seed: int) -> ClientPartition:
    """Poison a fraction of a partition: stamp the trigger, flip the label.

    Affected rows are chosen deterministically from ``seed``. Everything
    outside the selected rows (and outside the trigger columns within them)
    is bit-identical to the input.
    """
    if part.poisoned:
        raise ParameterError(f"client {part.client_id} is already poisoned")
    data = part.data
    idx = np.asarray(spec.feature_indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= data.dim):
        raise ParameterError("trigger feature indices out of range")
    if not (0 <= spec.target_label < data.num_classes):
        raise ParameterError("trigger target label out of range")

    n = len(data)
    count = max(1, int(np.floor(spec.poison_fraction * n + 0.5)))
    rows = rng_stream(seed, "backdoor", part.client_id).permutation(n)[:count]

    features = data.features.copy()
    labels = data.labels.copy()
    features[np.ix_(rows, idx)] = spec.trigger_value
    labels[rows] = spec.target_label
    poisoned = Dataset(features, labels, data.num_classes)
    return replace(part, data=poisoned, poisoned=True, poison_spec=spec)


def _read_exact(fh, count: int, path: str, what: str) -> bytes:
    offset = fh.tell()
    blob = fh.read(count)
    if len(blob) != count:
        raise FormatError(f"{path}: truncated {what} at offset {offset} "
                          f"(wanted {count} bytes, got {len(blob)})")
    return blob


def load_mnist_idx(images_path: str, labels_path: str, limit: Optional[int] = None) -> Dataset:
    """Load the classic big-endian IDX image/label pair, pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != _IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad magic 0x{magic:08x} at offset 0 "
                              f"(expected 0x{_IMAGES_MAGIC:08x})")
        take = count if limit is None else min(int(limit), count)
        raw = _read_exact(fh, take * rows * cols, images_path, "pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(take, rows * cols)

    with open(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != _LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad magic 0x{magic:08x} at offset 0 "
                              f"(expected 0x{_LABELS_MAGIC:08x})")
        if lcount != count:
            raise FormatError(f"{labels_path}: {lcount} labels but {count} images")
        raw = _read_exact(fh, take, labels_path, "label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label {labels.max()} out of range 0-9")
    return Dataset(pixels.astype(np.float64) / 255.0, labels, num_classes=10)
