"""Calibration-based removal of target clients from a trained model.

Unlearning replays the archived rounds starting from the earliest archived
global model. At each replayed round the remaining contributors of that
round retrain locally from the current replay model; each fresh update is
then calibrated - rescaled onto its own direction by the archived update's
magnitude and the direction consistency between the two - and the weighted
calibrated updates drive the replay model forward. Target clients'
partitions are never touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .archive import Archive
from .data import ClientPartition
from .errors import NumericError, ParameterError, UnlearningImpossibleError
from .fl import FlConfig
from .models import ModelSpec, ModelState, sgd_local_train
from .privacy import clip_update, gaussian_noise_update, noise_sigma
from .rng import rng_stream
from .vectors import as_vector

__all__ = ["UnlearnRequest", "UnlearnRecord", "calibrate_update",
           "aggregate_calibrated", "run_unlearning"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnlearnRequest:
    """The set of clients whose influence must be removed."""

    target_clients: FrozenSet[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_clients", frozenset(int(c) for c in self.target_clients))
        if not self.target_clients:
            raise ParameterError("an unlearning request needs at least one target client")


@dataclass
class UnlearnRecord:
    """Per replayed archived round: who participated, or why it was skipped."""

    round: int
    clients_trained: int
    skipped: bool
    update_norm: float

    def to_dict(self) -> dict:
        return {
            "type": "unlearn_round",
            "round": self.round,
            "clients_trained": self.clients_trained,
            "skipped": self.skipped,
            "update_norm": self.update_norm,
        }


def calibrate_update(historical, fresh) -> np.ndarray:
    """Project the archived update onto the fresh update's direction.

    Returns cos(theta) * (|historical| / |fresh|) * fresh, which equals the
    orthogonal projection of the historical update onto the line spanned by
    the fresh one. Either input having zero norm yields the zero vector:
    no direction may be injected that the fresh data does not support.
    """
    h = as_vector(historical)
    f = as_vector(fresh)
    if h.shape != f.shape:
        raise ParameterError(f"length mismatch: {h.shape[0]} vs {f.shape[0]}")
    norm_h = float(np.linalg.norm(h))
    norm_f = float(np.linalg.norm(f))
    if norm_h == 0.0 or norm_f == 0.0:
        return np.zeros_like(f)
    cos_theta = float(np.clip(float(h @ f) / (norm_h * norm_f), -1.0, 1.0))
    return cos_theta * (norm_h / norm_f) * f


def aggregate_calibrated(
    updates: Sequence[Tuple[np.ndarray, float]],
    total_weight: Optional[float] = None,
) -> np.ndarray:
    """Weighted combination sum(w_i * u_i) / total_weight.

    With ``total_weight`` omitted the given weights are normalized among
    themselves; passing the full remaining-dataset size instead keeps the
    denominator fixed even when only a subset of clients contributed.
    """
    if len(updates) == 0:
        raise ParameterError("need at least one calibrated update")
    weights = np.array([w for _, w in updates], dtype=np.float64)
    if np.any(weights <= 0):
        raise ParameterError("weights must be positive")
    denom = float(weights.sum()) if total_weight is None else float(total_weight)
    if denom <= 0:
        raise ParameterError("total_weight must be positive")
    mat = np.stack([as_vector(u) for u, _ in updates])
    return (weights[:, None] * mat).sum(axis=0) / denom


def run_unlearning(
    archive: Archive,
    partitions: Sequence[ClientPartition],
    request: UnlearnRequest,
    config: FlConfig,
    model_spec: ModelSpec,
    renormalize: bool = False,
    dp_noise: bool = False,
) -> Tuple[ModelState, List[UnlearnRecord]]:
    """Replay the archive without the target clients and return the result.

    ``renormalize`` switches the aggregation denominator from the total
    remaining-dataset size to the per-round contributors' sizes. ``dp_noise``
    additionally clips and noises the fresh updates (off by default: the
    replay itself runs without a privacy mechanism).

    Raises UnlearningImpossibleError when no archived round retains any
    client after removing the targets.
    """
    if len(archive) == 0:
        raise ParameterError("cannot unlearn from an empty archive")
    all_ids = {p.client_id for p in partitions}
    unknown = request.target_clients - all_ids
    if unknown:
        raise ParameterError(f"unknown target client ids: {sorted(unknown)}")
    remaining_ids = sorted(all_ids - request.target_clients)
    if not remaining_ids:
        raise ParameterError("cannot unlearn every client")

    by_id = {p.client_id: p for p in partitions}
    # |D-|: total data held by clients that remain in the federation.
    remaining_total = float(sum(len(by_id[c]) for c in remaining_ids))

    rounds = sorted(archive.rounds)
    plans = []
    for r in rounds:
        keep = sorted(set(archive.updates[r]) - request.target_clients)
        plans.append((r, keep))
    if all(not keep for _, keep in plans):
        raise UnlearningImpossibleError(
            "every archived round loses all contributors after removing the targets"
        )

    sigma = noise_sigma(config.epsilon_max, config.delta, config.clip_norm) if dp_noise else 0.0
    first_round = rounds[0]
    model = ModelState(model_spec, archive.models[first_round].copy())
    records: List[UnlearnRecord] = []

    for r, keep in plans:
        if not keep:
            logger.warning("archived round %d has no remaining clients; skipping", r)
            records.append(UnlearnRecord(round=r, clients_trained=0, skipped=True, update_norm=0.0))
            continue
        calibrated = []
        for c in keep:
            part = by_id[c]
            fresh, _ = sgd_local_train(
                model,
                part,
                config.local_epochs,
                config.batch_size,
                config.lr,
                rng_stream(config.master_seed, "unlearn-train", r, c),
            )
            if dp_noise:
                fresh = clip_update(fresh, config.clip_norm)
                fresh = gaussian_noise_update(
                    fresh, sigma, config.clip_norm,
                    rng_stream(config.master_seed, "unlearn-noise", r, c),
                )
            calibrated.append((calibrate_update(archive.updates[r][c], fresh), float(len(part))))

        combined = aggregate_calibrated(
            calibrated, total_weight=None if renormalize else remaining_total
        )
        new_params = model.params - config.lr * combined
        if not np.all(np.isfinite(new_params)):
            raise NumericError(f"unlearned model became non-finite at archived round {r}")
        model = model.with_params(new_params)
        records.append(
            UnlearnRecord(
                round=r,
                clients_trained=len(keep),
                skipped=False,
                update_norm=float(np.linalg.norm(combined)),
            )
        )

    return model, records
