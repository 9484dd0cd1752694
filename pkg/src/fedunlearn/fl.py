"""The federated training coordinator.

One call to :func:`run_federated_learning` plays the whole protocol:
broadcast, local SGD on every client, optional clip-and-noise, aggregation,
the global model step, stage-buffered archival, and budget adaptation.
Everything is driven by named RNG substreams of the master seed, so runs
are bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .aggregation import WeightedUpdate, aggregate
from .archive import Archive, RoundEntry, StageBuffer, flush_stage, stage_should_flush
from .data import ClientPartition
from .errors import NumericError, ParameterError
from .models import ModelState, loss_and_gradient, sgd_local_train
from .privacy import PrivacyState, clip_update, gaussian_noise_update, next_budget, noise_sigma
from .rng import rng_stream

__all__ = ["FlConfig", "RoundRecord", "weighted_global_loss", "run_federated_learning"]

logger = logging.getLogger(__name__)


@dataclass
class FlConfig:
    """Hyperparameters of one federated run (defaults follow the reference
    evaluation setup: 20 clients, 40 rounds, 5 local epochs, batch 64,
    lr 0.005, 10% stage loss drop, keep ratios 0.6 / 0.7, budget 3.0)."""

    num_clients: int = 20
    global_rounds: int = 40
    local_epochs: int = 5
    batch_size: int = 64
    lr: float = 0.005
    stage_loss_drop: float = 0.10  # fraction of loss reduction that closes a stage
    model_keep_ratio: float = 0.6
    update_keep_ratio: float = 0.7
    aggregation_rule: str = "fedavg"
    trim_fraction: float = 0.2
    dp_enabled: bool = True
    epsilon_max: float = 3.0
    epsilon_min: float = 0.1
    delta: float = 1e-5
    clip_norm: float = 1.0
    sigma_override: Optional[float] = None  # force a noise multiplier (0 = noiseless DP path)
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 1 or self.global_rounds < 1:
            raise ParameterError("num_clients and global_rounds must be >= 1")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ParameterError("local_epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        for name in ("stage_loss_drop",):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        for name in ("model_keep_ratio", "update_keep_ratio"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ParameterError(f"{name} must lie in (0, 1], got {v}")
        if self.aggregation_rule not in ("fedavg", "trimmed_mean", "median"):
            raise ParameterError(f"unknown aggregation rule: {self.aggregation_rule!r}")
        if self.sigma_override is not None and self.sigma_override < 0:
            raise ParameterError("sigma_override must be non-negative")

    def initial_privacy_state(self, initial_loss: float) -> PrivacyState:
        # The budget starts at its cap: every loss change can only push it up.
        return PrivacyState(
            epsilon_t=self.epsilon_max,
            epsilon_min=self.epsilon_min,
            epsilon_max=self.epsilon_max,
            delta=self.delta,
            clip_norm=self.clip_norm,
            prev_loss=initial_loss,
        )


@dataclass
class RoundRecord:
    """Per-round metrics emitted by the coordinator."""

    round: int
    global_loss: float
    epsilon_used: float
    sigma_used: float
    flushed: bool
    archived_models_total: int
    archived_updates_total: int
    clients_trained: int

    def to_dict(self) -> dict:
        return {
            "type": "fl_round",
            "round": self.round,
            "global_loss": self.global_loss,
            "epsilon_used": self.epsilon_used,
            "sigma_used": self.sigma_used,
            "flushed": self.flushed,
            "archived_models_total": self.archived_models_total,
            "archived_updates_total": self.archived_updates_total,
            "clients_trained": self.clients_trained,
        }


def weighted_global_loss(losses_and_weights: Sequence[Tuple[float, float]]) -> float:
    """Dataset-size-weighted mean of client-reported losses."""
    if len(losses_and_weights) == 0:
        raise ParameterError("need at least one client loss")
    weights = np.array([w for _, w in losses_and_weights], dtype=np.float64)
    if np.any(weights <= 0):
        raise ParameterError("weights must be positive")
    losses = np.array([l for l, _ in losses_and_weights], dtype=np.float64)
    return float((losses * weights).sum() / weights.sum())


def _initial_global_loss(model: ModelState, partitions: Sequence[ClientPartition]) -> float:
    pairs = []
    for part in partitions:
        loss, _ = loss_and_gradient(model, part)
        pairs.append((loss, float(len(part))))
    return weighted_global_loss(pairs)


def run_federated_learning(
    config: FlConfig,
    partitions: Sequence[ClientPartition],
    initial_model: ModelState,
) -> Tuple[ModelState, Archive, List[RoundRecord]]:
    """Run the full federated protocol and return (model, archive, records).

    Per round, every client trains locally from the broadcast model; with
    DP enabled its update is norm-clipped and Gaussian-noised under the
    round's budget before aggregation. The server applies the aggregate,
    buffers the round, flushes the stage when the loss-drop trigger fires,
    and finally adapts the budget from the weighted client losses. Any
    non-empty buffer is flushed once training ends.

    Raises NumericError naming the round if the global model leaves the
    finite range.
    """
    if len(partitions) != config.num_clients:
        raise ParameterError(
            f"config expects {config.num_clients} clients, got {len(partitions)} partitions"
        )

    model = initial_model
    dim = model.spec.param_count
    weights: Dict[int, float] = {p.client_id: float(len(p)) for p in partitions}

    initial_loss = _initial_global_loss(model, partitions)
    privacy = config.initial_privacy_state(initial_loss)
    prev_stage_loss = initial_loss

    buffer = StageBuffer(anchor=model.params.copy())
    archive = Archive(
        model_dim=dim,
        num_clients=config.num_clients,
        model_keep_ratio=config.model_keep_ratio,
        update_keep_ratio=config.update_keep_ratio,
    )
    records: List[RoundRecord] = []

    for t in range(config.global_rounds):
        epsilon_used = privacy.epsilon_t
        if config.dp_enabled:
            if config.sigma_override is not None:
                sigma = config.sigma_override
            else:
                sigma = noise_sigma(epsilon_used, config.delta, config.clip_norm)
        else:
            sigma = 0.0

        shared: Dict[int, np.ndarray] = {}
        losses = []
        for part in partitions:
            c = part.client_id
            update, local_loss = sgd_local_train(
                model,
                part,
                config.local_epochs,
                config.batch_size,
                config.lr,
                rng_stream(config.master_seed, "fl-train", t, c),
            )
            if config.dp_enabled:
                update = clip_update(update, config.clip_norm)
                update = gaussian_noise_update(
                    update, sigma, config.clip_norm,
                    rng_stream(config.master_seed, "fl-noise", t, c),
                )
            shared[c] = update
            losses.append((local_loss, weights[c]))

        agg = aggregate(
            config.aggregation_rule,
            [WeightedUpdate(shared[c], weights[c]) for c in sorted(shared)],
            config.trim_fraction,
        )
        new_params = model.params - config.lr * agg
        if not np.all(np.isfinite(new_params)):
            raise NumericError(f"global model became non-finite at round {t}")
        model = model.with_params(new_params)

        current_loss = weighted_global_loss(losses)
        buffer.append(
            RoundEntry(
                round=t,
                model=model.params.copy(),
                updates=shared,
                aggregate=agg,
                weights=dict(weights),
            )
        )

        flushed = stage_should_flush(current_loss, prev_stage_loss, config.stage_loss_drop)
        if flushed:
            kept = flush_stage(buffer, archive, config.model_keep_ratio, config.update_keep_ratio)
            prev_stage_loss = current_loss
            logger.debug("round %d closed a stage; archived rounds %s", t, kept)

        next_budget(privacy, current_loss)

        records.append(
            RoundRecord(
                round=t,
                global_loss=current_loss,
                epsilon_used=epsilon_used,
                sigma_used=sigma,
                flushed=flushed,
                archived_models_total=len(archive),
                archived_updates_total=archive.total_stored_updates(),
                clients_trained=len(partitions),
            )
        )

    if len(buffer) > 0:
        kept = flush_stage(buffer, archive, config.model_keep_ratio, config.update_keep_ratio)
        logger.debug("end-of-training flush archived rounds %s", kept)

    return model, archive, records
