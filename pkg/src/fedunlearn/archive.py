"""Stage-buffered selection of global models and client updates, plus the
on-disk archive they are flushed into.

Training is cut into stages: whenever the global loss drops below
``(1 - stage_loss_drop)`` of the loss at the previous stage boundary, the
buffered rounds are distilled. Model selection keeps the rounds whose
global model is least aligned (ReLU-cosine) with its predecessor, i.e. the
rounds that changed the most; update selection keeps, within each kept
round, the client updates most aligned with that round's aggregate.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import DegenerateVectorError, FormatError, ParameterError, StateError
from .vectors import cosine_similarity, relu

__all__ = [
    "RoundEntry",
    "StageBuffer",
    "Archive",
    "round_half_up",
    "selection_count",
    "model_alignment",
    "stage_should_flush",
    "select_models",
    "select_updates",
    "flush_stage",
    "persist_archive",
    "load_archive",
]

_MANIFEST_NAME = "manifest"


def round_half_up(x: float) -> int:
    """Round with ties away from zero for the non-negative ratios used here."""
    return int(math.floor(x + 0.5))


def selection_count(ratio: float, n: int) -> int:
    """How many of n items a keep-ratio retains: max(1, half-up round)."""
    return max(1, round_half_up(ratio * n))


@dataclass
class RoundEntry:
    """Everything buffered about one training round."""

    round: int
    model: np.ndarray  # global model after this round's update
    updates: Dict[int, np.ndarray]  # client id -> stored (possibly noised) update
    aggregate: np.ndarray  # the aggregated update applied this round
    weights: Dict[int, float]  # client id -> dataset size


@dataclass
class StageBuffer:
    """Temporary per-stage storage; ``anchor`` is the model that preceded
    the first buffered round (the last model of the previous stage, or the
    initial model)."""

    anchor: np.ndarray
    entries: List[RoundEntry] = field(default_factory=list)

    def append(self, entry: RoundEntry) -> None:
        if self.entries and entry.round <= self.entries[-1].round:
            raise StateError("buffered rounds must be strictly increasing")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Archive:
    """Selected rounds surviving stage flushes: one model, the chosen client
    updates, and the contributing client set per archived round."""

    model_dim: int
    num_clients: int
    model_keep_ratio: float
    update_keep_ratio: float
    rounds: List[int] = field(default_factory=list)
    models: Dict[int, np.ndarray] = field(default_factory=dict)
    updates: Dict[int, Dict[int, np.ndarray]] = field(default_factory=dict)
    weights: Dict[int, Dict[int, float]] = field(default_factory=dict)

    @property
    def stored_models(self) -> List[tuple]:
        return [(r, self.models[r]) for r in self.rounds]

    @property
    def stored_updates(self) -> Dict[int, Dict[int, np.ndarray]]:
        return self.updates

    @property
    def client_sets(self) -> Dict[int, frozenset]:
        return {r: frozenset(self.updates[r]) for r in self.rounds}

    def __len__(self) -> int:
        return len(self.rounds)

    def total_stored_updates(self) -> int:
        return sum(len(self.updates[r]) for r in self.rounds)

    def _append(self, entry: RoundEntry, kept_clients: List[int]) -> None:
        if entry.round in self.models:
            raise StateError(f"round {entry.round} already archived")
        self.rounds.append(entry.round)
        self.models[entry.round] = entry.model
        self.updates[entry.round] = {c: entry.updates[c] for c in kept_clients}
        self.weights[entry.round] = {c: entry.weights[c] for c in kept_clients}


def model_alignment(m_curr, m_prev) -> float:
    """ReLU-cosine alignment between successive global models, in [0, 1]."""
    return relu(cosine_similarity(m_curr, m_prev))


def _alignment_or_zero(curr, prev) -> float:
    # Mid-training fallback: a zero-norm model counts as maximal change.
    try:
        return model_alignment(curr, prev)
    except DegenerateVectorError:
        return 0.0


def _similarity_or_zero(update, aggregate) -> float:
    # Mid-training fallback: zero-norm vectors count as minimal contribution.
    try:
        return cosine_similarity(update, aggregate)
    except DegenerateVectorError:
        return 0.0


def stage_should_flush(current_loss: float, prev_stage_loss: float, stage_loss_drop: float) -> bool:
    """True once the loss has fallen to (1 - drop) of the previous stage's, inclusive."""
    if not (0.0 < stage_loss_drop < 1.0):
        raise ParameterError("stage_loss_drop must lie in (0, 1)")
    return current_loss <= (1.0 - stage_loss_drop) * prev_stage_loss


def select_models(buffer: StageBuffer, keep_ratio: float) -> List[int]:
    """Rounds whose models moved the most, i.e. smallest predecessor alignment.

    Returns ``selection_count(keep_ratio, len(buffer))`` round numbers in
    ascending order; alignment ties break toward the earlier round.
    """
    if not (0.0 < keep_ratio <= 1.0):
        raise ParameterError("keep_ratio must lie in (0, 1]")
    if len(buffer) == 0:
        raise StateError("cannot select from an empty stage buffer")
    scored = []
    prev = buffer.anchor
    for entry in buffer.entries:
        scored.append((_alignment_or_zero(entry.model, prev), entry.round))
        prev = entry.model
    scored.sort()
    k = selection_count(keep_ratio, len(scored))
    return sorted(r for _, r in scored[:k])


def select_updates(entry: RoundEntry, keep_ratio: float) -> List[int]:
    """Clients whose updates align best with the round's aggregate.

    Returns ``selection_count(keep_ratio, C)`` client ids in ascending order;
    similarity ties break toward the smaller client id.
    """
    if not (0.0 < keep_ratio <= 1.0):
        raise ParameterError("keep_ratio must lie in (0, 1]")
    if not entry.updates:
        raise StateError(f"round {entry.round} has no client updates")
    scored = sorted(
        (-_similarity_or_zero(update, entry.aggregate), client)
        for client, update in entry.updates.items()
    )
    k = selection_count(keep_ratio, len(scored))
    return sorted(client for _, client in scored[:k])


def flush_stage(
    buffer: StageBuffer,
    archive: Archive,
    model_keep_ratio: float,
    update_keep_ratio: float,
) -> List[int]:
    """Distill the buffered stage into the archive and reset the buffer.

    Only rounds surviving model selection are archived, and only the
    selected clients' updates within them. The buffer's anchor advances to
    the last buffered model so the next stage aligns against it. Returns
    the archived round numbers.
    """
    kept_rounds = select_models(buffer, model_keep_ratio)
    by_round = {entry.round: entry for entry in buffer.entries}
    for r in kept_rounds:
        entry = by_round[r]
        archive._append(entry, select_updates(entry, update_keep_ratio))
    buffer.anchor = buffer.entries[-1].model
    buffer.entries = []
    return kept_rounds


def _round_blob(archive: Archive, r: int) -> bytes:
    parts = [np.ascontiguousarray(archive.models[r], dtype="<f8").tobytes()]
    for client in sorted(archive.updates[r]):
        parts.append(np.array([client], dtype="<i8").tobytes())
        parts.append(np.array([archive.weights[r][client]], dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(archive.updates[r][client], dtype="<f8").tobytes())
    return b"".join(parts)


def persist_archive(archive: Archive, directory: str) -> None:
    """Write one binary file per archived round plus a checksummed manifest.

    Round files hold little-endian float64: the model, then per selected
    client an int64 id, a float64 weight, and the stored update.
    """
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "model_dim": archive.model_dim,
        "num_clients": archive.num_clients,
        "model_keep_ratio": archive.model_keep_ratio,
        "update_keep_ratio": archive.update_keep_ratio,
        "rounds": [],
    }
    for r in archive.rounds:
        blob = _round_blob(archive, r)
        name = f"round_{r:06d}.bin"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(blob)
        manifest["rounds"].append(
            {
                "round": r,
                "file": name,
                "clients": sorted(archive.updates[r]),
                "sha256": hashlib.sha256(blob).hexdigest(),
            }
        )
    with open(os.path.join(directory, _MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_archive(directory: str) -> Archive:
    """Re-read a persisted archive, verifying checksums and sizes.

    Raises FormatError (naming file and offset) before returning anything
    partial.
    """
    manifest_path = os.path.join(directory, _MANIFEST_NAME)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{manifest_path}: missing manifest")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid manifest: {exc}")

    try:
        dim = int(manifest["model_dim"])
        archive = Archive(
            model_dim=dim,
            num_clients=int(manifest["num_clients"]),
            model_keep_ratio=float(manifest["model_keep_ratio"]),
            update_keep_ratio=float(manifest["update_keep_ratio"]),
        )
        entries = list(manifest["rounds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{manifest_path}: malformed manifest field: {exc}")

    for meta in entries:
        path = os.path.join(directory, meta["file"])
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except FileNotFoundError:
            raise FormatError(f"{path}: round file missing")
        digest = hashlib.sha256(blob).hexdigest()
        if digest != meta["sha256"]:
            raise FormatError(f"{path}: checksum mismatch")
        clients = [int(c) for c in meta["clients"]]
        record = 8 + 8 + 8 * dim
        expected = 8 * dim + record * len(clients)
        if len(blob) != expected:
            raise FormatError(
                f"{path}: expected {expected} bytes for {len(clients)} clients, got {len(blob)}"
            )
        r = int(meta["round"])
        model = np.frombuffer(blob, dtype="<f8", count=dim).copy()
        updates: Dict[int, np.ndarray] = {}
        weights: Dict[int, float] = {}
        pos = 8 * dim
        for expected_client in clients:
            client = int(np.frombuffer(blob, dtype="<i8", count=1, offset=pos)[0])
            if client != expected_client:
                raise FormatError(
                    f"{path}: client id {client} at offset {pos} does not match manifest"
                )
            pos += 8
            weight = float(np.frombuffer(blob, dtype="<f8", count=1, offset=pos)[0])
            pos += 8
            update = np.frombuffer(blob, dtype="<f8", count=dim, offset=pos).copy()
            pos += 8 * dim
            updates[client] = update
            weights[client] = weight
        archive.rounds.append(r)
        archive.models[r] = model
        archive.updates[r] = updates
        archive.weights[r] = weights
    return archive
