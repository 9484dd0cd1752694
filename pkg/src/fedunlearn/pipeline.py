"""Experiment assembly shared by the command-line entry points and tests.

Builds datasets/partitions from a config, runs the training, unlearning,
and evaluation phases against persisted artifacts, and accounts storage
and computation costs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .archive import Archive, selection_count
from .config import ExperimentConfig
from .data import (ClientPartition, Dataset, apply_backdoor, generate_synthetic,
                   load_mnist_idx, partition, train_test_split)
from .errors import FormatError, ParameterError
from .evaluation import EvalReport, asr, misr, test_accuracy, train_shadow
from .fl import RoundRecord, run_federated_learning
from .models import ModelSpec, ModelState, init_params
from .unlearn import UnlearnRequest, run_unlearning

__all__ = [
    "PreparedData",
    "CostReport",
    "prepare_data",
    "save_model",
    "load_model",
    "write_metrics",
    "read_metrics",
    "run_training_phase",
    "run_unlearning_phase",
    "evaluate_model",
    "cost_report",
    "expected_archive_counts",
]


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    partitions: List[ClientPartition]
    model_spec: ModelSpec


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Deterministically build the dataset, split, partitions, and poisoning."""
    ds = cfg.dataset
    if ds.kind == "synthetic":
        full = generate_synthetic(
            ds.num_classes, ds.dim, ds.per_class, ds.seed,
            separation=ds.separation, sigma=ds.sigma,
        )
    elif ds.kind == "mnist":
        if not ds.images_path or not ds.labels_path:
            raise ParameterError("mnist datasets need images_path and labels_path")
        full = load_mnist_idx(ds.images_path, ds.labels_path, ds.limit)
    else:
        raise ParameterError(f"unknown dataset kind: {ds.kind!r}")

    train, test = train_test_split(full, ds.test_fraction, ds.seed)
    parts = partition(
        train,
        cfg.federated.num_clients,
        scheme=ds.partition_scheme,
        seed=ds.seed,
        alpha=ds.dirichlet_alpha,
    )

    trigger = cfg.trigger_spec()
    if trigger is not None:
        poisoned = set(cfg.trigger.clients)
        unknown = poisoned - {p.client_id for p in parts}
        if unknown:
            raise ParameterError(f"trigger names unknown clients: {sorted(unknown)}")
        parts = [
            apply_backdoor(p, trigger, cfg.trigger.seed) if p.client_id in poisoned else p
            for p in parts
        ]

    spec = cfg.model_spec(input_dim=train.dim, num_classes=full.num_classes)
    return PreparedData(train=train, test=test, partitions=parts, model_spec=spec)


def save_model(model: ModelState, path: str) -> None:
    """Raw little-endian float64 parameter dump (same layout as archive models)."""
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(model.params, dtype="<f8").tobytes())


def load_model(path: str, spec: ModelSpec) -> ModelState:
    with open(path, "rb") as fh:
        blob = fh.read()
    expected = 8 * spec.param_count
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {spec.param_count} "
                          f"parameters, got {len(blob)}")
    return ModelState(spec, np.frombuffer(blob, dtype="<f8").copy())


def write_metrics(path: str, records: Sequence) -> None:
    """Append records as JSON lines; each record supplies ``to_dict``."""
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True))
            fh.write("\n")


def read_metrics(path: str) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no}: invalid metrics line: {exc}")
    return out


def run_training_phase(cfg: ExperimentConfig, prepared: Optional[PreparedData] = None):
    """Train, returning (model, archive, records, prepared data)."""
    prepared = prepared or prepare_data(cfg)
    initial = init_params(prepared.model_spec, cfg.master_seed)
    model, archive, records = run_federated_learning(cfg.fl_config(), prepared.partitions, initial)
    return model, archive, records, prepared


def run_unlearning_phase(
    cfg: ExperimentConfig,
    archive: Archive,
    targets: Sequence[int],
    prepared: Optional[PreparedData] = None,
):
    """Unlearn the targets against an archive, returning (model, records, prepared)."""
    prepared = prepared or prepare_data(cfg)
    request = UnlearnRequest(frozenset(targets))
    model, records = run_unlearning(
        archive,
        prepared.partitions,
        request,
        cfg.fl_config(),
        prepared.model_spec,
        renormalize=cfg.unlearn.renormalize,
        dp_noise=cfg.unlearn.dp_noise,
    )
    return model, records, prepared


def evaluate_model(
    cfg: ExperimentConfig,
    model: ModelState,
    phase: str,
    prepared: Optional[PreparedData] = None,
    shadow_training_model: Optional[ModelState] = None,
) -> EvalReport:
    """Accuracy plus, when a trigger and targets are configured, MISR and ASR.

    The shadow is trained on ``shadow_training_model`` (default: the model
    under evaluation, the right choice immediately after training); the first
    half of the test split feeds shadow training, the second half evaluation.
    """
    prepared = prepared or prepare_data(cfg)
    report_misr = None
    report_asr = None
    trigger = cfg.trigger_spec()
    targets = sorted(cfg.unlearn.targets) or (sorted(cfg.trigger.clients) if cfg.trigger else [])

    if trigger is not None and targets:
        by_id = {p.client_id: p for p in prepared.partitions}
        member_features = np.vstack([by_id[c].data.features for c in targets])
        member_labels = np.concatenate([by_id[c].data.labels for c in targets])
        member_data = Dataset(member_features, member_labels, prepared.test.num_classes)

        cut = int(len(prepared.test) * cfg.evaluation.shadow_fraction)
        if cut < 1 or cut >= len(prepared.test):
            raise ParameterError("shadow_fraction leaves an empty shadow or evaluation side")
        shadow_nonmembers = prepared.test.subset(range(cut))
        eval_sample = prepared.test.subset(range(cut, len(prepared.test)))
        shadow = train_shadow(
            shadow_training_model or model,
            member_data,
            shadow_nonmembers,
            cfg.evaluation.shadow_seed,
        )
        report_misr = misr(shadow, model, member_data, eval_sample,
                           combined=cfg.evaluation.misr_combined)
        report_asr = asr(model, prepared.test, trigger)

    return EvalReport(
        phase=phase,
        test_accuracy=test_accuracy(model, prepared.test),
        misr=report_misr,
        asr=report_asr,
    )


@dataclass
class CostReport:
    """Storage and participation accounting for one experiment."""

    stored_floats: int
    client_training_rounds_fl: int
    client_training_rounds_unlearn: int
    archived_rounds: int

    def to_dict(self) -> dict:
        return {
            "type": "cost",
            "stored_floats": self.stored_floats,
            "client_training_rounds_fl": self.client_training_rounds_fl,
            "client_training_rounds_unlearn": self.client_training_rounds_unlearn,
            "archived_rounds": self.archived_rounds,
        }


def cost_report(archive: Archive, records: Sequence[RoundRecord]) -> CostReport:
    """Account archive storage against the training participation it saved.

    ``stored_floats`` counts one model plus the selected updates per archived
    round. Unlearning participation is the per-round contributor count the
    archive retains (an upper bound until targets are known).
    """
    dim = archive.model_dim
    stored = sum(dim + len(archive.updates[r]) * dim for r in archive.rounds)
    fl_rounds = sum(
        r.clients_trained if isinstance(r, RoundRecord) else int(r["clients_trained"])
        for r in records
    )
    unlearn_rounds = archive.total_stored_updates()
    return CostReport(
        stored_floats=stored,
        client_training_rounds_fl=fl_rounds,
        client_training_rounds_unlearn=unlearn_rounds,
        archived_rounds=len(archive),
    )


def expected_archive_counts(
    model_keep_ratio: float, update_keep_ratio: float, num_clients: int, stage_sizes: Sequence[int]
) -> Tuple[int, int]:
    """Closed-form (models, updates-per-round) the selection rules must produce."""
    models = sum(selection_count(model_keep_ratio, size) for size in stage_sizes)
    per_round = selection_count(update_keep_ratio, num_clients)
    return models, per_round
