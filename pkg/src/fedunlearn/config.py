"""Experiment configuration: a strict INI file of typed key = value sections.

Unknown sections or keys are hard errors, so hyperparameter typos surface
immediately. ``parse_config(render_config(cfg))`` reproduces ``cfg`` exactly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional, Tuple

from .errors import ParameterError
from .fl import FlConfig
from .models import ModelSpec
from .data import TriggerSpec

__all__ = [
    "ExperimentConfig",
    "DatasetSection",
    "ModelSection",
    "FederatedSection",
    "PrivacySection",
    "TriggerSection",
    "UnlearnSection",
    "EvaluationSection",
    "BoundSection",
    "OutputSection",
    "parse_config",
    "parse_config_file",
    "render_config",
]


@dataclass
class DatasetSection:
    kind: str = "synthetic"  # synthetic | mnist
    num_classes: int = 3
    dim: int = 10
    per_class: int = 64000
    separation: float = 4.0
    sigma: float = 1.0
    seed: int = 1
    test_fraction: float = 0.2
    partition_scheme: str = "iid"  # iid | dirichlet
    dirichlet_alpha: float = 0.5
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    limit: Optional[int] = None


@dataclass
class ModelSection:
    kind: str = "logistic"
    hidden_dims: Tuple[int, ...] = ()


@dataclass
class FederatedSection:
    num_clients: int = 20
    global_rounds: int = 40
    local_epochs: int = 5
    batch_size: int = 64
    lr: float = 0.005
    stage_loss_drop: float = 0.10
    model_keep_ratio: float = 0.6
    update_keep_ratio: float = 0.7
    aggregation_rule: str = "fedavg"
    trim_fraction: float = 0.2


@dataclass
class PrivacySection:
    dp_enabled: bool = True
    epsilon_max: float = 3.0
    epsilon_min: float = 0.1
    delta: float = 1e-5
    clip_norm: float = 1.0
    sigma_override: Optional[float] = None


@dataclass
class TriggerSection:
    feature_indices: Tuple[int, ...] = (7, 8, 9)
    trigger_value: float = 1.0
    target_label: int = 1
    poison_fraction: float = 0.5
    clients: Tuple[int, ...] = (0, 1, 2, 3, 4)
    seed: int = 3


@dataclass
class UnlearnSection:
    targets: Tuple[int, ...] = ()
    renormalize: bool = False
    dp_noise: bool = False


@dataclass
class EvaluationSection:
    misr_combined: bool = True
    shadow_seed: int = 11
    shadow_fraction: float = 0.5  # share of the test split lent to shadow training


@dataclass
class BoundSection:
    dim: int = 5
    num_clients: int = 4
    lr: float = 0.2
    rounds: int = 50
    clip_norm: float = 0.25
    delta: float = 1e-5
    epsilon_max: float = 3.0
    trials: int = 200
    seed: int = 5


@dataclass
class OutputSection:
    archive_dir: str = "archive"
    metrics_path: str = "metrics.jsonl"
    model_path: str = "model.bin"
    unlearned_model_path: str = "unlearned_model.bin"


@dataclass
class ExperimentConfig:
    master_seed: int = 7
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    federated: FederatedSection = field(default_factory=FederatedSection)
    privacy: PrivacySection = field(default_factory=PrivacySection)
    trigger: Optional[TriggerSection] = None
    unlearn: UnlearnSection = field(default_factory=UnlearnSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    bound: BoundSection = field(default_factory=BoundSection)
    output: OutputSection = field(default_factory=OutputSection)

    def fl_config(self) -> FlConfig:
        fed, priv = self.federated, self.privacy
        return FlConfig(
            num_clients=fed.num_clients,
            global_rounds=fed.global_rounds,
            local_epochs=fed.local_epochs,
            batch_size=fed.batch_size,
            lr=fed.lr,
            stage_loss_drop=fed.stage_loss_drop,
            model_keep_ratio=fed.model_keep_ratio,
            update_keep_ratio=fed.update_keep_ratio,
            aggregation_rule=fed.aggregation_rule,
            trim_fraction=fed.trim_fraction,
            dp_enabled=priv.dp_enabled,
            epsilon_max=priv.epsilon_max,
            epsilon_min=priv.epsilon_min,
            delta=priv.delta,
            clip_norm=priv.clip_norm,
            sigma_override=priv.sigma_override,
            master_seed=self.master_seed,
        )

    def model_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec(
            kind=self.model.kind,
            input_dim=input_dim,
            num_classes=num_classes,
            hidden_dims=self.model.hidden_dims,
        )

    def trigger_spec(self) -> Optional[TriggerSpec]:
        if self.trigger is None:
            return None
        return TriggerSpec(
            feature_indices=self.trigger.feature_indices,
            trigger_value=self.trigger.trigger_value,
            target_label=self.trigger.target_label,
            poison_fraction=self.trigger.poison_fraction,
        )


# Field-type tags drive both coercion and rendering.
_INT, _FLOAT, _STR, _BOOL = "int", "float", "str", "bool"
_OPT_INT, _OPT_FLOAT, _OPT_STR = "opt_int", "opt_float", "opt_str"
_INT_LIST = "int_list"

_SECTION_CLASSES = {
    "dataset": DatasetSection,
    "model": ModelSection,
    "federated": FederatedSection,
    "privacy": PrivacySection,
    "trigger": TriggerSection,
    "unlearn": UnlearnSection,
    "evaluation": EvaluationSection,
    "bound": BoundSection,
    "output": OutputSection,
}

_FIELD_TYPES = {
    ("experiment", "master_seed"): _INT,
    ("dataset", "kind"): _STR,
    ("dataset", "num_classes"): _INT,
    ("dataset", "dim"): _INT,
    ("dataset", "per_class"): _INT,
    ("dataset", "separation"): _FLOAT,
    ("dataset", "sigma"): _FLOAT,
    ("dataset", "seed"): _INT,
    ("dataset", "test_fraction"): _FLOAT,
    ("dataset", "partition_scheme"): _STR,
    ("dataset", "dirichlet_alpha"): _FLOAT,
    ("dataset", "images_path"): _OPT_STR,
    ("dataset", "labels_path"): _OPT_STR,
    ("dataset", "limit"): _OPT_INT,
    ("model", "kind"): _STR,
    ("model", "hidden_dims"): _INT_LIST,
    ("federated", "num_clients"): _INT,
    ("federated", "global_rounds"): _INT,
    ("federated", "local_epochs"): _INT,
    ("federated", "batch_size"): _INT,
    ("federated", "lr"): _FLOAT,
    ("federated", "stage_loss_drop"): _FLOAT,
    ("federated", "model_keep_ratio"): _FLOAT,
    ("federated", "update_keep_ratio"): _FLOAT,
    ("federated", "aggregation_rule"): _STR,
    ("federated", "trim_fraction"): _FLOAT,
    ("privacy", "dp_enabled"): _BOOL,
    ("privacy", "epsilon_max"): _FLOAT,
    ("privacy", "epsilon_min"): _FLOAT,
    ("privacy", "delta"): _FLOAT,
    ("privacy", "clip_norm"): _FLOAT,
    ("privacy", "sigma_override"): _OPT_FLOAT,
    ("trigger", "feature_indices"): _INT_LIST,
    ("trigger", "trigger_value"): _FLOAT,
    ("trigger", "target_label"): _INT,
    ("trigger", "poison_fraction"): _FLOAT,
    ("trigger", "clients"): _INT_LIST,
    ("trigger", "seed"): _INT,
    ("unlearn", "targets"): _INT_LIST,
    ("unlearn", "renormalize"): _BOOL,
    ("unlearn", "dp_noise"): _BOOL,
    ("evaluation", "misr_combined"): _BOOL,
    ("evaluation", "shadow_seed"): _INT,
    ("evaluation", "shadow_fraction"): _FLOAT,
    ("bound", "dim"): _INT,
    ("bound", "num_clients"): _INT,
    ("bound", "lr"): _FLOAT,
    ("bound", "rounds"): _INT,
    ("bound", "clip_norm"): _FLOAT,
    ("bound", "delta"): _FLOAT,
    ("bound", "epsilon_max"): _FLOAT,
    ("bound", "trials"): _INT,
    ("bound", "seed"): _INT,
    ("output", "archive_dir"): _STR,
    ("output", "metrics_path"): _STR,
    ("output", "model_path"): _STR,
    ("output", "unlearned_model_path"): _STR,
}


def _parse_value(section: str, key: str, raw: str):
    tag = _FIELD_TYPES[(section, key)]
    raw = raw.strip()
    try:
        if tag == _INT:
            return int(raw)
        if tag == _FLOAT:
            return float(raw)
        if tag == _STR:
            return raw
        if tag == _BOOL:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tag == _OPT_INT:
            return None if raw == "" else int(raw)
        if tag == _OPT_FLOAT:
            return None if raw == "" else float(raw)
        if tag == _OPT_STR:
            return None if raw == "" else raw
        if tag == _INT_LIST:
            if raw == "":
                return ()
            return tuple(int(item.strip()) for item in raw.split(","))
    except ValueError as exc:
        raise ParameterError(f"[{section}] {key}: {exc}")
    raise AssertionError(f"unhandled type tag {tag}")


def _format_value(section: str, key: str, value) -> str:
    tag = _FIELD_TYPES[(section, key)]
    if value is None:
        return ""
    if tag == _BOOL:
        return "true" if value else "false"
    if tag == _INT_LIST:
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into an ExperimentConfig, rejecting unknown keys."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"config syntax error: {exc}")

    cfg = ExperimentConfig()
    for section in parser.sections():
        if section == "experiment":
            target = None
        elif section in _SECTION_CLASSES:
            if section == "trigger":
                cfg.trigger = TriggerSection()
            target = cfg.trigger if section == "trigger" else getattr(cfg, section)
        else:
            raise ParameterError(f"unknown config section [{section}]")
        valid_keys = (
            {"master_seed"}
            if section == "experiment"
            else {f.name for f in dc_fields(_SECTION_CLASSES[section])}
        )
        for key, raw in parser.items(section):
            if key not in valid_keys:
                raise ParameterError(f"unknown key {key!r} in section [{section}]")
            value = _parse_value(section, key, raw)
            if section == "experiment":
                cfg.master_seed = value
            else:
                setattr(target, key, value)
    return cfg


def parse_config_file(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text for a config; inverse of :func:`parse_config`."""
    out = io.StringIO()
    out.write("[experiment]\n")
    out.write(f"master_seed = {_format_value('experiment', 'master_seed', cfg.master_seed)}\n")
    for section, cls in _SECTION_CLASSES.items():
        obj = getattr(cfg, section)
        if obj is None:
            continue
        out.write(f"\n[{section}]\n")
        for f in dc_fields(cls):
            out.write(f"{f.name} = {_format_value(section, f.name, getattr(obj, f.name))}\n")
    return out.getvalue()
