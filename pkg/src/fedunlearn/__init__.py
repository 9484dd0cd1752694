"""Deterministic federated learning / unlearning simulator.

Federated training with an adaptive privacy budget and a clipped Gaussian
mechanism, stage-buffered selection of the most-changed global models and
best-aligned client updates into a persistent archive, calibration-based
removal of target clients, attack-oriented evaluation (accuracy, membership
inference, backdoor success), and a closed-form convergence bound with a
Monte-Carlo checker.
"""

from .aggregation import WeightedUpdate, coordinate_median, fedavg, trimmed_mean
from .archive import (Archive, RoundEntry, StageBuffer, flush_stage, load_archive,
                      model_alignment, persist_archive, select_models, select_updates,
                      selection_count, stage_should_flush)
from .config import ExperimentConfig, parse_config, parse_config_file, render_config
from .data import (ClientPartition, Dataset, Sample, TriggerSpec, apply_backdoor,
                   generate_synthetic, load_mnist_idx, partition, train_test_split)
from .errors import (DegenerateVectorError, DimensionError, FedUnlearnError, FormatError,
                     NumericError, ParameterError, StateError, UnlearningImpossibleError)
from .evaluation import (EvalReport, ShadowModel, asr, misr, shadow_predict,
                         test_accuracy, train_shadow)
from .fl import FlConfig, RoundRecord, run_federated_learning, weighted_global_loss
from .models import (ModelSpec, ModelState, forward_logits, init_params,
                     loss_and_gradient, sgd_local_train)
from .privacy import (PrivacyState, clip_update, gaussian_noise_update, next_budget,
                      noise_sigma)
from .rng import rng_stream
from .theory import (BoundCheck, BoundInputs, ConstantEstimates, QuadraticProblem,
                     convergence_bound, default_quadratic_problem, estimate_constants,
                     format_bound_report, verify_bound_montecarlo)
from .unlearn import (UnlearnRecord, UnlearnRequest, aggregate_calibrated,
                      calibrate_update, run_unlearning)
from .vectors import cosine_similarity, dot, l2_norm, relu

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # vectors
    "dot", "l2_norm", "cosine_similarity", "relu",
    # data
    "Sample", "Dataset", "TriggerSpec", "ClientPartition", "generate_synthetic",
    "train_test_split", "partition", "apply_backdoor", "load_mnist_idx",
    # models
    "ModelSpec", "ModelState", "init_params", "forward_logits", "loss_and_gradient",
    "sgd_local_train",
    # privacy
    "PrivacyState", "next_budget", "noise_sigma", "clip_update", "gaussian_noise_update",
    # aggregation
    "WeightedUpdate", "fedavg", "trimmed_mean", "coordinate_median",
    # archive / selection
    "RoundEntry", "StageBuffer", "Archive", "selection_count", "model_alignment",
    "stage_should_flush", "select_models", "select_updates", "flush_stage",
    "persist_archive", "load_archive",
    # engines
    "FlConfig", "RoundRecord", "run_federated_learning", "weighted_global_loss",
    "UnlearnRequest", "UnlearnRecord", "calibrate_update", "aggregate_calibrated",
    "run_unlearning",
    # evaluation
    "ShadowModel", "EvalReport", "test_accuracy", "train_shadow", "shadow_predict",
    "misr", "asr",
    # theory
    "QuadraticProblem", "BoundInputs", "ConstantEstimates", "BoundCheck",
    "default_quadratic_problem", "convergence_bound", "estimate_constants",
    "verify_bound_montecarlo", "format_bound_report",
    # config
    "ExperimentConfig", "parse_config", "parse_config_file", "render_config",
    # rng
    "rng_stream",
    # errors
    "FedUnlearnError", "ParameterError", "DimensionError", "DegenerateVectorError",
    "NumericError", "FormatError", "StateError", "UnlearningImpossibleError",
]
