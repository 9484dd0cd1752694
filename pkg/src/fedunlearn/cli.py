"""Command-line entry point.

Subcommands: train, unlearn, evaluate, bound, cost. Exit codes: 0 on
success, 2 for usage/config errors, 3 for runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .archive import load_archive, persist_archive
from .config import ExperimentConfig, parse_config_file
from .errors import FedUnlearnError, ParameterError
from .pipeline import (cost_report, evaluate_model, load_model, prepare_data,
                       read_metrics, run_training_phase, run_unlearning_phase,
                       save_model, write_metrics)
from .theory import (default_quadratic_problem, estimate_constants,
                     format_bound_report, verify_bound_montecarlo)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "no_dp", False):
        cfg.privacy.dp_enabled = False
    if getattr(args, "metrics", None):
        cfg.output.metrics_path = args.metrics
    if getattr(args, "archive", None):
        cfg.output.archive_dir = args.archive
    return cfg


def _parse_targets(raw: str) -> List[int]:
    try:
        targets = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ParameterError(f"targets must be a comma-separated id list, got {raw!r}")
    if not targets:
        raise ParameterError("empty target list")
    return targets


def cmd_train(args) -> int:
    cfg = _load_config(args)
    model, archive, records, prepared = run_training_phase(cfg)
    persist_archive(archive, cfg.output.archive_dir)
    save_model(model, cfg.output.model_path)
    report = evaluate_model(cfg, model, "post_fl", prepared)
    write_metrics(cfg.output.metrics_path, list(records) + [report])
    print(f"trained {cfg.federated.global_rounds} rounds; "
          f"archived {len(archive)} models to {cfg.output.archive_dir}")
    print(f"TA {report.test_accuracy:.4f}"
          + (f"  MISR {report.misr:.4f}" if report.misr is not None else "")
          + (f"  ASR {report.asr:.4f}" if report.asr is not None else ""))
    return EXIT_OK


def cmd_unlearn(args) -> int:
    cfg = _load_config(args)
    targets = _parse_targets(args.targets) if args.targets else list(cfg.unlearn.targets)
    if not targets:
        raise ParameterError("no unlearning targets given (flag --targets or [unlearn] targets)")
    archive = load_archive(cfg.output.archive_dir)
    model, records, prepared = run_unlearning_phase(cfg, archive, targets)
    save_model(model, cfg.output.unlearned_model_path)
    cfg.unlearn.targets = tuple(sorted(targets))
    try:
        # The membership probe is trained against the compromised post-FL
        # model when one was persisted; the unlearned model only answers it.
        shadow_basis = load_model(cfg.output.model_path, prepared.model_spec)
    except (FileNotFoundError, FedUnlearnError):
        shadow_basis = None
    report = evaluate_model(cfg, model, "post_unlearn", prepared,
                            shadow_training_model=shadow_basis)
    write_metrics(cfg.output.metrics_path, list(records) + [report])
    replayed = sum(1 for r in records if not r.skipped)
    print(f"unlearned clients {sorted(targets)} over {replayed} archived rounds")
    print(f"TA {report.test_accuracy:.4f}"
          + (f"  MISR {report.misr:.4f}" if report.misr is not None else "")
          + (f"  ASR {report.asr:.4f}" if report.asr is not None else ""))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    prepared = prepare_data(cfg)
    model = load_model(args.model, prepared.model_spec)
    shadow_model = None
    if args.shadow_model:
        shadow_model = load_model(args.shadow_model, prepared.model_spec)
    report = evaluate_model(cfg, model, args.phase, prepared,
                            shadow_training_model=shadow_model)
    write_metrics(cfg.output.metrics_path, [report])
    print(f"phase {report.phase}: TA {report.test_accuracy:.4f}"
          + (f"  MISR {report.misr:.4f}" if report.misr is not None else "")
          + (f"  ASR {report.asr:.4f}" if report.asr is not None else ""))
    return EXIT_OK


def cmd_bound(args) -> int:
    cfg = _load_config(args)
    b = cfg.bound
    problem = default_quadratic_problem(b.dim, b.num_clients, b.seed)
    constants = estimate_constants(problem, seed=b.seed)
    check = verify_bound_montecarlo(
        problem,
        lr=b.lr,
        rounds=b.rounds,
        clip_norm=b.clip_norm,
        delta=b.delta,
        epsilon_max=b.epsilon_max,
        trials=b.trials,
        seed=b.seed,
        constants=constants,
    )
    print(format_bound_report(check))
    return EXIT_OK


def cmd_cost(args) -> int:
    cfg = _load_config(args)
    archive = load_archive(cfg.output.archive_dir)
    records = [r for r in read_metrics(cfg.output.metrics_path) if r.get("type") == "fl_round"]
    report = cost_report(archive, records)
    print(f"archived_rounds              = {report.archived_rounds}")
    print(f"stored_floats                = {report.stored_floats}")
    print(f"client_training_rounds_fl    = {report.client_training_rounds_fl}")
    print(f"client_training_rounds_unlearn = {report.client_training_rounds_unlearn}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedunlearn",
        description="Federated learning / unlearning simulator with adaptive "
                    "differential privacy and selective update archival.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, archive=False, metrics=True):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        if metrics:
            p.add_argument("--metrics", default=None, help="override metrics JSONL path")
        if archive:
            p.add_argument("--archive", default=None, help="override archive directory")

    p = sub.add_parser("train", help="run federated training and persist its artifacts")
    add_common(p, archive=True)
    p.add_argument("--no-dp", action="store_true", help="disable clipping and noising")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unlearn", help="remove target clients via archived-round calibration")
    add_common(p, archive=True)
    p.add_argument("--targets", default=None, help="comma-separated client ids")
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("evaluate", help="evaluate a persisted model")
    add_common(p)
    p.add_argument("--model", required=True, help="model parameter file")
    p.add_argument("--phase", choices=("post_fl", "post_unlearn"), default="post_fl")
    p.add_argument("--shadow-model", default=None,
                   help="model whose logits train the shadow (default: --model)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bound", help="check the convergence bound by Monte Carlo")
    add_common(p, metrics=False)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("cost", help="report storage and participation costs")
    add_common(p, archive=True)
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FedUnlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
