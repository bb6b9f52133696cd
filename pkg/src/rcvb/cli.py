"""Command-line entry points.

Subcommands map to the phases of the search so each is independently
runnable: gen-data, profile, run, evaluate, report. Exit codes: 0 success,
2 configuration error, 3 no feasible candidate, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .budget import Budget, Precision, SkipRecord, profile_model
from .config import ExperimentConfig, config_from_dict, config_to_dict, load_config
from .dataset import gen_splits, read_splits, write_splits
from .ensemble import ViewPolicy, evaluate_ensemble
from .errors import ConfigError, NoFeasibleCandidate, RcvbError
from .orchestrator import Candidate, instantiate, scaled_lr
from .pipeline import make_clock, run_pipeline, run_profile_phase
from .report import emit_human, emit_machine, parse_machine, sig6, write_report
from .training import evaluate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4


def _load_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "virtual_clock", False):
        cfg.clock_mode = "virtual"
    overrides = {}
    if getattr(args, "memory_budget_bytes", None) is not None:
        overrides["memory_bytes"] = args.memory_budget_bytes
    if getattr(args, "time_budget_secs", None) is not None:
        overrides["train_seconds"] = args.time_budget_secs
    if overrides:
        try:
            cfg.budget = dataclasses.replace(cfg.budget, **overrides)
        except ValueError as err:
            raise ConfigError("budget", str(err)) from None
    return cfg


def _add_common(p):
    p.add_argument("--config", help="path to a JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--virtual-clock", action="store_true",
                   help="force the deterministic virtual clock")
    p.add_argument("--memory-budget-bytes", type=int,
                   help="override the memory ceiling")
    p.add_argument("--time-budget-secs", type=float,
                   help="override the training-time ceiling")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out) if args.out else cfg.dataset_dir()
    splits = gen_splits(cfg.seed, cfg.dataset.num_classes, cfg.dataset.counts(),
                        cfg.dataset.base_resolution, channels=cfg.dataset.channels,
                        noise_sigma=cfg.dataset.noise_sigma)
    paths = write_splits(out, splits)
    for name, p in paths.items():
        print(f"wrote {p} ({len(splits[name])} samples)")
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = _load_config(args)
    profiles, skips, seconds = run_profile_phase(cfg)
    doc = {
        "schema": "rcvb-profile-v1",
        "config": config_to_dict(cfg),
        "seconds": sig6(seconds),
        "results": [{"model_id": p.model_id, "input_size": p.input_size,
                     "precision": p.precision.value, "batch_size": p.batch_size,
                     "epoch_seconds": sig6(p.epoch_seconds),
                     "max_epochs": p.max_epochs,
                     "predicate_mode": p.predicate_mode} for p in profiles],
        "skips": [{"model_id": s.model_id, "input_size": s.input_size,
                   "precision": s.precision.value, "reason": s.reason,
                   "detail": s.detail} for s in skips],
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    if not profiles:
        _print_skips(skips)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    doc = run_pipeline(cfg, ablation=args.ablation)
    paths = write_report(doc, args.out)
    print(emit_human(doc), end="")
    print(f"wrote {paths['machine']} and {paths['human']}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    spec = next((s for s in cfg.zoo if s.id == args.model), None)
    if spec is None:
        raise ConfigError("zoo", f"no model named {args.model!r}; "
                          f"available: {[s.id for s in cfg.zoo]}")
    if spec.trainable is None:
        raise ConfigError("zoo", f"model {args.model!r} has no trainable layers")
    cfg.require_dataset_files()
    splits = read_splits(cfg.dataset.path)
    size = args.size if args.size else cfg.size_grid[0]
    precision = Precision(args.precision)
    clock = make_clock(cfg)
    prof = profile_model(spec, size, precision, cfg.budget, clock,
                         dataset_size=cfg.dataset.train_count,
                         predicate_mode=cfg.predicate_mode,
                         batch_cap=cfg.batch_cap, seed=cfg.seed)
    if isinstance(prof, SkipRecord):
        print(f"{spec.id} skipped: {prof.reason} ({prof.detail})")
        return EXIT_INFEASIBLE
    cand = Candidate(spec=spec, input_size=size, precision=precision,
                     batch_size=prof.batch_size, max_epochs=prof.max_epochs,
                     base_lr=scaled_lr(cfg.optimizer.lr_ref, prof.batch_size,
                                       cfg.optimizer.b_ref),
                     profile=prof)
    report, net = instantiate(cand, splits["train"], splits["val"], cfg.budget,
                              clock, cfg.optimizer, cfg.loss_scale, seed=cfg.seed)
    if report.failed or net is None:
        print(f"training failed: {report.failure_reason}")
        return EXIT_RUNTIME
    test = splits["test"]
    print(f"{spec.id} size {size} {precision.value}: batch {prof.batch_size}, "
          f"epochs {prof.max_epochs}, best val acc {report.best_val_acc:.6g}")
    policy = ViewPolicy(sizes=tuple(cfg.size_grid))
    combined, per_view = evaluate_ensemble(net, test.images, test.labels, policy)
    for (vsize, flip), acc in per_view:
        print(f"  view size {vsize} {flip}: {acc:.6g}")
    print(f"  combined: {combined:.6g}")
    for s in cfg.size_grid:
        print(f"  single size {s}: {evaluate(net, test.images, test.labels, s):.6g}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        doc = parse_machine(Path(args.input).read_text())
    except (OSError, ValueError, json.JSONDecodeError) as err:
        raise ConfigError(str(args.input), f"cannot read report: {err}") from None
    text = emit_human(doc)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _print_skips(skips) -> None:
    print("no feasible candidate; skip records:", file=sys.stderr)
    for s in skips:
        print(f"  {s.model_id} size {s.input_size} {s.precision.value}: "
              f"{s.reason} {s.detail}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcvb",
        description="Budget-aware backbone search: profile under memory/time "
                    "ceilings, train, rank, and ensemble-evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset files")
    _add_common(p)
    p.add_argument("--out", help="output directory (default: dataset.path)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("profile", help="run only the profile phase")
    _add_common(p)
    p.add_argument("--out", help="write the profile document here")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("run", help="full search pipeline")
    _add_common(p)
    p.add_argument("--out", default="report", help="report output directory")
    p.add_argument("--ablation", action="store_true",
                   help="append the five-row component study")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="train and ensemble-evaluate one model")
    _add_common(p)
    p.add_argument("--model", required=True, help="zoo model id")
    p.add_argument("--size", type=int, help="training input size (default: low)")
    p.add_argument("--precision", choices=[q.value for q in Precision],
                   default="fp32")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a machine report as text")
    p.add_argument("--input", required=True, help="report.json path")
    p.add_argument("--out", help="write the rendering here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFeasibleCandidate as err:
        _print_skips(getattr(err, "skips", []))
        return EXIT_INFEASIBLE
    except RcvbError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
