"""End-to-end driver: profile, instantiate, rank, ensemble-evaluate, report."""
from __future__ import annotations

from .budget import (Precision, ProfileResult, SkipRecord, VirtualClock, WallClock,
                     profile_grid, profile_model)
from .config import ExperimentConfig
from .dataset import read_splits
from .ensemble import ViewPolicy, evaluate_ensemble
from .errors import ConfigError, NoFeasibleCandidate
from .orchestrator import Candidate, enumerate_candidates, instantiate, rank, scaled_lr
from .report import build_report
from .training import evaluate


def make_clock(cfg: ExperimentConfig):
    return VirtualClock() if cfg.clock_mode == "virtual" else WallClock()


def run_profile_phase(cfg: ExperimentConfig, clock=None):
    """Profile the whole zoo grid; returns (profiles, skips, elapsed_seconds)."""
    clock = clock if clock is not None else make_clock(cfg)
    t0 = clock.now()
    profiles, skips = profile_grid(cfg.zoo, cfg.size_grid, cfg.precisions,
                                   cfg.budget, clock,
                                   dataset_size=cfg.dataset.train_count,
                                   predicate_mode=cfg.predicate_mode,
                                   batch_cap=cfg.batch_cap, seed=cfg.seed)
    return profiles, skips, clock.now() - t0


def run_pipeline(cfg: ExperimentConfig, ablation: bool = False) -> dict:
    """The full search: returns the machine-readable report document.

    Raises NoFeasibleCandidate when nothing in the zoo survives profiling
    and training; the skip records ride along on the exception.
    """
    for spec in cfg.zoo:
        if spec.trainable is None:
            raise ConfigError("zoo", f"model {spec.id!r} has no layers; the full "
                                     f"pipeline needs trainable candidates")
    cfg.require_dataset_files()
    splits = read_splits(cfg.dataset.path)
    clock = make_clock(cfg)

    profiles, skips, profile_seconds = run_profile_phase(cfg, clock)
    candidates = enumerate_candidates(cfg.zoo, cfg.size_grid, cfg.precisions,
                                      profiles, cfg.optimizer)
    reports, nets = [], {}
    for cand in candidates:
        rep, net = instantiate(cand, splits["train"], splits["val"], cfg.budget,
                               clock, cfg.optimizer, cfg.loss_scale, seed=cfg.seed)
        reports.append(rep)
        if net is not None:
            nets[(cand.model_id, cand.input_size, cand.precision)] = net
    try:
        leaderboard, winner = rank(reports)
    except NoFeasibleCandidate as err:
        err.skips = skips
        err.reports = reports
        raise

    winner_net = nets[(winner.model_id, winner.input_size, winner.precision)]
    test = splits["test"]
    policy = ViewPolicy(sizes=tuple(cfg.size_grid))
    combined, per_view = evaluate_ensemble(winner_net, test.images, test.labels, policy)
    s_low, s_high = cfg.size_grid[0], cfg.size_grid[-1]
    ensemble_section = {
        "model_id": winner.model_id,
        "views": [{"size": size, "flip": flip, "accuracy": acc}
                  for (size, flip), acc in per_view],
        "combined_accuracy": combined,
        "single_low_accuracy": evaluate(winner_net, test.images, test.labels, s_low),
        "single_high_accuracy": evaluate(winner_net, test.images, test.labels, s_high),
    }
    ablation_rows = (run_ablation(cfg, winner.model_id, splits, clock)
                     if ablation else None)
    return build_report(cfg, profiles, skips, reports, leaderboard, winner,
                        ensemble_section, ablation_rows, profile_seconds)


def run_ablation(cfg: ExperimentConfig, model_id: str, splits, clock) -> list:
    """Five-row component study on one model: plain low-resolution evaluation,
    high-resolution evaluation, the flip/size ensemble, and the same pair on
    a mixed-precision training run."""
    spec = next(s for s in cfg.zoo if s.id == model_id)
    s_low, s_high = cfg.size_grid[0], cfg.size_grid[-1]
    test = splits["test"]
    policy = ViewPolicy(sizes=tuple(cfg.size_grid))
    nets = {}
    for q in (Precision.FP32, Precision.AMP):
        prof = profile_model(spec, s_low, q, cfg.budget, clock,
                             dataset_size=cfg.dataset.train_count,
                             predicate_mode=cfg.predicate_mode,
                             batch_cap=cfg.batch_cap, seed=cfg.seed)
        if isinstance(prof, SkipRecord):
            nets[q] = None
            continue
        cand = Candidate(spec=spec, input_size=s_low, precision=q,
                         batch_size=prof.batch_size, max_epochs=prof.max_epochs,
                         base_lr=scaled_lr(cfg.optimizer.lr_ref, prof.batch_size,
                                           cfg.optimizer.b_ref),
                         profile=prof)
        _, net = instantiate(cand, splits["train"], splits["val"], cfg.budget,
                             clock, cfg.optimizer, cfg.loss_scale, seed=cfg.seed)
        nets[q] = net

    def _acc(net, size):
        if net is None:
            return None
        return evaluate(net, test.images, test.labels, size)

    def _ens(net):
        if net is None:
            return None
        combined, _ = evaluate_ensemble(net, test.images, test.labels, policy)
        return combined

    fp32, amp = nets[Precision.FP32], nets[Precision.AMP]
    rows = [
        {"method": "SS", "train_size": s_low, "test_size": s_low,
         "ensemble": False, "amp": False, "accuracy": _acc(fp32, s_low)},
        {"method": "AS", "train_size": s_low, "test_size": s_high,
         "ensemble": False, "amp": False, "accuracy": _acc(fp32, s_high)},
        {"method": "AS+En", "train_size": s_low, "test_size": s_high,
         "ensemble": True, "amp": False, "accuracy": _ens(fp32)},
        {"method": "AS+AMP", "train_size": s_low, "test_size": s_high,
         "ensemble": False, "amp": True, "accuracy": _acc(amp, s_high)},
        {"method": "AS+En+AMP", "train_size": s_low, "test_size": s_high,
         "ensemble": True, "amp": True, "accuracy": _ens(amp)},
    ]
    return rows
