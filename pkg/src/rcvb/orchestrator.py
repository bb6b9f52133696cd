"""Instantiation phase: enumerate profiled candidates, train, validate, rank.

Each candidate trains with its profiled batch size for up to its profiled
epoch count under a cosine schedule, validating only in the final
three-epoch window, and never starts an epoch whose predicted duration
would overrun the remaining time budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocator import MemoryTracker
from .budget import Budget, ModelSpec, ProfileResult, SkipRecord, virtual_step_seconds
from .ensemble import resize_batch
from .errors import NoFeasibleCandidate, OutOfBudgetMemory
from .nn import build_network
from .optim import AdamWConfig, AdamWState, cosine_lr
from .precision import AmpPolicy, Precision
from .training import evaluate, make_batches, train_epoch

_PRECISION_ORDER = {Precision.FP32: 0, Precision.AMP: 1}


@dataclass(frozen=True)
class Candidate:
    spec: ModelSpec
    input_size: int
    precision: Precision
    batch_size: int
    max_epochs: int
    base_lr: float
    profile: ProfileResult

    @property
    def model_id(self) -> str:
        return self.spec.id


@dataclass
class EpochRow:
    epoch: int
    lr: float
    mean_loss: float
    epoch_seconds: float
    peak_bytes: int


@dataclass
class TrainReport:
    model_id: str
    input_size: int
    precision: Precision
    batch_size: int
    max_epochs: int
    base_lr: float
    param_count: int
    epochs: list = field(default_factory=list)  # list[EpochRow]
    validated: list = field(default_factory=list)  # list[(epoch, val_acc)]
    best_val_acc: float | None = None
    total_seconds: float = 0.0
    within_time_budget: bool = True
    within_memory_budget: bool = True
    failed: bool = False
    failure_reason: str = ""


def scaled_lr(lr_ref: float, batch_size: int, b_ref: int) -> float:
    """Linear batch-size scaling of the reference learning rate."""
    return lr_ref * batch_size / b_ref


def validation_epochs(max_epochs: int) -> list:
    """1-indexed epochs e with max_epochs - e < 3, i.e. the last three."""
    return [e for e in range(max(1, max_epochs - 2), max_epochs + 1)]


def enumerate_candidates(zoo, size_grid, precisions, profiles, optimizer_cfg):
    """Pair every ProfileResult with its zoo spec in deterministic order:
    zoo order, then size ascending, then FP32 before AMP."""
    by_key = {(p.model_id, p.input_size, p.precision): p for p in profiles}
    specs = {s.id: s for s in zoo}
    candidates = []
    for spec in zoo:
        for s in sorted(size_grid):
            for q in sorted(precisions, key=_PRECISION_ORDER.__getitem__):
                prof = by_key.get((spec.id, s, q))
                if prof is None:
                    continue
                lr = scaled_lr(optimizer_cfg.lr_ref, prof.batch_size, optimizer_cfg.b_ref)
                candidates.append(Candidate(spec=specs[prof.model_id], input_size=s,
                                            precision=q, batch_size=prof.batch_size,
                                            max_epochs=prof.max_epochs, base_lr=lr,
                                            profile=prof))
    return candidates


def instantiate(candidate: Candidate, train_ds, val_ds, budget: Budget, clock,
                optimizer_cfg, loss_scale: float = 1024.0, seed: int = 0,
                augment_flip_prob: float = 0.5):
    """Train one candidate; returns (TrainReport, trained Network or None).

    The memory ceiling stays armed for the whole run: blowing through it
    marks the candidate failed (a profiling bug surfaced, not hidden). An
    epoch only starts if its predicted duration (mean of completed epochs,
    seeded with the profiled estimate) still fits the remaining time budget.
    """
    spec = candidate.spec
    if spec.trainable is None:
        raise ValueError(f"candidate {spec.id!r} has no trainable layers")
    report = TrainReport(model_id=spec.id, input_size=candidate.input_size,
                         precision=candidate.precision, batch_size=candidate.batch_size,
                         max_epochs=candidate.max_epochs, base_lr=candidate.base_lr,
                         param_count=spec.param_count)
    amp = (AmpPolicy(enabled=True, loss_scale=loss_scale)
           if candidate.precision is Precision.AMP else None)
    adam_cfg = AdamWConfig(base_lr=candidate.base_lr, beta1=optimizer_cfg.beta1,
                           beta2=optimizer_cfg.beta2, eps=optimizer_cfg.eps,
                           weight_decay=optimizer_cfg.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence(
        [seed, candidate.input_size, _PRECISION_ORDER[candidate.precision]]))
    tracker = MemoryTracker()
    tracker.arm(budget.memory_bytes)
    effective = budget.effective_train_seconds
    m = candidate.max_epochs
    s = candidate.input_size
    train_images = resize_batch(train_ds.images, s)
    val_window = set(validation_epochs(m))
    start = clock.now()
    net = None
    try:
        with tracker.scope():
            net = build_network(spec.id, spec.trainable, seed, tracker)
            state = AdamWState(net.params, adam_cfg, tracker)
            epoch_times = []
            for e in range(1, m + 1):
                elapsed = clock.now() - start
                predicted = (sum(epoch_times) / len(epoch_times)
                             if epoch_times else candidate.profile.epoch_seconds)
                if elapsed + predicted > effective:
                    break
                lr = cosine_lr(e - 1, m, candidate.base_lr, optimizer_cfg.min_lr)
                batches = make_batches(train_images, train_ds.labels,
                                       candidate.batch_size, rng,
                                       flip_prob=augment_flip_prob)
                epoch_start = clock.now()
                stats = train_epoch(net, batches, state, amp, lr, tracker)
                if clock.mode == "virtual":
                    clock.advance(len(batches) * virtual_step_seconds(
                        spec, candidate.batch_size, s, candidate.precision))
                epoch_seconds = clock.now() - epoch_start
                epoch_times.append(epoch_seconds)
                report.epochs.append(EpochRow(epoch=e, lr=lr,
                                              mean_loss=stats.mean_loss,
                                              epoch_seconds=epoch_seconds,
                                              peak_bytes=stats.peak_bytes))
                if e in val_window:
                    acc = evaluate(net, val_ds.images, val_ds.labels, s,
                                   chunk=candidate.batch_size)
                    report.validated.append((e, acc))
            # keep the trained weights alive past the accounting scope
            trained = _detach_network(net)
    except OutOfBudgetMemory as err:
        report.failed = True
        report.within_memory_budget = False
        report.failure_reason = f"out of memory during training: {err}"
        trained = None
    report.total_seconds = clock.now() - start
    report.within_time_budget = report.total_seconds <= effective
    if report.validated:
        report.best_val_acc = max(acc for _, acc in report.validated)
    elif not report.failed:
        report.failed = True
        report.failure_reason = "no epoch reached the validation window"
    return report, trained


def _detach_network(net):
    """Copy a tracked network into untracked tensors (weights survive scope exit)."""
    from .tensor import Tensor  # local import to avoid a cycle at module load
    clone = build_network(net.id, net.arch, seed=0, tracker=None)
    for dst, src in zip(clone.params, net.params):
        dst.data[...] = src.data
    return clone


def rank(reports):
    """Leaderboard: best validation accuracy descending; ties prefer fewer
    parameters, then model id, then size, then FP32. Failed candidates sink
    to the bottom with their reasons. Raises when nothing trained."""
    ok = [r for r in reports if not r.failed and r.best_val_acc is not None]
    failed = [r for r in reports if r.failed or r.best_val_acc is None]
    if not ok:
        raise NoFeasibleCandidate("every candidate failed or was skipped")
    key = lambda r: (-r.best_val_acc, r.param_count, r.model_id, r.input_size,
                     _PRECISION_ORDER[r.precision])
    ok.sort(key=key)
    failed.sort(key=lambda r: (r.model_id, r.input_size,
                               _PRECISION_ORDER[r.precision]))
    return ok + failed, ok[0]
