"""Profile phase: fit predicate, max batch size, epoch time, max epochs.

A candidate model is profiled per (input size, precision): find the largest
batch that fits the memory ceiling, estimate one epoch's duration against an
injectable clock, and derive the epoch count allowed by the time ceiling.
Infeasible combinations become structured skip records, never crashes.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .allocator import MemoryTracker
from .errors import ModelDoesNotFit, OutOfBudgetMemory, TimeBudgetTooSmall
from .nn import build_network
from .optim import AdamWConfig, AdamWState
from .precision import AmpPolicy, Precision
from .training import train_epoch

GIB = 2 ** 30


@dataclass(frozen=True)
class Budget:
    """Hard ceilings: memory in bytes, training wall time in seconds.

    time_scale rescales the time ceiling for different hardware (for
    example 1/3 when the reference budget was stated for a slower device).
    """

    memory_bytes: int = 6 * GIB
    train_seconds: float = 9 * 3600.0
    time_scale: float = 1.0

    def __post_init__(self):
        if self.memory_bytes < 1:
            raise ValueError("memory_bytes must be >= 1")
        if self.train_seconds <= 0:
            raise ValueError("train_seconds must be positive")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")

    @property
    def effective_train_seconds(self) -> float:
        return self.train_seconds * self.time_scale


@dataclass(frozen=True)
class CostCoefficients:
    """Analytic cost model of one candidate.

    memory(b, s, q) = fixed_bytes + param_count*4*param_byte_multiplier
                      + activation_bytes_per_pixel * s^2 * b * f(q)
    with f(FP32) = 1 and f(AMP) = amp_activation_factor.

    step_time(b, s, q) = step_seconds + pixel_seconds * b * s^2 * g(q)
    with g(FP32) = 1 and g(AMP) = amp_time_factor.
    """

    fixed_bytes: float
    activation_bytes_per_pixel: float
    param_byte_multiplier: float = 3.0  # params + two AdamW moments, 4 bytes each
    step_seconds: float = 0.0
    pixel_seconds: float = 0.0
    amp_time_factor: float = 1.0
    amp_activation_factor: float = 1.0

    def __post_init__(self):
        if min(self.fixed_bytes, self.activation_bytes_per_pixel,
               self.param_byte_multiplier, self.step_seconds, self.pixel_seconds) < 0:
            raise ValueError("cost coefficients must be non-negative")
        if not 0 < self.amp_time_factor <= 1:
            raise ValueError("amp_time_factor must be in (0, 1]")
        if not 0 < self.amp_activation_factor <= 1:
            raise ValueError("amp_activation_factor must be in (0, 1]")


@dataclass(frozen=True)
class ModelSpec:
    """A zoo candidate: analytic cost model plus an optional trainable arch."""

    id: str
    param_count: int
    cost: CostCoefficients
    trainable: tuple | None = None  # layer descriptors, None = analytic-only

    def __post_init__(self):
        if self.param_count < 0:
            raise ValueError("param_count must be non-negative")


@dataclass(frozen=True)
class ProfileResult:
    model_id: str
    input_size: int
    precision: Precision
    batch_size: int
    epoch_seconds: float
    max_epochs: int
    predicate_mode: str
    capped: bool = False  # search stopped at the batch cap, not the memory crossing


@dataclass(frozen=True)
class SkipRecord:
    model_id: str
    input_size: int
    precision: Precision
    reason: str  # "model_does_not_fit" | "time_budget_too_small"
    detail: str = ""


class VirtualClock:
    """Deterministic time source advanced by the analytic step-time model."""

    mode = "virtual"

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += seconds


class WallClock:
    """Monotone real-time source; advance() is a no-op (time passes by itself)."""

    mode = "wall"

    def now(self) -> float:
        return time.perf_counter()

    def advance(self, seconds: float) -> None:
        pass


# -- memory side --------------------------------------------------------

def analytic_memory(spec: ModelSpec, batch_size: int, input_size: int,
                    precision: Precision) -> float:
    """Modelled bytes for one training step; strictly increasing in batch size."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if input_size < 1:
        raise ValueError("input_size must be >= 1")
    c = spec.cost
    factor = 1.0 if precision is Precision.FP32 else c.amp_activation_factor
    return (c.fixed_bytes
            + spec.param_count * 4.0 * c.param_byte_multiplier
            + c.activation_bytes_per_pixel * input_size * input_size * batch_size * factor)


def instrumented_step_peak(spec: ModelSpec, batch_size: int, input_size: int,
                           precision: Precision, seed: int = 0,
                           ceiling: int | None = None) -> int:
    """Peak tracked bytes of one real forward+backward+AdamW step.

    Builds a fresh seeded net from the trainable descriptor, runs a single
    step on a dummy batch, and reports the tracker's high-water mark. With a
    ceiling armed, crossing it raises OutOfBudgetMemory (tracker state is
    discarded, so the failure is recoverable).
    """
    if spec.trainable is None:
        raise ValueError(f"model {spec.id!r} has no trainable descriptor")
    tracker = MemoryTracker()
    if ceiling is not None:
        tracker.arm(ceiling)
    amp = AmpPolicy(enabled=True) if precision is Precision.AMP else None
    with tracker.scope():
        net = build_network(spec.id, spec.trainable, seed, tracker)
        state = AdamWState(net.params, AdamWConfig(), tracker)
        rng = np.random.default_rng(np.random.SeedSequence([seed, batch_size, input_size]))
        xb = rng.random((batch_size, net.in_channels, input_size, input_size),
                        dtype=np.float32)
        yb = rng.integers(0, net.num_classes, size=batch_size)
        stats = train_epoch(net, [(xb, yb)], state, amp, 0.0, tracker)
    return stats.peak_bytes


def fits(spec: ModelSpec, batch_size: int, input_size: int, precision: Precision,
         budget: Budget, mode: str = "analytic", seed: int = 0) -> bool:
    """The fit predicate: does one training step at this batch stay under the
    memory ceiling? Monotone non-increasing in batch size."""
    if mode == "analytic":
        return analytic_memory(spec, batch_size, input_size, precision) <= budget.memory_bytes
    if mode == "instrumented":
        try:
            instrumented_step_peak(spec, batch_size, input_size, precision,
                                   seed=seed, ceiling=budget.memory_bytes)
            return True
        except OutOfBudgetMemory:
            return False
    raise ValueError(f"unknown predicate mode {mode!r}")


def make_fit_predicate(spec: ModelSpec, input_size: int, precision: Precision,
                       budget: Budget, mode: str = "analytic", seed: int = 0):
    return lambda b: fits(spec, b, input_size, precision, budget, mode=mode, seed=seed)


def find_max_batch_size(predicate, cap: int) -> int:
    """Largest b in [1, cap] with predicate(b) true, for a monotone predicate.

    Exponential doubling from 1, then binary search between the last true
    and first false probe: at most 2*ceil(log2 cap) + 2 predicate calls.
    Raises ModelDoesNotFit when even b = 1 fails.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if not predicate(1):
        raise ModelDoesNotFit("a single-sample batch does not fit the memory budget")
    lo, hi = 1, None
    b = 2
    while b <= cap:
        if predicate(b):
            lo = b
            b *= 2
        else:
            hi = b
            break
    if hi is None:
        if lo >= cap:
            return cap
        if predicate(cap):
            return cap
        hi = cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo


# -- time side ----------------------------------------------------------

def virtual_step_seconds(spec: ModelSpec, batch_size: int, input_size: int,
                         precision: Precision) -> float:
    c = spec.cost
    factor = 1.0 if precision is Precision.FP32 else c.amp_time_factor
    return c.step_seconds + c.pixel_seconds * batch_size * input_size * input_size * factor


def estimate_one_epoch_time(spec: ModelSpec, batch_size: int, input_size: int,
                            precision: Precision, clock, dataset_size: int,
                            seed: int = 0, memory_bytes: int | None = None) -> float:
    """Seconds for one epoch of ceil(n/b) steps over a dummy dataloader.

    Virtual clocks compute the duration from the analytic step-time model
    (every step identical, so the warmup correction is a no-op) and advance
    by it. Wall clocks run real steps on the trainable net and replace the
    first (warmup) measurement with the mean of the remaining ones.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if dataset_size < batch_size:
        raise ValueError(f"dataset size {dataset_size} smaller than batch {batch_size}")
    steps = math.ceil(dataset_size / batch_size)
    if clock.mode == "virtual":
        t = steps * virtual_step_seconds(spec, batch_size, input_size, precision)
        clock.advance(t)
        return t

    if spec.trainable is None:
        raise ValueError(f"model {spec.id!r} has no trainable descriptor for wall timing")
    tracker = MemoryTracker()
    if memory_bytes is not None:
        tracker.arm(memory_bytes)
    amp = AmpPolicy(enabled=True) if precision is Precision.AMP else None
    rng = np.random.default_rng(np.random.SeedSequence([seed, batch_size, input_size, 1]))
    try:
        with tracker.scope():
            net = build_network(spec.id, spec.trainable, seed, tracker)
            state = AdamWState(net.params, AdamWConfig(), tracker)
            durations = []
            for _ in range(steps):
                xb = rng.random((batch_size, net.in_channels, input_size, input_size),
                                dtype=np.float32)
                yb = rng.integers(0, net.num_classes, size=batch_size)
                t0 = clock.now()
                train_epoch(net, [(xb, yb)], state, amp, 0.0, tracker)
                durations.append(clock.now() - t0)
    except OutOfBudgetMemory as err:
        raise ModelDoesNotFit(f"out of memory while timing {spec.id}: {err}") from err
    if steps > 1:
        rest = durations[1:]
        return float(sum(rest) + sum(rest) / len(rest))
    return float(durations[0])


def compute_max_epochs(epoch_seconds: float, budget: Budget) -> int:
    """floor(effective time budget / epoch time); at least one epoch must fit."""
    if epoch_seconds <= 0:
        raise ValueError("epoch_seconds must be positive")
    m = int(math.floor(budget.effective_train_seconds / epoch_seconds))
    if m < 1:
        raise TimeBudgetTooSmall(epoch_seconds, budget.effective_train_seconds)
    return m


# -- composition --------------------------------------------------------

def profile_model(spec: ModelSpec, input_size: int, precision: Precision,
                  budget: Budget, clock, *, dataset_size: int,
                  predicate_mode: str = "analytic", batch_cap: int = 1024,
                  seed: int = 0):
    """Full profile of one (model, size, precision): batch size, epoch time,
    max epochs. Infeasible candidates come back as SkipRecord, not an error."""
    cap = min(batch_cap, dataset_size)
    if cap < 1:
        raise ValueError("batch cap and dataset size must allow at least one sample")
    predicate = make_fit_predicate(spec, input_size, precision, budget,
                                   mode=predicate_mode, seed=seed)
    try:
        b = find_max_batch_size(predicate, cap)
    except ModelDoesNotFit as err:
        return SkipRecord(spec.id, input_size, precision,
                          "model_does_not_fit", str(err))
    memory_arg = budget.memory_bytes if predicate_mode == "instrumented" else None
    try:
        t = estimate_one_epoch_time(spec, b, input_size, precision, clock,
                                    dataset_size, seed=seed, memory_bytes=memory_arg)
    except ModelDoesNotFit as err:
        return SkipRecord(spec.id, input_size, precision,
                          "model_does_not_fit", str(err))
    try:
        m = compute_max_epochs(t, budget)
    except TimeBudgetTooSmall as err:
        return SkipRecord(spec.id, input_size, precision,
                          "time_budget_too_small", str(err))
    return ProfileResult(model_id=spec.id, input_size=input_size, precision=precision,
                         batch_size=b, epoch_seconds=t, max_epochs=m,
                         predicate_mode=predicate_mode, capped=(b == cap))


def profile_grid(zoo, size_grid, precisions, budget: Budget, clock, *,
                 dataset_size: int, predicate_mode: str = "analytic",
                 batch_cap: int = 1024, seed: int = 0):
    """Profile every (model, size, precision) combination in deterministic
    order: zoo order, then sizes ascending, then FP32 before AMP."""
    ordered_sizes = sorted(size_grid)
    ordered_precisions = sorted(precisions, key=lambda p: 0 if p is Precision.FP32 else 1)
    profiles, skips = [], []
    for spec in zoo:
        for s in ordered_sizes:
            for q in ordered_precisions:
                outcome = profile_model(spec, s, q, budget, clock,
                                        dataset_size=dataset_size,
                                        predicate_mode=predicate_mode,
                                        batch_cap=batch_cap, seed=seed)
                if isinstance(outcome, ProfileResult):
                    profiles.append(outcome)
                else:
                    skips.append(outcome)
    return profiles, skips


# -- calibration --------------------------------------------------------

def calibrate_memory_coefficients(spec: ModelSpec, input_size: int,
                                  b_lo: int = 2, b_hi: int = 8, seed: int = 0):
    """Fit (fixed_bytes, activation_bytes_per_pixel) from two instrumented
    probes of the trainable net, assuming peak = fixed + per_sample * b.

    The param/optimizer term (param_count * 4 * multiplier) is subtracted
    from the measured fixed bytes so the returned fixed_bytes slots straight
    into CostCoefficients.
    """
    if b_hi <= b_lo:
        raise ValueError("b_hi must exceed b_lo")
    peak_lo = instrumented_step_peak(spec, b_lo, input_size, Precision.FP32, seed=seed)
    peak_hi = instrumented_step_peak(spec, b_hi, input_size, Precision.FP32, seed=seed)
    per_sample = (peak_hi - peak_lo) / (b_hi - b_lo)
    fixed_total = peak_lo - per_sample * b_lo
    param_term = spec.param_count * 4.0 * spec.cost.param_byte_multiplier
    fixed = max(0.0, fixed_total - param_term)
    return fixed, per_sample / (input_size * input_size)
