"""Candidate zoos.

Two flavors live here:

* reference_zoo(): analytic-only specs for ten well-known ImageNet
  backbones. Their cost coefficients are calibrated so the profile phase
  lands exactly on published batch-size / max-epoch figures for a
  6 GiB / 3 h budget at size 160 - the integers are the targets, the
  coefficients are derived artifacts (see calibrate_reference_spec).

* micro_zoo(): tiny trainable conv stacks for desk-scale end-to-end runs.
  Their analytic coefficients were measured from the instrumented
  allocator (peak bytes are exactly affine in batch size), so analytic and
  instrumented fit predicates agree on the batch-size crossing.
"""
from __future__ import annotations

import math

from .budget import Budget, CostCoefficients, GIB, ModelSpec
from .nn import arch_param_count

REFERENCE_INPUT_SIZE = 160
REFERENCE_DATASET_SIZE = 128_000
REFERENCE_FIXED_BYTES = 256 * 2 ** 20  # resident runtime overhead
_CALIBRATION_MARGIN = 4096.0  # keeps float roundoff away from the fit boundary

# (name, params, batch at 160, max epochs) under the 6 GiB / 3 h budget
REFERENCE_ROWS = (
    ("EfficientNet_B0", 4_100_000, 110, 112),
    ("MobileNetV3", 4_300_000, 200, 110),
    ("EfficientNet_B1", 6_600_000, 80, 62),
    ("ResNet18", 11_200_000, 256, 110),
    ("ResNest26d", 15_200_000, 110, 51),
    ("ResNet50", 23_700_000, 100, 60),
    ("ResNest50d_1s4x24d", 23_800_000, 56, 46),
    ("ResNest50d", 25_600_000, 74, 46),
    ("ResNest50d_4s2x40d", 28_500_000, 58, 36),
    ("ResNet101", 42_700_000, 64, 38),
)

# mixed precision lifts ResNest50d_1s4x24d from batch 56 to 96 and from
# 46 to 72 epochs; its amp factors are calibrated to those figures
REFERENCE_AMP_TARGETS = {"ResNest50d_1s4x24d": (96, 72)}


def reference_budget() -> Budget:
    """6 GiB of memory; a 9 h ceiling rescaled by 1/3 for faster hardware."""
    return Budget(memory_bytes=6 * GIB, train_seconds=9 * 3600.0, time_scale=1.0 / 3.0)


def calibrate_reference_spec(name: str, params: int, batch_target: int,
                             epoch_target: int, *, budget: Budget,
                             input_size: int = REFERENCE_INPUT_SIZE,
                             dataset_size: int = REFERENCE_DATASET_SIZE,
                             amp_targets: tuple | None = None,
                             fixed_bytes: float = REFERENCE_FIXED_BYTES) -> ModelSpec:
    """Solve cost coefficients from target integers.

    Memory: pick activation bytes so memory(batch_target) sits a hair under
    the ceiling, making fits(b) flip exactly between the target and
    target + 1. Time: aim the epoch duration at the midpoint of the window
    that floors to epoch_target, split 30/70 between fixed and per-pixel
    step cost. When amp targets are given, the amp factors are solved the
    same way against the mixed-precision pair.
    """
    area = input_size * input_size
    param_term = params * 4.0 * 3.0
    headroom = budget.memory_bytes - _CALIBRATION_MARGIN - fixed_bytes - param_term
    if headroom <= 0:
        raise ValueError(f"{name}: fixed costs alone exceed the memory budget")
    a0 = headroom / (area * batch_target)

    effective = budget.effective_train_seconds
    steps = math.ceil(dataset_size / batch_target)
    step_target = (effective / (epoch_target + 0.5)) / steps
    c0 = 0.3 * step_target
    c1 = 0.7 * step_target / (batch_target * area)

    k_a, k_t = 0.5, 0.7
    if amp_targets is not None:
        batch_amp, epochs_amp = amp_targets
        k_a = batch_target / batch_amp
        steps_amp = math.ceil(dataset_size / batch_amp)
        step_amp = (effective / (epochs_amp + 0.5)) / steps_amp
        k_t = (step_amp - c0) / (c1 * batch_amp * area)
        if not 0 < k_t <= 1:
            raise ValueError(f"{name}: amp epoch target {epochs_amp} is not "
                             f"reachable (k_t = {k_t:.4f})")
    cost = CostCoefficients(fixed_bytes=fixed_bytes, activation_bytes_per_pixel=a0,
                            param_byte_multiplier=3.0, step_seconds=c0,
                            pixel_seconds=c1, amp_time_factor=k_t,
                            amp_activation_factor=k_a)
    return ModelSpec(id=name, param_count=params, cost=cost)


def reference_zoo(budget: Budget | None = None) -> list:
    budget = budget or reference_budget()
    return [calibrate_reference_spec(name, params, b, m, budget=budget,
                                     amp_targets=REFERENCE_AMP_TARGETS.get(name))
            for name, params, b, m in REFERENCE_ROWS]


# -- trainable micro zoo --------------------------------------------------

# measured with the instrumented allocator at input size 24 (fp32 one-step
# peaks are exactly affine in batch size): fixed bytes beyond params and
# optimizer moments, and per-sample bytes at size 24
_MICRO_MEASURED = {
    "cnv8": (360.0, 99_112.0),
    "cnv12": (680.0, 246_568.0),
    "cnv16": (1000.0, 357_160.0),
}

_MICRO_TIME = {
    # (step_seconds, pixel_seconds, amp_time_factor) on the virtual clock
    "cnv8": (8.0, 0.002, 0.75),
    "cnv12": (12.0, 0.003, 0.70),
    "cnv16": (16.0, 0.004, 0.65),
}

# chosen so no batch-size crossing sits near an integer and the analytic
# and instrumented predicates agree exactly, in both precisions
MICRO_MEMORY_BYTES = 6_981_632
MICRO_TRAIN_SECONDS = 5400.0


def micro_archs(num_classes: int = 10) -> dict:
    return {
        "cnv8": (("conv3x3", 3, 8), ("relu",), ("conv3x3", 8, 8), ("relu",),
                 ("gap",), ("dense", 8, num_classes)),
        "cnv12": (("conv3x3", 3, 12), ("relu",), ("pointwise", 12, 16), ("relu",),
                  ("conv3x3", 16, 16), ("relu",), ("gap",), ("dense", 16, num_classes)),
        "cnv16": (("conv3x3", 3, 16), ("relu",), ("conv3x3", 16, 24), ("relu",),
                  ("conv3x3", 24, 24), ("relu",), ("gap",), ("dense", 24, num_classes)),
    }


def micro_budget() -> Budget:
    return Budget(memory_bytes=MICRO_MEMORY_BYTES,
                  train_seconds=MICRO_TRAIN_SECONDS, time_scale=1.0)


def micro_zoo(num_classes: int = 10) -> list:
    specs = []
    for name, arch in micro_archs(num_classes).items():
        fixed, per_sample_24 = _MICRO_MEASURED[name]
        c0, c1, k_t = _MICRO_TIME[name]
        cost = CostCoefficients(fixed_bytes=fixed,
                                activation_bytes_per_pixel=per_sample_24 / (24 * 24),
                                param_byte_multiplier=3.0, step_seconds=c0,
                                pixel_seconds=c1, amp_time_factor=k_t,
                                amp_activation_factor=0.5)
        specs.append(ModelSpec(id=name, param_count=arch_param_count(arch),
                               cost=cost, trainable=arch))
    return specs
