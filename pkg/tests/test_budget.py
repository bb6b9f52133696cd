import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcvb.budget import (Budget, CostCoefficients, ModelSpec, Precision,
                         ProfileResult, SkipRecord, VirtualClock, WallClock,
                         analytic_memory, compute_max_epochs,
                         estimate_one_epoch_time, find_max_batch_size, fits,
                         profile_grid, profile_model, virtual_step_seconds)
from rcvb.errors import ModelDoesNotFit, TimeBudgetTooSmall

from .oracles import scan_max_batch

# linear fixture at size 16: fixed 2 GB, 4e7 bytes per sample (A0 * 16^2),
# step time 0.01 + 1e-6 * b * s^2
LINEAR = ModelSpec(
    id="linear-fixture", param_count=0,
    cost=CostCoefficients(fixed_bytes=2.0e9, activation_bytes_per_pixel=4.0e7 / 256,
                          step_seconds=0.01, pixel_seconds=1e-6,
                          amp_time_factor=0.6, amp_activation_factor=0.5))
SIX_GB = Budget(memory_bytes=6_000_000_000, train_seconds=10800.0)


def test_analytic_memory_linear_fixture():
    assert analytic_memory(LINEAR, 100, 16, Precision.FP32) == pytest.approx(6.0e9)
    assert analytic_memory(LINEAR, 1, 16, Precision.FP32) == pytest.approx(2.0e9 + 4.0e7)


def test_analytic_memory_rejects_zero_batch():
    with pytest.raises(ValueError):
        analytic_memory(LINEAR, 0, 16, Precision.FP32)


def test_analytic_memory_amp_halves_the_activation_term():
    full = analytic_memory(LINEAR, 10, 16, Precision.FP32)
    half = analytic_memory(LINEAR, 10, 16, Precision.AMP)
    assert half == pytest.approx(2.0e9 + 0.5 * (full - 2.0e9))


def test_analytic_memory_strictly_increasing_in_batch():
    vals = [analytic_memory(LINEAR, b, 16, Precision.FP32) for b in range(1, 50)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_fits_linear_fixture_crossing():
    assert fits(LINEAR, 100, 16, Precision.FP32, SIX_GB)
    assert not fits(LINEAR, 101, 16, Precision.FP32, SIX_GB)


def test_fits_false_when_fixed_cost_alone_exceeds_budget():
    tiny = Budget(memory_bytes=1_000_000_000, train_seconds=100.0)
    assert not fits(LINEAR, 1, 16, Precision.FP32, tiny)


def test_find_max_batch_size_matches_linear_scan_on_fixture():
    budget = SIX_GB
    pred = lambda b: fits(LINEAR, b, 16, Precision.FP32, budget)
    assert find_max_batch_size(pred, 512) == 100 == scan_max_batch(pred, 512)


def test_find_max_batch_size_returns_cap_when_everything_fits():
    assert find_max_batch_size(lambda b: True, 1) == 1
    assert find_max_batch_size(lambda b: True, 7) == 7
    assert find_max_batch_size(lambda b: True, 64) == 64


def test_find_max_batch_size_raises_when_one_sample_does_not_fit():
    with pytest.raises(ModelDoesNotFit):
        find_max_batch_size(lambda b: False, 100)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=1000), st.integers(min_value=1, max_value=1000))
def test_solver_equals_scan_and_respects_call_budget(threshold, cap):
    calls = []

    def predicate(b):
        calls.append(b)
        return b <= threshold

    if threshold == 0:
        with pytest.raises(ModelDoesNotFit):
            find_max_batch_size(predicate, cap)
        return
    got = find_max_batch_size(predicate, cap)
    assert got == scan_max_batch(lambda b: b <= threshold, cap)
    assert len(calls) <= 2 * math.ceil(math.log2(cap)) + 2 if cap > 1 else 2


def test_virtual_epoch_time_matches_formula():
    clock = VirtualClock()
    # 100 steps of 0.01 + 1e-6*32*256 seconds each
    t = estimate_one_epoch_time(LINEAR, 32, 16, Precision.FP32, clock,
                                dataset_size=3200)
    assert t == pytest.approx(100 * (0.01 + 1e-6 * 32 * 256), rel=1e-12)
    assert t == pytest.approx(1.8192, rel=1e-9)
    assert clock.now() == pytest.approx(t)


def test_virtual_epoch_time_with_zero_pixel_cost_is_steps_times_overhead():
    spec = ModelSpec(id="c0-only", param_count=0,
                     cost=CostCoefficients(fixed_bytes=0.0,
                                           activation_bytes_per_pixel=1.0,
                                           step_seconds=0.25, pixel_seconds=0.0))
    for b, s in ((4, 8), (16, 32)):
        t = estimate_one_epoch_time(spec, b, s, Precision.FP32, VirtualClock(),
                                    dataset_size=64)
        assert t == pytest.approx(math.ceil(64 / b) * 0.25)


def test_virtual_epoch_time_amp_scales_only_the_per_sample_term():
    plain = virtual_step_seconds(LINEAR, 32, 16, Precision.FP32)
    mixed = virtual_step_seconds(LINEAR, 32, 16, Precision.AMP)
    assert mixed - 0.01 == pytest.approx(0.6 * (plain - 0.01), rel=1e-12)


def test_virtual_clock_time_is_bit_reproducible():
    runs = []
    for _ in range(3):
        clock = VirtualClock()
        runs.append(estimate_one_epoch_time(LINEAR, 32, 16, Precision.FP32,
                                            clock, dataset_size=3200))
    assert runs[0] == runs[1] == runs[2]


def test_estimate_requires_dataset_at_least_one_batch():
    with pytest.raises(ValueError, match="smaller than batch"):
        estimate_one_epoch_time(LINEAR, 64, 16, Precision.FP32, VirtualClock(),
                                dataset_size=32)


def test_compute_max_epochs_floor_division():
    assert compute_max_epochs(234.0, Budget(memory_bytes=1, train_seconds=10800.0)) == 46
    assert compute_max_epochs(150.0, Budget(memory_bytes=1, train_seconds=10800.0)) == 72


def test_compute_max_epochs_boundary_one_epoch():
    budget = Budget(memory_bytes=1, train_seconds=500.0)
    assert compute_max_epochs(500.0, budget) == 1


def test_compute_max_epochs_too_small_raises():
    budget = Budget(memory_bytes=1, train_seconds=100.0)
    with pytest.raises(TimeBudgetTooSmall):
        compute_max_epochs(101.0, budget)


def test_compute_max_epochs_applies_time_scale():
    budget = Budget(memory_bytes=1, train_seconds=32400.0, time_scale=1.0 / 3.0)
    assert compute_max_epochs(234.0, budget) == 46


def test_profile_model_composes_the_pieces():
    clock = VirtualClock()
    res = profile_model(LINEAR, 16, Precision.FP32, SIX_GB, clock,
                        dataset_size=3200, batch_cap=512)
    assert isinstance(res, ProfileResult)
    assert res.batch_size == 100
    steps = math.ceil(3200 / 100)
    assert res.epoch_seconds == pytest.approx(
        steps * virtual_step_seconds(LINEAR, 100, 16, Precision.FP32))
    assert res.max_epochs == math.floor(10800.0 / res.epoch_seconds)
    assert res.max_epochs * res.epoch_seconds <= SIX_GB.effective_train_seconds
    assert not res.capped


def test_profile_model_skip_record_when_memory_too_small():
    tiny = Budget(memory_bytes=1_000_000, train_seconds=100.0)
    res = profile_model(LINEAR, 16, Precision.FP32, tiny, VirtualClock(),
                        dataset_size=3200)
    assert isinstance(res, SkipRecord)
    assert res.reason == "model_does_not_fit"


def test_profile_model_skip_record_when_time_too_small():
    short = Budget(memory_bytes=6_000_000_000, train_seconds=1.0)
    res = profile_model(LINEAR, 16, Precision.FP32, short, VirtualClock(),
                        dataset_size=3200)
    assert isinstance(res, SkipRecord)
    assert res.reason == "time_budget_too_small"


def test_profile_model_flags_cap_binding():
    res = profile_model(LINEAR, 16, Precision.FP32, SIX_GB, VirtualClock(),
                        dataset_size=3200, batch_cap=50)
    assert isinstance(res, ProfileResult)
    assert res.batch_size == 50
    assert res.capped


def test_profile_grid_order_and_skip_collection():
    heavy = ModelSpec(id="too-big", param_count=0,
                      cost=CostCoefficients(fixed_bytes=7.0e9,
                                            activation_bytes_per_pixel=1.0))
    profiles, skips = profile_grid([LINEAR, heavy], [24, 16],
                                   [Precision.AMP, Precision.FP32], SIX_GB,
                                   VirtualClock(), dataset_size=3200)
    keys = [(p.model_id, p.input_size, p.precision) for p in profiles]
    assert keys == [("linear-fixture", 16, Precision.FP32),
                    ("linear-fixture", 16, Precision.AMP),
                    ("linear-fixture", 24, Precision.FP32),
                    ("linear-fixture", 24, Precision.AMP)]
    assert len(skips) == 4
    assert {s.model_id for s in skips} == {"too-big"}


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.1, max_value=0.9),  # amp activation factor
       st.floats(min_value=0.4, max_value=0.9),  # amp time factor
       st.integers(min_value=2, max_value=200))  # fp32 crossing target
def test_amp_dominance_directional(k_a, k_t, target):
    area = 64.0
    spec = ModelSpec(id="amp-dom", param_count=0,
                     cost=CostCoefficients(fixed_bytes=1000.0,
                                           activation_bytes_per_pixel=50.0,
                                           step_seconds=0.05, pixel_seconds=1e-5,
                                           amp_time_factor=k_t,
                                           amp_activation_factor=k_a))
    budget = Budget(memory_bytes=int(1000 + 50 * area * (target + 0.5)),
                    train_seconds=1e7)
    n = 20 * 1024  # dataset large enough that ceil() overshoot cannot invert
    fp32 = profile_model(spec, 8, Precision.FP32, budget, VirtualClock(),
                         dataset_size=n, batch_cap=1024)
    amp = profile_model(spec, 8, Precision.AMP, budget, VirtualClock(),
                        dataset_size=n, batch_cap=1024)
    assert isinstance(fp32, ProfileResult) and isinstance(amp, ProfileResult)
    assert amp.batch_size >= fp32.batch_size
    assert amp.max_epochs >= fp32.max_epochs


def test_wall_clock_is_monotone():
    clock = WallClock()
    a = clock.now()
    b = clock.now()
    assert b >= a
