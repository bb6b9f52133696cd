"""Instrumented fit predicate: real one-step probes against the analytic model."""
import math

import pytest

from rcvb.budget import (Budget, CostCoefficients, ModelSpec, Precision,
                         WallClock, analytic_memory, calibrate_memory_coefficients,
                         estimate_one_epoch_time, find_max_batch_size, fits,
                         instrumented_step_peak, make_fit_predicate)
from rcvb.zoo import MICRO_MEMORY_BYTES, micro_budget, micro_zoo

from .oracles import scan_max_batch


def test_instrumented_mode_needs_a_trainable_descriptor():
    spec = ModelSpec(id="analytic-only", param_count=10,
                     cost=CostCoefficients(fixed_bytes=0.0,
                                           activation_bytes_per_pixel=1.0))
    with pytest.raises(ValueError, match="trainable"):
        fits(spec, 1, 16, Precision.FP32, micro_budget(), mode="instrumented")


def test_instrumented_peak_is_affine_in_batch_size():
    spec = micro_zoo()[0]
    peaks = {b: instrumented_step_peak(spec, b, 16, Precision.FP32)
             for b in (2, 4, 8, 16)}
    d1 = peaks[4] - peaks[2]
    assert peaks[8] - peaks[4] == d1 * 2
    assert peaks[16] - peaks[8] == d1 * 4


def test_instrumented_predicate_is_monotone():
    spec = micro_zoo()[0]
    budget = micro_budget()
    pred = make_fit_predicate(spec, 16, Precision.FP32, budget, mode="instrumented")
    values = [pred(b) for b in (1, 64, 128, 158, 159, 400)]
    assert values == [True, True, True, True, False, False]


@pytest.mark.parametrize("size", [16, 24])
@pytest.mark.parametrize("precision", [Precision.FP32, Precision.AMP])
def test_analytic_and_instrumented_crossings_agree_within_two(size, precision):
    budget = micro_budget()
    for spec in micro_zoo():
        analytic_pred = make_fit_predicate(spec, size, precision, budget,
                                           mode="analytic")
        instr_pred = make_fit_predicate(spec, size, precision, budget,
                                        mode="instrumented")
        b_analytic = find_max_batch_size(analytic_pred, 512)
        b_instr = find_max_batch_size(instr_pred, 512)
        assert abs(b_analytic - b_instr) <= 2, (spec.id, size, precision)


def test_calibrated_coefficients_reproduce_instrumented_peaks():
    spec = micro_zoo()[1]
    fixed, a0 = calibrate_memory_coefficients(spec, 24, b_lo=2, b_hi=8)
    calibrated = ModelSpec(id=spec.id, param_count=spec.param_count,
                           cost=CostCoefficients(fixed_bytes=fixed,
                                                 activation_bytes_per_pixel=a0),
                           trainable=spec.trainable)
    for b in (3, 12, 20):
        measured = instrumented_step_peak(spec, b, 24, Precision.FP32)
        modelled = analytic_memory(calibrated, b, 24, Precision.FP32)
        assert modelled == pytest.approx(measured, rel=1e-9)


def test_instrumented_crossing_matches_linear_scan_on_small_budget():
    spec = micro_zoo()[0]
    budget = Budget(memory_bytes=500_000, train_seconds=100.0)
    pred = make_fit_predicate(spec, 16, Precision.FP32, budget, mode="instrumented")
    got = find_max_batch_size(pred, 64)
    assert got == scan_max_batch(pred, 64)


def test_wall_clock_epoch_estimate_runs_real_steps():
    spec = micro_zoo()[0]
    t = estimate_one_epoch_time(spec, 8, 12, Precision.FP32, WallClock(),
                                dataset_size=24)
    assert t > 0.0
    assert math.isfinite(t)


def test_default_micro_profile_batches_fit_when_trained_for_real():
    # the analytic profile's batch must actually fit the armed tracker,
    # in both precisions (the budget constant was chosen for this)
    budget = micro_budget()
    for spec in micro_zoo():
        for size in (16, 24):
            for q in (Precision.FP32, Precision.AMP):
                pred_a = make_fit_predicate(spec, size, q, budget, mode="analytic")
                b = find_max_batch_size(pred_a, 512)
                assert fits(spec, b, size, q, budget, mode="instrumented"), \
                    (spec.id, size, q, b)
                assert not fits(spec, b + 1, size, q, budget, mode="instrumented")
    assert budget.memory_bytes == MICRO_MEMORY_BYTES
