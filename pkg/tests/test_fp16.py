import math

import numpy as np
from hypothesis import given, strategies as st

from rcvb.precision import FP16_MAX, Storage, quantize_fp16, quantize_fp16_array
from rcvb.tensor import Tensor


def test_exactly_representable_values_pass_through():
    for v in (0.0, 0.5, 1.0, -2.0, 0.25, 2048.0, 65504.0):
        assert quantize_fp16(v) == v


def test_below_subnormal_minimum_flushes_to_zero():
    # binary16's smallest subnormal is 2**-24 ~ 5.96e-8
    assert quantize_fp16(1e-8) == 0.0
    assert quantize_fp16(-1e-8) == 0.0


def test_overflow_threshold_goes_to_infinity():
    assert quantize_fp16(65520.0) == math.inf
    assert quantize_fp16(-65520.0) == -math.inf
    assert quantize_fp16(1e9) == math.inf
    assert quantize_fp16(math.inf) == math.inf
    # just under the rounding threshold stays finite
    assert quantize_fp16(65519.0) == FP16_MAX


def test_round_to_nearest_even():
    # 2049 sits halfway between 2048 and 2050; even mantissa wins
    assert quantize_fp16(2049.0) == 2048.0
    assert quantize_fp16(2051.0) == 2052.0


@given(st.floats(min_value=-7e4, max_value=7e4, allow_nan=False))
def test_quantization_is_idempotent(x):
    once = quantize_fp16(x)
    assert quantize_fp16(once) == once or (math.isinf(once) and math.isinf(quantize_fp16(once)))


@given(st.floats(min_value=-6e4, max_value=6e4, allow_nan=False))
def test_scalar_and_array_paths_agree(x):
    arr = quantize_fp16_array(np.array([x], dtype=np.float32))
    assert float(arr[0]) == quantize_fp16(np.float32(x))


def test_fp16_tensor_values_round_trip_through_half():
    rng = np.random.default_rng(3)
    t = Tensor(rng.normal(size=(4, 5)).astype(np.float32), Storage.FP16)
    vals = t.to_f32()
    assert np.array_equal(vals, quantize_fp16_array(vals))


def test_tensor_byte_sizes_follow_storage():
    data = np.zeros((3, 4), dtype=np.float32)
    assert Tensor(data, Storage.FP32).nbytes == 12 * 4
    assert Tensor(data, Storage.FP16).nbytes == 12 * 2
