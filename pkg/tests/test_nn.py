import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcvb.nn import (build_network, cross_entropy, forward, softmax, validate_arch)
from rcvb.precision import AmpPolicy, Storage
from rcvb.tensor import Tensor

from .oracles import naive_forward


def test_zero_input_zero_bias_net_gives_uniform_softmax(tiny_net):
    x = Tensor(np.zeros((2, 2, 8, 8), dtype=np.float32))
    logits = forward(tiny_net, x)
    assert np.array_equal(logits.to_f32(), np.zeros((2, 3), dtype=np.float32))
    probs = softmax(logits.to_f32())
    assert np.allclose(probs, 1.0 / 3.0, atol=1e-7)


def test_forward_matches_naive_loop_oracle():
    arch = [["conv3x3", 3, 5], ["relu"], ["pointwise", 5, 6], ["relu"],
            ["gap"], ["dense", 6, 4]]
    net = build_network("oracle-net", arch, seed=11)
    rng = np.random.default_rng(5)
    x = rng.random((2, 3, 16, 16), dtype=np.float32)
    got = forward(net, Tensor(x)).to_f32()
    want = naive_forward(net, x)
    assert got.shape == (2, 4)
    assert np.allclose(got, want, rtol=1e-5, atol=1e-5)


def test_amp_and_fp32_logits_agree_within_half_precision_noise():
    arch = [["conv3x3", 3, 6], ["relu"], ["conv3x3", 6, 6], ["relu"],
            ["gap"], ["dense", 6, 4]]
    net = build_network("amp-net", arch, seed=3)
    rng = np.random.default_rng(4)
    x = rng.random((2, 3, 16, 16), dtype=np.float32)
    plain = forward(net, Tensor(x)).to_f32()
    mixed = forward(net, Tensor(x, Storage.FP16), AmpPolicy(enabled=True)).to_f32()
    assert np.max(np.abs(plain - mixed)) < 1e-2


def test_forward_accepts_any_size_at_or_above_minimum(tiny_net):
    for s in (tiny_net.min_input_size, 5, 9, 16):
        logits = forward(tiny_net, Tensor(np.zeros((1, 2, s, s), dtype=np.float32)))
        assert logits.shape == (1, 3)


def test_forward_shape_mismatches_are_descriptive(tiny_net):
    with pytest.raises(ValueError, match="channels"):
        forward(tiny_net, Tensor(np.zeros((1, 5, 8, 8), dtype=np.float32)))
    with pytest.raises(ValueError, match=r"\[b, c, s, s\]"):
        forward(tiny_net, Tensor(np.zeros((1, 2, 8, 9), dtype=np.float32)))
    with pytest.raises(ValueError, match="below"):
        forward(tiny_net, Tensor(np.zeros((1, 2, 2, 2), dtype=np.float32)))


def test_cross_entropy_uniform_logits_is_log_k():
    logits = Tensor(np.zeros((3, 4), dtype=np.float32))
    loss = cross_entropy(logits, np.array([0, 2, 3]))
    assert loss.value == pytest.approx(math.log(4.0), abs=1e-6)
    assert loss.value == pytest.approx(1.386294, abs=1e-5)


def test_cross_entropy_confident_logit_closed_form():
    logits = Tensor(np.array([[10.0, 0.0, 0.0, 0.0]], dtype=np.float32))
    loss = cross_entropy(logits, np.array([0]))
    expected = -math.log(math.exp(10.0) / (math.exp(10.0) + 3.0))
    # engine softmax runs in float32; -log(1 - 1.4e-4) amplifies its epsilon
    assert loss.value == pytest.approx(expected, rel=1e-3)
    assert loss.value == pytest.approx(1.36e-4, rel=5e-2)


def test_cross_entropy_positive_unless_certain():
    logits = Tensor(np.array([[0.0, 5.0]], dtype=np.float32))
    assert cross_entropy(logits, np.array([1])).value > 0.0


def test_cross_entropy_shift_invariance_exact_for_representable_shift():
    base = np.array([[0.5, -1.25, 2.0, 0.0]], dtype=np.float32)
    labels = np.array([2])
    a = cross_entropy(Tensor(base), labels).value
    b = cross_entropy(Tensor(base + np.float32(16.0)), labels).value
    assert a == b  # exact: the shift is absorbed by the max subtraction


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=-30, max_value=30, allow_nan=False))
def test_cross_entropy_shift_invariance_holds_approximately(shift):
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(4, 5)).astype(np.float32)
    labels = np.array([0, 1, 2, 4])
    a = cross_entropy(Tensor(logits), labels).value
    b = cross_entropy(Tensor(logits + np.float32(shift)), labels).value
    assert a == pytest.approx(b, rel=1e-5, abs=1e-6)


def test_cross_entropy_label_out_of_range_fails():
    logits = Tensor(np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(ValueError, match=r"\[0, 3\)"):
        cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(ValueError):
        cross_entropy(logits, np.array([-1, 0]))


def test_param_count_equals_tensor_elements(tiny_net):
    assert tiny_net.param_count == sum(p.size for p in tiny_net.params)
    # conv3x3(2->3): 54+3, dense(3->3): 9+3
    assert tiny_net.param_count == 54 + 3 + 9 + 3


def test_validate_arch_rejects_bad_stacks():
    with pytest.raises(ValueError):
        validate_arch([["conv3x3", 3, 8], ["relu"]])  # no gap/head
    with pytest.raises(ValueError):
        validate_arch([["gap"], ["dense", 3, 2], ["dense", 2, 2]])  # two heads
    with pytest.raises(ValueError, match="channel mismatch"):
        validate_arch([["conv3x3", 3, 8], ["conv3x3", 4, 8], ["gap"], ["dense", 8, 2]])
    with pytest.raises(ValueError, match="head input"):
        validate_arch([["conv3x3", 3, 8], ["gap"], ["dense", 4, 2]])
