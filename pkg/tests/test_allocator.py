import numpy as np
import pytest

from rcvb.allocator import MemoryTracker
from rcvb.errors import OutOfBudgetMemory
from rcvb.precision import Storage
from rcvb.tensor import Tensor


def test_live_and_peak_track_alloc_release(tracker):
    tracker.alloc(100, "activation")
    tracker.alloc(50, "param")
    assert tracker.live_bytes == 150
    assert tracker.peak_bytes == 150
    tracker.release(100, "activation")
    assert tracker.live_bytes == 50
    assert tracker.peak_bytes == 150  # high-water mark stays


def test_reset_peak_snaps_to_live(tracker):
    tracker.alloc(100, "activation")
    tracker.release(100, "activation")
    tracker.alloc(10, "param")
    tracker.reset_peak()
    assert tracker.peak_bytes == tracker.live_bytes == 10


def test_armed_ceiling_raises_without_state_change(tracker):
    tracker.alloc(80, "activation")
    tracker.arm(100)
    with pytest.raises(OutOfBudgetMemory) as exc:
        tracker.alloc(30, "activation")
    assert tracker.live_bytes == 80  # recoverable: counters untouched
    assert exc.value.requested == 30
    assert exc.value.ceiling == 100
    tracker.alloc(20, "activation")  # exactly at the ceiling is fine
    assert tracker.live_bytes == 100


def test_release_below_zero_is_an_error(tracker):
    tracker.alloc(10, "activation")
    with pytest.raises(RuntimeError):
        tracker.release(20, "activation")


def test_scope_frees_tensors_even_on_error(tracker):
    data = np.zeros(10, dtype=np.float32)
    with pytest.raises(ValueError):
        with tracker.scope():
            Tensor(data, Storage.FP32, tracker=tracker)
            Tensor(data, Storage.FP16, tracker=tracker)
            assert tracker.live_bytes == 60
            raise ValueError("boom")
    assert tracker.live_bytes == 0


def test_peak_breakdown_snapshots_categories(tracker):
    tracker.alloc(100, "param")
    tracker.alloc(200, "activation")
    tracker.release(200, "activation")
    tracker.alloc(50, "activation")  # below the old peak
    assert tracker.peak_bytes == 300
    assert tracker.peak_attributed("param") == 100
    assert tracker.peak_attributed("activation") == 200
    assert tracker.peak_attributed("activation", "param") == 300


def test_tensor_free_is_idempotent(tracker):
    t = Tensor(np.zeros(4, dtype=np.float32), Storage.FP32, tracker=tracker)
    assert tracker.live_bytes == 16
    t.free()
    t.free()
    assert tracker.live_bytes == 0


def test_unknown_category_rejected(tracker):
    with pytest.raises(ValueError):
        tracker.alloc(1, "swap")
