"""Numeric buffer with a storage-precision tag and tracked byte size."""
from __future__ import annotations

import numpy as np

from .precision import Storage


class Tensor:
    """Shape + buffer + precision tag, optionally registered with a tracker.

    FP16-storage tensors hold an actual float16 buffer, so every value
    round-trips through binary16 by construction and the reported byte size
    is elements * 2 (elements * 4 for FP32 storage).
    """

    __slots__ = ("data", "precision", "requires_grad", "category", "_tracker", "_freed")

    def __init__(self, data, precision: Storage = Storage.FP32, *,
                 requires_grad: bool = False, tracker=None, category: str = "activation"):
        with np.errstate(over="ignore", under="ignore"):
            self.data = np.ascontiguousarray(data, dtype=precision.dtype)
        self.precision = precision
        self.requires_grad = requires_grad
        self.category = category
        self._tracker = tracker
        self._freed = False
        if tracker is not None:
            tracker.alloc(self.nbytes, category)  # may raise OutOfBudgetMemory
            tracker.attach(self)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def nbytes(self) -> int:
        return self.data.size * self.precision.bytes_per_element

    def to_f32(self) -> np.ndarray:
        """Widen to float32 for compute (exact for FP16 storage)."""
        if self.data.dtype == np.float32:
            return self.data
        return self.data.astype(np.float32)

    def free(self) -> None:
        """Release the tracked bytes. Idempotent."""
        if self._freed:
            return
        self._freed = True
        if self._tracker is not None:
            self._tracker.release(self.nbytes, self.category)

    def __repr__(self):
        return (f"Tensor(shape={tuple(self.shape)}, precision={self.precision.value}, "
                f"requires_grad={self.requires_grad})")
