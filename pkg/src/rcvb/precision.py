"""Storage precisions and half-precision rounding emulation.

Tensors are tagged with a storage precision. FP16 storage holds genuine
IEEE binary16 values (round-to-nearest-even, overflow to infinity,
subnormal underflow) and accounts 2 bytes per element; compute always
happens in float32 after widening.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

FP16_MAX = 65504.0


class Storage(enum.Enum):
    """How a tensor's buffer is stored and accounted."""

    FP32 = "fp32"
    FP16 = "fp16"

    @property
    def dtype(self):
        return np.float16 if self is Storage.FP16 else np.float32

    @property
    def bytes_per_element(self) -> int:
        return 2 if self is Storage.FP16 else 4


class Precision(enum.Enum):
    """Training precision mode of a candidate run."""

    FP32 = "fp32"
    AMP = "amp"

    @property
    def activation_storage(self) -> Storage:
        return Storage.FP16 if self is Precision.AMP else Storage.FP32


@dataclass(frozen=True)
class AmpPolicy:
    """Mixed-precision policy: half-storage activations and gradients,
    full-precision master weights and optimizer moments, static loss scale,
    skip-on-non-finite."""

    enabled: bool = True
    loss_scale: float = 1024.0

    def __post_init__(self):
        if self.loss_scale <= 0:
            raise ValueError("loss_scale must be positive")

    @property
    def activation_storage(self) -> Storage:
        return Storage.FP16 if self.enabled else Storage.FP32


def quantize_fp16(x: float) -> float:
    """Round a scalar to the nearest IEEE binary16 value, returned as float.

    Total on finite and infinite inputs: values beyond +-65504 overflow to
    +-inf, values below the subnormal minimum (~5.96e-8) flush toward zero.
    """
    with np.errstate(over="ignore", under="ignore"):
        return float(np.float32(x).astype(np.float16))


def quantize_fp16_array(x: np.ndarray) -> np.ndarray:
    """Element-wise binary16 rounding; returns a float32 array."""
    with np.errstate(over="ignore", under="ignore"):
        return x.astype(np.float16).astype(np.float32)


def to_fp16_storage(x: np.ndarray) -> np.ndarray:
    """Cast to a true float16 buffer (the FP16-storage representation)."""
    with np.errstate(over="ignore", under="ignore"):
        return np.ascontiguousarray(x, dtype=np.float16)
