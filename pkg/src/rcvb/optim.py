"""AdamW with decoupled weight decay, and the cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .precision import Storage
from .tensor import Tensor


@dataclass(frozen=True)
class AdamWConfig:
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


class AdamWState:
    """First/second moment buffers (always FP32 storage) plus step counter.

    step_count advances only when a step is actually applied; skipped
    mixed-precision steps leave it untouched.
    """

    def __init__(self, params, config: AdamWConfig, tracker=None):
        self.config = config
        self.step_count = 0
        self.first_moment = [Tensor(np.zeros_like(p.data, dtype=np.float32), Storage.FP32,
                                    tracker=tracker, category="moment") for p in params]
        self.second_moment = [Tensor(np.zeros_like(p.data, dtype=np.float32), Storage.FP32,
                                     tracker=tracker, category="moment") for p in params]

    def free(self):
        for t in self.first_moment + self.second_moment:
            t.free()


def adamw_step(state: AdamWState, params, grads, lr: float) -> None:
    """One bias-corrected AdamW update: p -= lr*mhat/(sqrt(vhat)+eps) + lr*wd*p.

    The caller is responsible for skipping non-finite gradients (the
    mixed-precision path); one reaching this function is a contract
    violation and raises.
    """
    if lr < 0:
        raise ValueError("lr must be non-negative")
    grad_arrays = grads.arrays() if hasattr(grads, "arrays") else list(grads)
    if len(grad_arrays) != len(params):
        raise ValueError(f"{len(grad_arrays)} gradients for {len(params)} parameters")
    for g in grad_arrays:
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient reached adamw_step")
    cfg = state.config
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(params, grad_arrays, state.first_moment, state.second_moment):
        m.data[...] = cfg.beta1 * m.data + (1.0 - cfg.beta1) * g
        v.data[...] = cfg.beta2 * v.data + (1.0 - cfg.beta2) * (g * g)
        m_hat = m.data / bc1
        v_hat = v.data / bc2
        update = lr * (m_hat / (np.sqrt(v_hat) + cfg.eps)) + lr * cfg.weight_decay * p.data
        p.data[...] = p.data - update


def cosine_lr(epoch: int, total_epochs: int, base_lr: float, min_lr: float = 0.0) -> float:
    """Cosine annealing from base_lr (epoch 0) down to min_lr (epoch == total).

    Endpoints are returned exactly; interior points follow
    min + (base - min) * (1 + cos(pi * epoch / total)) / 2.
    """
    if total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    if min_lr > base_lr:
        raise ValueError("min_lr must not exceed base_lr")
    if epoch == 0:
        return base_lr
    if epoch == total_epochs:
        return min_lr
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total_epochs))
