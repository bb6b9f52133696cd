"""Epoch-level training and evaluation on top of the network engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import predict_probs
from .errors import OutOfBudgetMemory
from .nn import Network, backward, cross_entropy, forward
from .optim import AdamWState, adamw_step
from .precision import AmpPolicy, Storage
from .tensor import Tensor


@dataclass
class EpochStats:
    mean_loss: float
    steps_applied: int
    steps_skipped: int
    peak_bytes: int


def make_batches(images: np.ndarray, labels: np.ndarray, batch_size: int,
                 rng: np.random.Generator | None = None, flip_prob: float = 0.0):
    """Split [n, c, h, w] into shuffled batches, mirroring samples with flip_prob.

    With rng=None the order is the dataset order and no augmentation runs
    (the evaluation-style path).
    """
    n = images.shape[0]
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(n) if rng is None else rng.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        xb = images[idx].astype(np.float32, copy=True)
        if rng is not None and flip_prob > 0.0:
            mirror = rng.random(len(idx)) < flip_prob
            xb[mirror] = xb[mirror, :, :, ::-1]
        batches.append((xb, labels[idx]))
    return batches


def train_epoch(net: Network, batches, state: AdamWState, amp: AmpPolicy | None,
                lr: float, tracker) -> EpochStats:
    """One pass over the batches: forward, loss, backward, AdamW.

    Steps whose (mixed-precision) gradients come back non-finite are skipped
    and counted instead of applied. The tracker peak is reset on entry, so
    peak_bytes is this epoch's true high-water mark. Live bytes return to
    their pre-epoch value on completion.
    """
    tracker.reset_peak()
    storage = amp.activation_storage if amp is not None else Storage.FP32
    losses = []
    applied = skipped = 0
    for xb, yb in batches:
        try:
            with tracker.scope():
                x = Tensor(xb, storage, tracker=tracker, category="activation")
                trace = []
                logits = forward(net, x, amp, tracker, trace)
                loss = cross_entropy(logits, yb, tracker)
                grads = backward(net, trace, loss, amp, tracker)
                losses.append(loss.value)
                if grads.any_nonfinite and amp is not None and amp.enabled:
                    skipped += 1
                else:
                    adamw_step(state, net.params, grads, lr)
                    applied += 1
        except OutOfBudgetMemory as err:
            err.batch_size = len(xb)
            raise
    mean_loss = float(np.mean(losses)) if losses else 0.0
    return EpochStats(mean_loss=mean_loss, steps_applied=applied,
                      steps_skipped=skipped, peak_bytes=tracker.peak_bytes)


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray,
             input_size: int, chunk: int = 128) -> float:
    """Argmax accuracy after resizing every sample to input_size.

    No gradients are recorded; argmax ties resolve to the lowest class index.
    """
    if images.shape[0] == 0:
        raise ValueError("dataset is empty")
    probs = predict_probs(net, images, input_size, "identity", chunk=chunk)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))
