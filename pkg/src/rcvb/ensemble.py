"""Multi-resolution, horizontal-flip inference ensemble.

Views are the cross product of target sizes and flips; each view is
resized (bilinear, half-pixel centers), optionally mirrored, pushed through
the network, and softmaxed. The combined prediction is the arithmetic mean
of the per-view probability vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Network, forward, softmax
from .precision import Storage
from .tensor import Tensor

FLIPS = ("identity", "horizontal")


def _resize_axis_weights(src: int, dst: int):
    """Half-pixel-center source positions for one axis: indices and weights."""
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    frac = (pos - lo).astype(np.float32)
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, target: int) -> np.ndarray:
    """Resize [c, h, w] to [c, target, target] with half-pixel sampling."""
    if target < 1:
        raise ValueError("target size must be >= 1")
    c, h, w = img.shape
    if h < 1 or w < 1:
        raise ValueError("image must have positive extent")
    if h == target and w == target:
        return np.array(img, dtype=np.float32, copy=True)
    ylo, yhi, yf = _resize_axis_weights(h, target)
    xlo, xhi, xf = _resize_axis_weights(w, target)
    x = img.astype(np.float32, copy=False)
    top = x[:, ylo, :] * (1.0 - yf)[None, :, None] + x[:, yhi, :] * yf[None, :, None]
    out = (top[:, :, xlo] * (1.0 - xf)[None, None, :]
           + top[:, :, xhi] * xf[None, None, :])
    return np.ascontiguousarray(out)


def resize_batch(images: np.ndarray, target: int) -> np.ndarray:
    """Vectorized resize of [n, c, h, w] to [n, c, target, target]."""
    n, c, h, w = images.shape
    if h == target and w == target:
        return images.astype(np.float32, copy=False)
    ylo, yhi, yf = _resize_axis_weights(h, target)
    xlo, xhi, xf = _resize_axis_weights(w, target)
    x = images.astype(np.float32, copy=False)
    top = x[:, :, ylo, :] * (1.0 - yf)[None, None, :, None] + x[:, :, yhi, :] * yf[None, None, :, None]
    out = (top[:, :, :, xlo] * (1.0 - xf)[None, None, None, :]
           + top[:, :, :, xhi] * xf[None, None, None, :])
    return np.ascontiguousarray(out)


def hflip(img: np.ndarray) -> np.ndarray:
    """Reverse the width axis (last axis)."""
    return np.ascontiguousarray(img[..., ::-1])


@dataclass(frozen=True)
class ViewPolicy:
    """Which resized/flipped views feed the mean-of-softmax combination."""

    sizes: tuple = (16, 24)
    flips: tuple = FLIPS

    def __post_init__(self):
        if not self.sizes or not self.flips:
            raise ValueError("a view policy needs at least one size and one flip")
        for f in self.flips:
            if f not in FLIPS:
                raise ValueError(f"unknown flip {f!r}")

    def views(self):
        return [(s, f) for s in self.sizes for f in self.flips]


def predict_probs(net: Network, images: np.ndarray, size: int,
                  flip: str = "identity", chunk: int = 128) -> np.ndarray:
    """Softmax predictions [n, K] for one view over a [n, c, h, w] stack.

    This is the single shared inference path: plain evaluation and every
    ensemble view run through it, so a one-view ensemble reproduces plain
    evaluation bit for bit.
    """
    views = resize_batch(images, size)
    if flip == "horizontal":
        views = hflip(views)
    elif flip != "identity":
        raise ValueError(f"unknown flip {flip!r}")
    n = views.shape[0]
    out = np.empty((n, net.num_classes), dtype=np.float32)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        logits = forward(net, Tensor(views[start:stop], Storage.FP32))
        out[start:stop] = softmax(logits.to_f32())
    return out


def predict_views(net: Network, img: np.ndarray, policy: ViewPolicy):
    """Per-view probability vectors for a single [c, h, w] image."""
    stack = img[None, ...]
    return [predict_probs(net, stack, size, flip)[0] for size, flip in policy.views()]


def combine(prob_vectors) -> np.ndarray:
    """Arithmetic mean of probability vectors; ties resolve to the lowest index."""
    vectors = [np.asarray(v, dtype=np.float64) for v in prob_vectors]
    if not vectors:
        raise ValueError("need at least one probability vector")
    k = vectors[0].shape
    for v in vectors:
        if v.shape != k:
            raise ValueError(f"probability vectors disagree in length: {v.shape} vs {k}")
        if abs(float(v.sum()) - 1.0) > 1e-6:
            raise ValueError("input vector does not sum to 1")
    return np.mean(vectors, axis=0)


def evaluate_ensemble(net: Network, images: np.ndarray, labels: np.ndarray,
                      policy: ViewPolicy, chunk: int = 128):
    """Accuracy of mean-of-views predictions plus the per-view accuracies."""
    n = images.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    lab = np.asarray(labels)
    per_view = []
    total = np.zeros((n, net.num_classes), dtype=np.float64)
    for size, flip in policy.views():
        probs = predict_probs(net, images, size, flip, chunk=chunk)
        per_view.append(((size, flip), float(np.mean(probs.argmax(axis=1) == lab))))
        total += probs
    combined = total / len(policy.views())
    accuracy = float(np.mean(combined.argmax(axis=1) == lab))
    return accuracy, per_view
