"""Minimal deterministic network engine: forward, reverse-mode gradients.

Layer set: 3x3 convolution (stride 1, pad 1), pointwise (1x1) linear,
ReLU, global average pool, and a dense classifier head. The global pool
means a built network accepts any square input at or above its minimum
size, so the same weights can run at different train/test resolutions.

Compute is float32 throughout; under a mixed-precision policy the values
*stored* between layers (activations, activation gradients) are rounded to
binary16 and accounted at two bytes per element, while parameters and
parameter gradients stay float32. The accounting model tracks layer inputs,
outputs, gradients, parameters, and loss buffers; transient BLAS workspace
is not modeled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .precision import AmpPolicy, Storage
from .tensor import Tensor


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a [b, K] float array, max-shifted for stability."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _conv3x3(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Stride-1, pad-1 3x3 correlation of [b,ci,h,w] with [co,ci,3,3]."""
    b, ci, h, w = x.shape
    co = weight.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # [b, ci, h, w, 3, 3] -> [b*h*w, ci*9] so the contraction hits BLAS
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, ci * 9)
    out = cols @ weight.reshape(co, ci * 9).T
    return out.reshape(b, h, w, co).transpose(0, 3, 1, 2)


def _conv3x3_cols(x: np.ndarray) -> np.ndarray:
    b, ci, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, ci * 9)


class Conv3x3:
    kind = "conv3x3"

    def __init__(self, c_in: int, c_out: int):
        self.c_in = c_in
        self.c_out = c_out
        self.weight = None  # Tensor [co, ci, 3, 3]
        self.bias = None  # Tensor [co]

    def param_shapes(self):
        return [(self.c_out, self.c_in, 3, 3), (self.c_out,)]

    def init_arrays(self, rng):
        limit = np.sqrt(6.0 / (self.c_in * 9))
        w = rng.uniform(-limit, limit, size=(self.c_out, self.c_in, 3, 3))
        return [w.astype(np.float32), np.zeros(self.c_out, dtype=np.float32)]

    def bind(self, tensors):
        self.weight, self.bias = tensors

    def out_shape(self, in_shape):
        b, c, h, w = in_shape
        if c != self.c_in:
            raise ValueError(f"conv3x3 expects {self.c_in} channels, got {c}")
        return (b, self.c_out, h, w)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = _conv3x3(x, self.weight.to_f32())
        return y + self.bias.to_f32()[None, :, None, None]

    def backward(self, dy: np.ndarray, x: np.ndarray, y: np.ndarray, need_dx: bool = True):
        b, co, h, w = dy.shape
        cols = _conv3x3_cols(x)
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * h * w, co)
        dw = (dy_mat.T @ cols).reshape(co, self.c_in, 3, 3)
        db = dy.sum(axis=(0, 2, 3))
        dx = None
        if need_dx:
            # gradient wrt input is correlation with the rotated kernel
            w_rot = self.weight.to_f32()[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx = _conv3x3(dy, np.ascontiguousarray(w_rot))
        return dx, [dw, db]


class Pointwise:
    kind = "pointwise"

    def __init__(self, c_in: int, c_out: int):
        self.c_in = c_in
        self.c_out = c_out
        self.weight = None  # Tensor [co, ci]
        self.bias = None

    def param_shapes(self):
        return [(self.c_out, self.c_in), (self.c_out,)]

    def init_arrays(self, rng):
        limit = np.sqrt(6.0 / self.c_in)
        w = rng.uniform(-limit, limit, size=(self.c_out, self.c_in))
        return [w.astype(np.float32), np.zeros(self.c_out, dtype=np.float32)]

    def bind(self, tensors):
        self.weight, self.bias = tensors

    def out_shape(self, in_shape):
        b, c, h, w = in_shape
        if c != self.c_in:
            raise ValueError(f"pointwise expects {self.c_in} channels, got {c}")
        return (b, self.c_out, h, w)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = np.tensordot(self.weight.to_f32(), x, axes=([1], [1])).transpose(1, 0, 2, 3)
        return y + self.bias.to_f32()[None, :, None, None]

    def backward(self, dy, x, y, need_dx=True):
        dw = np.tensordot(dy, x, axes=([0, 2, 3], [0, 2, 3]))
        db = dy.sum(axis=(0, 2, 3))
        dx = None
        if need_dx:
            dx = np.tensordot(self.weight.to_f32().T, dy, axes=([1], [1])).transpose(1, 0, 2, 3)
        return dx, [dw, db]


class ReLU:
    kind = "relu"

    def param_shapes(self):
        return []

    def init_arrays(self, rng):
        return []

    def bind(self, tensors):
        pass

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, dy, x, y, need_dx=True):
        if not need_dx:
            return None, []
        return dy * (y > 0), []


class GlobalAvgPool:
    kind = "gap"

    def param_shapes(self):
        return []

    def init_arrays(self, rng):
        return []

    def bind(self, tensors):
        pass

    def out_shape(self, in_shape):
        b, c, h, w = in_shape
        return (b, c)

    def forward(self, x):
        return x.mean(axis=(2, 3))

    def backward(self, dy, x, y, need_dx=True):
        if not need_dx:
            return None, []
        b, c, h, w = x.shape
        dx = np.broadcast_to(dy[:, :, None, None] / (h * w), x.shape).astype(np.float32)
        return np.ascontiguousarray(dx), []


class Dense:
    kind = "dense"

    def __init__(self, d_in: int, d_out: int):
        self.d_in = d_in
        self.d_out = d_out
        self.weight = None  # Tensor [out, in]
        self.bias = None

    def param_shapes(self):
        return [(self.d_out, self.d_in), (self.d_out,)]

    def init_arrays(self, rng):
        limit = np.sqrt(6.0 / self.d_in)
        w = rng.uniform(-limit, limit, size=(self.d_out, self.d_in))
        return [w.astype(np.float32), np.zeros(self.d_out, dtype=np.float32)]

    def bind(self, tensors):
        self.weight, self.bias = tensors

    def out_shape(self, in_shape):
        b, d = in_shape
        if d != self.d_in:
            raise ValueError(f"dense expects {self.d_in} features, got {d}")
        return (b, self.d_out)

    def forward(self, x):
        return x @ self.weight.to_f32().T + self.bias.to_f32()[None, :]

    def backward(self, dy, x, y, need_dx=True):
        dw = dy.T @ x
        db = dy.sum(axis=0)
        dx = dy @ self.weight.to_f32() if need_dx else None
        return dx, [dw, db]


_LAYER_KINDS = {
    "conv3x3": Conv3x3,
    "pointwise": Pointwise,
    "relu": ReLU,
    "gap": GlobalAvgPool,
    "dense": Dense,
}


def make_layer(desc):
    """Build a layer object from a descriptor like ["conv3x3", 3, 8]."""
    kind = desc[0]
    if kind not in _LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    cls = _LAYER_KINDS[kind]
    if kind in ("relu", "gap"):
        if len(desc) != 1:
            raise ValueError(f"{kind} takes no arguments, got {desc!r}")
        return cls()
    if len(desc) != 3:
        raise ValueError(f"{kind} takes (c_in, c_out), got {desc!r}")
    return cls(int(desc[1]), int(desc[2]))


@dataclass
class Network:
    """An ordered layer stack with flat float32 master parameters."""

    id: str
    layers: list
    params: list  # list[Tensor], concatenation of every layer's tensors
    param_count: int
    arch: list  # the layer descriptors this network was built from
    in_channels: int
    num_classes: int
    min_input_size: int
    param_slices: list = field(default_factory=list)  # per-layer index ranges


def validate_arch(arch) -> None:
    """Check a descriptor list is a pool-then-classify stack with matching widths."""
    if not arch:
        raise ValueError("architecture has no layers")
    kinds = [d[0] for d in arch]
    if kinds.count("gap") != 1:
        raise ValueError("architecture needs exactly one gap layer")
    gap_at = kinds.index("gap")
    if kinds[-1] != "dense" or gap_at != len(arch) - 2:
        raise ValueError("architecture must end with gap followed by one dense head")
    if any(k == "dense" for k in kinds[:-1]):
        raise ValueError("dense is only valid as the final classifier head")
    width = None
    for desc in arch:
        layer = make_layer(desc)
        if layer.kind == "dense":
            if width is not None and layer.d_in != width:
                raise ValueError(f"head input {layer.d_in} != preceding width {width}")
            width = layer.d_out
        elif layer.kind in ("conv3x3", "pointwise"):
            if width is not None and layer.c_in != width:
                raise ValueError(f"channel mismatch at {desc!r}: expected {width}")
            width = layer.c_out


def arch_param_count(arch) -> int:
    total = 0
    for desc in arch:
        for shape in make_layer(desc).param_shapes():
            total += int(np.prod(shape))
    return total


def build_network(net_id: str, arch, seed: int, tracker=None) -> Network:
    """Instantiate layers with seeded He-uniform weights (zero biases)."""
    validate_arch(arch)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_hash(net_id)]))
    layers, params, slices = [], [], []
    for desc in arch:
        layer = make_layer(desc)
        arrays = layer.init_arrays(rng)
        start = len(params)
        tensors = [Tensor(a, Storage.FP32, requires_grad=True, tracker=tracker,
                          category="param") for a in arrays]
        layer.bind(tensors)
        params.extend(tensors)
        slices.append((start, len(params)))
        layers.append(layer)
    count = sum(int(t.size) for t in params)
    in_channels = next((l.c_in for l in layers if l.kind in ("conv3x3", "pointwise")), None)
    min_size = 3 if any(l.kind == "conv3x3" for l in layers) else 1
    return Network(id=net_id, layers=layers, params=params, param_count=count,
                   arch=[list(d) for d in arch], in_channels=in_channels,
                   num_classes=layers[-1].d_out, min_input_size=min_size,
                   param_slices=slices)


def _stable_hash(text: str) -> int:
    # deterministic across processes, unlike hash()
    h = 2166136261
    for ch in text.encode():
        h = (h ^ ch) * 16777619 % (1 << 32)
    return h


@dataclass
class TraceEntry:
    layer: object
    x: Tensor
    y: Tensor


def forward(net: Network, batch: Tensor, amp: AmpPolicy | None = None,
            tracker=None, trace: list | None = None) -> Tensor:
    """Run the stack on [b, c, s, s]; returns logits [b, K].

    Every intermediate activation is allocated through `tracker`; append a
    TraceEntry per layer into `trace` to enable a later backward pass.
    """
    shape = batch.shape
    if len(shape) != 4 or shape[2] != shape[3]:
        raise ValueError(f"expected a [b, c, s, s] batch, got {tuple(shape)}")
    b, c, s, _ = shape
    if b < 1:
        raise ValueError("batch must hold at least one sample")
    if net.in_channels is not None and c != net.in_channels:
        raise ValueError(f"network {net.id} expects {net.in_channels} channels, got {c}")
    if s < net.min_input_size:
        raise ValueError(f"input size {s} below network minimum {net.min_input_size}")
    storage = amp.activation_storage if amp is not None else Storage.FP32
    h = batch
    for layer in net.layers:
        y_vals = layer.forward(h.to_f32())
        y = Tensor(y_vals, storage, tracker=tracker, category="activation")
        if trace is not None:
            trace.append(TraceEntry(layer, h, y))
        h = y
    return h


@dataclass
class LossValue:
    """Mean cross-entropy over a batch, with the softmax kept for backward."""

    value: float
    probs: Tensor  # [b, K] float32
    labels: np.ndarray
    batch_size: int

    def free(self):
        self.probs.free()


def cross_entropy(logits: Tensor, labels, tracker=None) -> LossValue:
    """Mean negative log-softmax of the true class."""
    lab = np.asarray(labels)
    b, k = logits.shape
    if lab.shape != (b,):
        raise ValueError(f"labels must have shape ({b},), got {lab.shape}")
    if lab.min() < 0 or lab.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    probs_vals = softmax(logits.to_f32())
    probs = Tensor(probs_vals, Storage.FP32, tracker=tracker, category="loss")
    picked = probs_vals[np.arange(b), lab]
    value = float(np.mean(-np.log(picked)))
    return LossValue(value=value, probs=probs, labels=lab, batch_size=b)


@dataclass
class Gradients:
    """Per-parameter float32 gradient buffers, aligned with net.params."""

    by_param: list  # list[Tensor]
    any_nonfinite: bool

    def arrays(self):
        return [g.data for g in self.by_param]

    def free(self):
        for g in self.by_param:
            g.free()


def backward(net: Network, trace: list, loss: LossValue,
             amp: AmpPolicy | None = None, tracker=None) -> Gradients:
    """Reverse pass over a recorded forward; returns unscaled fp32 gradients.

    Under a mixed-precision policy the loss is pre-multiplied by the loss
    scale and activation gradients are stored in binary16, so an overflow
    there surfaces as non-finite parameter gradients (the skip signal).
    """
    if not trace:
        raise RuntimeError("backward called without a recorded forward pass")
    scale = amp.loss_scale if amp is not None and amp.enabled else 1.0
    grad_storage = amp.activation_storage if amp is not None else Storage.FP32
    b = loss.batch_size
    probs = loss.probs.to_f32()
    dlogits = probs.copy()
    dlogits[np.arange(b), loss.labels] -= 1.0
    dlogits *= np.float32(scale / b)

    grads_by_index: dict[int, Tensor] = {}
    dy = Tensor(dlogits, grad_storage, tracker=tracker, category="activation_grad")
    # scaled-overflow infinities are the mixed-precision skip signal and are
    # expected to flow through here, so numpy's invalid-value noise is off
    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(len(trace) - 1, -1, -1):
            entry = trace[i]
            start, stop = _layer_slice(net, entry.layer)
            dx_vals, pgrads = entry.layer.backward(dy.to_f32(), entry.x.to_f32(),
                                                   entry.y.to_f32(), need_dx=(i > 0))
            for offset, g in enumerate(pgrads):
                grads_by_index[start + offset] = Tensor(
                    g.astype(np.float32, copy=False), Storage.FP32,
                    tracker=tracker, category="param_grad")
            dy.free()
            entry.y.free()
            if i > 0:
                dy = Tensor(dx_vals, grad_storage, tracker=tracker,
                            category="activation_grad")

    ordered = []
    nonfinite = False
    inv_scale = np.float32(1.0 / scale)
    for idx, param in enumerate(net.params):
        g = grads_by_index.get(idx)
        if g is None:
            g = Tensor(np.zeros_like(param.data), Storage.FP32,
                       tracker=tracker, category="param_grad")
        if scale != 1.0:
            g.data *= inv_scale
        if not np.isfinite(g.data).all():
            nonfinite = True
        ordered.append(g)
    return Gradients(by_param=ordered, any_nonfinite=nonfinite)


def _layer_slice(net: Network, layer) -> tuple:
    for l, sl in zip(net.layers, net.param_slices):
        if l is layer:
            return sl
    raise ValueError("layer does not belong to this network")
