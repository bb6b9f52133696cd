"""Synthetic classification datasets and their binary file format.

File layout (all integers little-endian):

    magic   4 bytes  b"RCVB"
    version u16
    count   u32   samples in the file
    chans   u8
    height  u16
    width   u16
    classes u16
    then per sample: label u16, followed by height*width*chans float32
    pixel values in [0, 1], stored in (height, width, channel) C-order.

Images carry two class cues. Class pairs share a per-channel brightness
offset (a color cast a pooled conv net reads quickly); within a pair, the
members differ by an oriented sinusoidal grating, 45 degrees apart and at
different frequencies, so telling them apart requires texture. A per-sample
offset jitter bounds how far the color cue alone can go. All grating
directions sit strictly inside the first quadrant and are never the mirror
of another class, so horizontal flips carry real signal for augmentation
and test-time ensembling.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError

MAGIC = b"RCVB"
VERSION = 1
_HEADER = struct.Struct("<4sHIBHHH")

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Dataset:
    images: np.ndarray  # [n, c, h, w] float32 in [0, 1]
    labels: np.ndarray  # [n] int64, < num_classes
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError("images must be [n, c, h, w]")
        if len(self.labels) != len(self.images):
            raise ValueError("labels and images disagree in length")

    def __len__(self):
        return len(self.images)


def write_dataset(path, ds: Dataset) -> None:
    n, c, h, w = ds.images.shape
    if n >= 2 ** 32 or c >= 2 ** 8 or h >= 2 ** 16 or w >= 2 ** 16:
        raise ValueError("dataset dimensions exceed the format's field widths")
    payload = bytearray(_HEADER.pack(MAGIC, VERSION, n, c, h, w, ds.num_classes))
    hwc = ds.images.transpose(0, 2, 3, 1)  # (h, w, c) sample order
    for i in range(n):
        payload += struct.pack("<H", int(ds.labels[i]))
        payload += hwc[i].astype("<f4").tobytes()
    Path(path).write_bytes(bytes(payload))


def read_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, n, c, h, w, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    sample_bytes = 2 + h * w * c * 4
    expected = _HEADER.size + n * sample_bytes
    if len(raw) != expected:
        raise DatasetFormatError(
            f"{path}: length {len(raw)} does not match header arithmetic {expected}")
    images = np.empty((n, c, h, w), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    offset = _HEADER.size
    for i in range(n):
        (labels[i],) = struct.unpack_from("<H", raw, offset)
        offset += 2
        flat = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=offset)
        images[i] = flat.reshape(h, w, c).transpose(2, 0, 1)
        offset += h * w * c * 4
    if n and labels.max() >= k:
        raise DatasetFormatError(f"{path}: label {labels.max()} >= num_classes {k}")
    return Dataset(images=images, labels=labels, num_classes=k)


def _stratified_labels(count: int, num_classes: int, rng) -> np.ndarray:
    """count labels as evenly split as possible, then shuffled."""
    base = count // num_classes
    extra = count % num_classes
    labels = np.concatenate([np.full(base + (1 if k < extra else 0), k, dtype=np.int64)
                             for k in range(num_classes)])
    rng.shuffle(labels)
    return labels


OFFSET_AMPLITUDE = 0.14
OFFSET_JITTER = 0.04
GRATING_AMPLITUDE = 0.22
DEFAULT_NOISE_SIGMA = 0.10


def gen_dataset(seed: int, num_classes: int, count: int, base_resolution: int,
                channels: int = 3, noise_sigma: float = DEFAULT_NOISE_SIGMA,
                split_index: int = 0) -> Dataset:
    """One deterministic split; split_index decorrelates train/val/test."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if count < num_classes:
        raise ValueError("count must be at least num_classes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, split_index, 7]))
    labels = _stratified_labels(count, num_classes, rng)

    r = base_resolution
    ys, xs = np.mgrid[0:r, 0:r].astype(np.float64) / max(r - 1, 1)
    n_groups = (num_classes + 1) // 2
    chan = np.arange(channels)
    offsets = OFFSET_AMPLITUDE * np.cos(
        2.0 * math.pi * np.arange(n_groups)[:, None] / n_groups + 2.1 * chan[None, :])

    images = np.empty((count, channels, r, r), dtype=np.float32)
    for i, k in enumerate(labels):
        group, member = divmod(int(k), 2)
        # members of a pair: orientations 45 degrees apart, both inside the
        # open first quadrant (flips land outside it), different frequencies
        angle = math.radians(45.0 * member + 45.0 * (group + 0.5) / n_groups)
        freq = 2.0 if member == 0 else 3.5
        u = xs * math.cos(angle) + ys * math.sin(angle)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        grating = GRATING_AMPLITUDE * np.sin(2.0 * math.pi * freq * u + phase)
        dc = offsets[group] + rng.normal(0.0, OFFSET_JITTER, size=channels)
        pattern = 0.5 + dc[:, None, None] + grating[None, :, :]
        noise = rng.normal(0.0, noise_sigma, size=(channels, r, r))
        images[i] = np.clip(pattern + noise, 0.0, 1.0)
    return Dataset(images=images, labels=labels, num_classes=num_classes)


def gen_splits(seed: int, num_classes: int, counts: dict, base_resolution: int,
               channels: int = 3, noise_sigma: float = DEFAULT_NOISE_SIGMA) -> dict:
    """train/val/test datasets from one seed, deterministically."""
    return {name: gen_dataset(seed, num_classes, counts[name], base_resolution,
                              channels=channels, noise_sigma=noise_sigma,
                              split_index=i)
            for i, name in enumerate(SPLIT_NAMES)}


def split_path(directory, name: str) -> Path:
    return Path(directory) / f"{name}.rcvb"


def write_splits(directory, splits: dict) -> dict:
    out = {}
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, ds in splits.items():
        p = split_path(directory, name)
        write_dataset(p, ds)
        out[name] = p
    return out


def read_splits(directory) -> dict:
    return {name: read_dataset(split_path(directory, name)) for name in SPLIT_NAMES}
