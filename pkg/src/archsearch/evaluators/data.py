"""Procedural 10-class image dataset standing in for CIFAR-10 at desk scale.

Each class is a fixed shape family (oriented bars, crosses, blobs, ring,
square outline) drawn at a jittered position and contrast with additive
pixel noise, then normalised with training-split statistics.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..numerics import make_rng

NUM_CLASSES = 10
MAGIC = b"TOYD"


@dataclass
class Split:
    images: np.ndarray  # N x C x H x W float64
    labels: np.ndarray  # N int64

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Split":
        return Split(self.images[:n], self.labels[:n])


@dataclass
class ToyDataset:
    train: Split
    valid: Split
    test: Split
    seed: int


def _line(yy, xx, cy, cx, angle, length, width):
    d = np.array([np.cos(angle), np.sin(angle)])
    rx, ry = xx - cx, yy - cy
    along = rx * d[0] + ry * d[1]
    across = -rx * d[1] + ry * d[0]
    return np.exp(-0.5 * (across / width) ** 2) * (np.abs(along) <= length / 2)


def _draw(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    jitter = size / 6
    cy = (size - 1) / 2 + rng.uniform(-jitter, jitter)
    cx = (size - 1) / 2 + rng.uniform(-jitter, jitter)
    s = size / 16
    length, width = 10 * s, 0.8 * s
    if label < 4:
        img = _line(yy, xx, cy, cx, label * np.pi / 4, length, width)
    elif label == 4:
        img = np.maximum(_line(yy, xx, cy, cx, 0, length, width), _line(yy, xx, cy, cx, np.pi / 2, length, width))
    elif label == 5:
        img = np.maximum(_line(yy, xx, cy, cx, np.pi / 4, length, width),
                         _line(yy, xx, cy, cx, 3 * np.pi / 4, length, width))
    elif label in (6, 7):
        sigma = (1.5 if label == 6 else 3.2) * s
        img = np.exp(-0.5 * ((yy - cy) ** 2 + (xx - cx) ** 2) / sigma ** 2)
    elif label == 8:
        r = np.hypot(yy - cy, xx - cx)
        img = np.exp(-0.5 * ((r - 4.5 * s) / width) ** 2)
    else:
        half = 4 * s
        inside = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
        edge = (np.abs(yy - cy) >= half - 1.2 * s) | (np.abs(xx - cx) >= half - 1.2 * s)
        img = (inside & edge).astype(np.float64)
    return rng.uniform(0.6, 1.0) * img


def _make_split(n: int, channels: int, size: int, noise: float, rng) -> Split:
    labels = np.tile(np.arange(NUM_CLASSES), n // NUM_CLASSES + 1)[:n]
    labels = rng.permutation(labels)
    images = np.empty((n, channels, size, size))
    for k, y in enumerate(labels):
        base = _draw(int(y), size, rng)
        images[k] = base[None] + noise * rng.standard_normal((channels, size, size))
    return Split(images, labels.astype(np.int64))


def make_toy_dataset(seed: int = 0, train_size: int = 512, valid_size: int = 256, test_size: int = 256,
                     channels: int = 1, size: int = 16, noise: float = 0.35) -> ToyDataset:
    rng = make_rng(seed)
    train = _make_split(train_size, channels, size, noise, rng)
    valid = _make_split(valid_size, channels, size, noise, rng)
    test = _make_split(test_size, channels, size, noise, rng)
    mu, sd = train.images.mean(), train.images.std()
    for split in (train, valid, test):
        split.images -= mu
        split.images /= sd
    return ToyDataset(train, valid, test, seed)


def dump_dataset(ds: ToyDataset | Split, path, split: str = "train") -> int:
    """Write images/labels as ``TOYD`` + u32 count, C, H, W + float32 images + u8 labels."""
    data = getattr(ds, split) if isinstance(ds, ToyDataset) else ds
    n, c, h, w = data.images.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<4I", n, c, h, w))
        f.write(data.images.astype("<f4").tobytes())
        f.write(data.labels.astype(np.uint8).tobytes())
    return n


def load_dump(path) -> Split:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError("not a TOYD file")
        n, c, h, w = struct.unpack("<4I", f.read(16))
        images = np.frombuffer(f.read(4 * n * c * h * w), dtype="<f4").reshape(n, c, h, w)
        labels = np.frombuffer(f.read(n), dtype=np.uint8)
    if len(labels) != n:
        raise ValueError("truncated TOYD file")
    return Split(images.astype(np.float64), labels.astype(np.int64))
