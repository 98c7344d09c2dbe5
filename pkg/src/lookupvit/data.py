"""Procedural image-classification data and the ``LVDS`` dataset file.

Dataset file layout (all integers little-endian)::

    magic     4 bytes  b"LVDS"
    version   u16      1
    classes   u32
    count     u32
    height    u32
    width     u32
    channels  u32
    seed      u64
    images    count * height * width * channels bytes (uint8, row-major)
    labels    count * u16
"""
from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, SchemaError

MAGIC = b"LVDS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIIIQ")

FAMILIES = ("bars", "cross", "checker", "blob")


@dataclass
class Dataset:
    images: np.ndarray  # uint8 [n, h, w, c]
    labels: np.ndarray  # int64 [n]
    classes: int
    seed: int

    def __post_init__(self):
        if self.images.dtype != np.uint8 or self.images.ndim != 4:
            raise SchemaError("images must be a uint8 array [n, h, w, c]")
        if len(self.images) != len(self.labels):
            raise SchemaError("image and label counts differ")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise SchemaError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def as_float(self) -> np.ndarray:
        return to_float(self.images)

    def to_bytes(self) -> bytes:
        n, h, w, c = self.images.shape
        header = _HEADER.pack(MAGIC, VERSION, self.classes, n, h, w, c, self.seed)
        return header + self.images.tobytes() + self.labels.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Dataset":
        if len(raw) < _HEADER.size:
            raise SchemaError("dataset file is truncated")
        magic, version, classes, n, h, w, c, seed = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise SchemaError(f"bad dataset magic {magic!r}")
        if version != VERSION:
            raise SchemaError(f"unsupported dataset version {version}")
        body = _HEADER.size
        size = n * h * w * c
        if len(raw) != body + size + 2 * n:
            raise SchemaError("dataset payload length does not match its header")
        images = np.frombuffer(raw, dtype=np.uint8, count=size, offset=body).reshape(n, h, w, c).copy()
        labels = np.frombuffer(raw, dtype="<u2", count=n, offset=body + size).astype(np.int64)
        return cls(images, labels, classes, seed)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def to_float(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    return (images.astype(np.float64) / 255.0).astype(dtype)


def atomic_write(path: str | Path, payload: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: Dataset, path: str | Path) -> None:
    atomic_write(path, ds.to_bytes())


def load_dataset(path: str | Path) -> Dataset:
    return Dataset.from_bytes(Path(path).read_bytes())


def _pattern(family: str, variant: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    yy = (yy + 0.5) / size
    xx = (xx + 0.5) / size
    angle = variant * np.pi / 4
    if family == "bars":
        theta = angle + rng.uniform(-0.15, 0.15)
        freq = rng.uniform(3.0, 5.0)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        return (np.sin(2 * np.pi * (freq * u + rng.uniform())) > 0).astype(np.float64)
    if family == "cross":
        cy, cx = rng.uniform(0.3, 0.7, size=2)
        half = rng.uniform(0.06, 0.1)
        dy, dx = yy - cy, xx - cx
        c, s = np.cos(angle), np.sin(angle)
        u, v = dx * c + dy * s, -dx * s + dy * c
        return ((np.abs(u) < half) | (np.abs(v) < half)).astype(np.float64)
    if family == "checker":
        cell = rng.uniform(0.12, 0.2)
        oy, ox = rng.uniform(0, cell, size=2)
        c, s = np.cos(angle), np.sin(angle)
        u, v = xx * c + yy * s, -xx * s + yy * c
        return ((np.floor((u + ox) / cell) + np.floor((v + oy) / cell)) % 2).astype(np.float64)
    # blob
    img = np.zeros((size, size))
    for _ in range(variant + 1):
        cy, cx = rng.uniform(0.25, 0.75, size=2)
        sigma = rng.uniform(0.08, 0.15)
        img += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return np.clip(img, 0.0, 1.0)


def gen_synthetic(classes: int, n: int, size: int, seed: int, channels: int = 3,
                  noise: float = 0.1) -> Dataset:
    """Balanced, deterministic dataset of class-distinctive patterns.

    Class ``k`` draws from pattern family ``k % 4`` (bars, crosses,
    checkerboards, blobs) with variant ``k // 4`` (rotation, or blob count).
    Each sample gets a random color tint, random pattern parameters and
    additive Gaussian noise. Classes get ``n // classes`` samples each, the
    first ``n % classes`` classes one more.
    """
    if classes < 2:
        raise ConfigurationError("need at least two classes")
    if n < classes:
        raise ConfigurationError(f"n={n} is smaller than classes={classes}")
    rng = np.random.default_rng(seed)
    counts = [n // classes + (1 if k < n % classes else 0) for k in range(classes)]
    labels = np.concatenate([np.full(c, k, dtype=np.int64) for k, c in enumerate(counts)])
    labels = labels[rng.permutation(n)]
    images = np.empty((n, size, size, channels), dtype=np.uint8)
    for i, k in enumerate(labels):
        base = _pattern(FAMILIES[k % 4], k // 4, size, rng)
        tint = rng.uniform(0.5, 1.0, size=channels)
        bg = rng.uniform(0.0, 0.3, size=channels)
        img = bg + base[..., None] * (tint - bg)
        img = img + rng.normal(0.0, noise, size=img.shape)
        images[i] = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return Dataset(images, labels, classes, seed)
