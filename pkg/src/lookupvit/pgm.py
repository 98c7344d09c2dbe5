"""Plain (P2) PGM writer and reader for attention maps."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import atomic_write
from .errors import SchemaError

MAXVAL = 255


def quantize(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to ``0..255``; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.int64)
    return np.rint((values - lo) / (hi - lo) * MAXVAL).astype(np.int64)


def encode_pgm(values: np.ndarray, comment: str | None = None) -> bytes:
    grid = quantize(values)
    if grid.ndim != 2:
        raise SchemaError("PGM images must be 2-D")
    h, w = grid.shape
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{w} {h}")
    lines.append(str(MAXVAL))
    lines.extend(" ".join(str(v) for v in row) for row in grid)
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pgm(path: str | Path, values: np.ndarray, comment: str | None = None) -> None:
    atomic_write(path, encode_pgm(values, comment))


def decode_pgm(raw: bytes) -> np.ndarray:
    tokens = []
    for line in raw.decode("ascii").splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise SchemaError("not a plain PGM (P2) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        pixels = [int(t) for t in tokens[4:]]
    except (IndexError, ValueError) as exc:
        raise SchemaError("malformed PGM header or pixel data") from exc
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise SchemaError("invalid PGM dimensions or maxval")
    if len(pixels) != w * h:
        raise SchemaError(f"PGM declares {w}x{h} pixels but holds {len(pixels)}")
    arr = np.array(pixels, dtype=np.int64).reshape(h, w)
    if arr.min() < 0 or arr.max() > maxval:
        raise SchemaError("PGM pixel outside [0, maxval]")
    return arr


def read_pgm(path: str | Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
