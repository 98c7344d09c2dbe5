"""Binary ``LVCK`` checkpoints.

Layout, all integers little-endian::

    magic        4 bytes   b"LVCK"
    version      u16       1
    config_len   u32
    config       config_len bytes of UTF-8 JSON (model section, sorted keys)
    count        u32       number of tensors
    count x:
      name_len   u16
      name       UTF-8 dotted parameter name
      rank       u8
      dims       rank x u32
      dtype      u8        1 = float32, 2 = float64
      nbytes     u64
      payload    nbytes of little-endian IEEE-754 values, row-major
    checksum     32 bytes  SHA-256 of every preceding byte

Loading verifies the checksum, then rebuilds the parameter structure from
the stored config and requires names and shapes to match it exactly.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig, model_config_to_dict, parse_config
from .data import atomic_write
from .errors import SchemaError
from .model import ModelParams, init_params

MAGIC = b"LVCK"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_TAG_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def serialize_params(params: ModelParams) -> bytes:
    """The named tensor table alone (no header, no checksum)."""
    named = params.named()
    out = [struct.pack("<I", len(named))]
    for name, t in named:
        raw_name = name.encode("utf-8")
        arr = t.data
        out.append(struct.pack("<H", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        out.append(struct.pack("<BQ", _DTYPE_TAGS[arr.dtype], len(payload)))
        out.append(payload)
    return b"".join(out)


def dumps(config: ModelConfig, params: ModelParams) -> bytes:
    cfg = json.dumps(model_config_to_dict(config), sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<HI", VERSION, len(cfg)) + cfg + serialize_params(params)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, raw: bytes, pos: int = 0):
        self.raw = raw
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise SchemaError("checkpoint is truncated")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def loads(raw: bytes) -> tuple[ModelConfig, ModelParams]:
    if len(raw) < 4 + 32 or raw[:4] != MAGIC:
        raise SchemaError("not an LVCK checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise SchemaError("checkpoint checksum mismatch")
    r = _Reader(body, 4)
    version, cfg_len = r.unpack("<HI")
    if version != VERSION:
        raise SchemaError(f"unsupported checkpoint version {version}")
    config, _ = parse_config({"model": json.loads(r.take(cfg_len).decode("utf-8"))})
    params = init_params(config)
    expected = dict(params.named())
    (count,) = r.unpack("<I")
    if count != len(expected):
        raise SchemaError(f"checkpoint has {count} tensors, config implies {len(expected)}")
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        tag, nbytes = r.unpack("<BQ")
        if tag not in _TAG_DTYPES:
            raise SchemaError(f"tensor {name}: unknown dtype tag {tag}")
        if name not in expected:
            raise SchemaError(f"unexpected tensor {name}")
        target = expected.pop(name)
        if tuple(dims) != target.shape:
            raise SchemaError(f"tensor {name}: shape {dims} does not match {target.shape}")
        arr = np.frombuffer(r.take(nbytes), dtype=_TAG_DTYPES[tag]).reshape(dims)
        target.data = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    if r.pos != len(body):
        raise SchemaError("trailing bytes after tensor table")
    return config, params


def save_checkpoint(path: str | Path, config: ModelConfig, params: ModelParams) -> str:
    """Write atomically; returns the SHA-256 hex digest of the file."""
    raw = dumps(config, params)
    atomic_write(path, raw)
    return hashlib.sha256(raw).hexdigest()


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ModelParams]:
    return loads(Path(path).read_bytes())


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
