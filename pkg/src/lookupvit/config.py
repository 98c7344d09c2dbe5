"""Model and training configuration, with strict JSON loading.

A config file is a JSON object with two sections::

    {
      "model": {"image_size": [32, 32], "patch": [4, 4], "dim": 64, ...},
      "train": {"steps": 2000, "batch_size": 32, "lr": 0.001, ...}
    }

Every key must be a field of :class:`ModelConfig` or :class:`TrainConfig`;
unknown keys and wrongly typed values raise :class:`SchemaError` naming
the offending field. Grids and sizes are JSON arrays of integers.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigurationError, SchemaError

Grid = tuple[int, ...]


@dataclass(frozen=True)
class ModelConfig:
    image_size: Grid = (32, 32)
    patch: Grid = (4, 4)
    channels: int = 3
    dim: int = 64
    depth: int = 4
    heads: int = 4
    p: int = 4
    q: int = 2
    compressed_grids: tuple[Grid, ...] = ((4, 4),)
    num_classes: int = 3
    no_lookup_tokens: bool = False
    no_infuse: bool = False
    no_lookup_loss: bool = False
    no_compressed_loss: bool = False
    random_compressed_init: bool = False
    scale_logits: bool = True
    output_proj: bool = True
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))
        object.__setattr__(self, "patch", tuple(int(s) for s in self.patch))
        object.__setattr__(
            self, "compressed_grids", tuple(tuple(int(s) for s in g) for g in self.compressed_grids)
        )
        self.validate()

    def validate(self) -> None:
        if len(self.patch) not in (2, 3) or len(self.image_size) != len(self.patch):
            raise ConfigurationError("image_size and patch must both be 2-D (image) or 3-D (video)")
        if any(s % p for s, p in zip(self.image_size, self.patch)):
            raise ConfigurationError(f"image_size {self.image_size} is not divisible by patch {self.patch}")
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")
        if self.p < 1 or self.q < 1:
            raise ConfigurationError("p and q must be >= 1")
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.dim % self.q:
            raise ConfigurationError(f"dim {self.dim} must be divisible by q {self.q}")
        if self.dim < 2:
            raise ConfigurationError("dim must be >= 2")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if not self.compressed_grids:
            raise ConfigurationError("compressed_grids must not be empty")
        for g in self.compressed_grids:
            if len(g) != len(self.patch) or any(a < 1 or a > b for a, b in zip(g, self.lookup_grid)):
                raise ConfigurationError(f"compressed grid {g} must fit inside lookup grid {self.lookup_grid}")
        if self.no_lookup_loss and self.no_compressed_loss:
            raise ConfigurationError("no_lookup_loss and no_compressed_loss leave no training objective")
        if self.random_compressed_init and len(self.compressed_grids) != 1:
            raise ConfigurationError("random_compressed_init needs exactly one compressed grid")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError("precision must be 'float32' or 'float64'")

    @property
    def lookup_grid(self) -> Grid:
        return tuple(s // p for s, p in zip(self.image_size, self.patch))

    @property
    def dtype(self):
        return np.dtype(self.precision)

    @property
    def N(self) -> int:
        return math.prod(self.lookup_grid)

    def M(self, grid: Grid | None = None) -> int:
        return math.prod(grid if grid is not None else self.compressed_grids[0])

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 1e-3
    warmup_frac: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigurationError("steps and batch_size must be >= 1")
        if self.lr < 0 or not 0 <= self.warmup_frac < 1:
            raise ConfigurationError("lr must be >= 0 and warmup_frac in [0, 1)")


def _coerce(cls, name: str, raw: dict[str, Any], section: str):
    if not isinstance(raw, dict):
        raise SchemaError(f"section {section!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    out = {}
    for key, value in raw.items():
        if key not in fields:
            raise SchemaError(f"unknown field {section}.{key}")
        default = getattr(defaults, key)
        where = f"{section}.{key}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise SchemaError(f"field {where} must be a boolean")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"field {where} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"field {where} must be a number")
            value = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise SchemaError(f"field {where} must be a string")
        elif key == "compressed_grids":
            if not isinstance(value, list) or not all(_is_int_list(g) for g in value):
                raise SchemaError(f"field {where} must be a list of integer lists")
        elif isinstance(default, tuple):
            if not _is_int_list(value):
                raise SchemaError(f"field {where} must be a list of integers")
        out[key] = value
    try:
        return cls(**out)
    except ConfigurationError as exc:
        raise SchemaError(f"section {section!r}: {exc}") from exc


def _is_int_list(v) -> bool:
    return isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v)


def parse_config(obj: dict[str, Any]) -> tuple[ModelConfig, TrainConfig]:
    if not isinstance(obj, dict):
        raise SchemaError("config must be a JSON object")
    for key in obj:
        if key not in ("model", "train"):
            raise SchemaError(f"unknown field {key}")
    return (
        _coerce(ModelConfig, "model", obj.get("model", {}), "model"),
        _coerce(TrainConfig, "train", obj.get("train", {}), "train"),
    )


def load_config(path: str | Path) -> tuple[ModelConfig, TrainConfig]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(obj)


def model_config_to_dict(cfg: ModelConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    d["image_size"] = list(cfg.image_size)
    d["patch"] = list(cfg.patch)
    d["compressed_grids"] = [list(g) for g in cfg.compressed_grids]
    return d


def train_config_to_dict(cfg: TrainConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)
