"""Parameter containers and helpers to walk them as named tensor tables."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import Tensor

INIT_STD = 0.02


def normal(rng: np.random.Generator, shape, dtype, std: float = INIT_STD) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape, dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


@dataclass
class LayerNormParams:
    gamma: Tensor
    beta: Tensor

    @classmethod
    def init(cls, dim: int, dtype) -> "LayerNormParams":
        return cls(ones((dim,), dtype), zeros((dim,), dtype))


@dataclass
class MLPParams:
    """Two-layer GELU MLP ``dim -> hidden -> dim``."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, hidden: int, dtype) -> "MLPParams":
        return cls(
            normal(rng, (dim, hidden), dtype),
            zeros((hidden,), dtype),
            normal(rng, (hidden, dim), dtype),
            zeros((dim,), dtype),
        )


def named_tensors(tree, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield ``(dotted_name, tensor)`` pairs in a fixed, declaration order.

    Walks dataclasses (by field order) and lists (by index); ``None`` and
    non-tensor leaves are skipped.
    """
    if isinstance(tree, Tensor):
        yield prefix, tree
    elif dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_tensors(getattr(tree, f.name), name)
    elif isinstance(tree, (list, tuple)):
        for i, item in enumerate(tree):
            yield from named_tensors(item, f"{prefix}.{i}" if prefix else str(i))


def tensors(tree) -> list[Tensor]:
    return [t for _, t in named_tensors(tree)]


def count_parameters(tree) -> int:
    return sum(t.data.size for t in tensors(tree))
