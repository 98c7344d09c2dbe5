"""Patch embedding and the lookup / compressed token pair.

Lookup tokens are patch features plus a learnable positional table. The
compressed tokens are not learned: features and positional table are
resized separately to the compressed grid and then summed, so any grid
size can be drawn from the same parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .params import normal, zeros
from .tensor import Tensor


@dataclass
class PatchEmbedParams:
    """Flattened-patch projection plus the lookup positional table.

    ``kernel`` is ``[prod(patch) * channels, D]`` and acts on patches
    flattened in row-major ``(patch..., channel)`` order, which makes it a
    stride-``patch`` convolution. ``pos_lookup`` is ``[*lookup_grid, D]``.
    """

    kernel: Tensor
    bias: Tensor
    pos_lookup: Tensor
    patch: tuple[int, ...]

    @classmethod
    def init(cls, rng: np.random.Generator, patch: Sequence[int], channels: int, dim: int,
             lookup_grid: Sequence[int], dtype=np.float32) -> "PatchEmbedParams":
        patch = tuple(patch)
        return cls(
            kernel=normal(rng, (math.prod(patch) * channels, dim), dtype),
            bias=zeros((dim,), dtype),
            pos_lookup=normal(rng, (*lookup_grid, dim), dtype),
            patch=patch,
        )

    @property
    def dim(self) -> int:
        return self.kernel.shape[1]

    @property
    def lookup_grid(self) -> tuple[int, ...]:
        return self.pos_lookup.shape[:-1]


@dataclass
class TokenPair:
    z_p: Tensor
    z_l: Tensor
    lookup_grid: tuple[int, ...]
    compressed_grid: tuple[int, ...]

    @property
    def M(self) -> int:
        return math.prod(self.compressed_grid)

    @property
    def N(self) -> int:
        return math.prod(self.lookup_grid)

    @property
    def compression_ratio(self) -> float:
        return self.N / self.M

    def replace(self, z_p: Tensor | None = None, z_l: Tensor | None = None) -> "TokenPair":
        return TokenPair(
            self.z_p if z_p is None else z_p,
            self.z_l if z_l is None else z_l,
            self.lookup_grid,
            self.compressed_grid,
        )


def unfold_patches(images: np.ndarray, patch: Sequence[int]) -> np.ndarray:
    """``[..., *spatial, c]`` to ``[..., *grid, prod(patch) * c]``, non-overlapping."""
    patch = tuple(patch)
    k = len(patch)
    spatial = images.shape[-k - 1:-1]
    if images.ndim < k + 1:
        raise DimensionError(f"expected at least {k + 1} axes, got shape {images.shape}")
    if any(s % p for s, p in zip(spatial, patch)):
        raise DimensionError(f"image extents {spatial} are not divisible by patch {patch}")
    lead = images.shape[:-k - 1]
    c = images.shape[-1]
    grid = tuple(s // p for s, p in zip(spatial, patch))
    split = lead + tuple(x for g, p in zip(grid, patch) for x in (g, p)) + (c,)
    x = images.reshape(split)
    n = len(lead)
    grid_axes = [n + 2 * i for i in range(k)]
    patch_axes = [n + 2 * i + 1 for i in range(k)]
    x = x.transpose(list(range(n)) + grid_axes + patch_axes + [n + 2 * k])
    return x.reshape(lead + grid + (math.prod(patch) * c,))


def embed_patches(images, params: PatchEmbedParams) -> Tensor:
    """Project each non-overlapping patch: ``kernel^T . patch + bias``.

    ``images`` is ``[..., h, w, c]`` (or ``[..., t, h, w, c]`` for a 3-D
    patch); returns ``[..., h_l, w_l, D]``.
    """
    data = images.data if isinstance(images, Tensor) else np.asarray(images)
    patches = unfold_patches(data.astype(params.kernel.dtype, copy=False), params.patch)
    if patches.shape[-1] != params.kernel.shape[0]:
        raise DimensionError(
            f"patch volume {patches.shape[-1]} does not match kernel rows {params.kernel.shape[0]}"
        )
    with T.cost_term("patch_embed"):
        return T.matmul(Tensor(patches), params.kernel) + params.bias


def _check_grid(compressed_grid: Sequence[int], lookup_grid: Sequence[int]) -> tuple[int, ...]:
    compressed_grid = tuple(int(g) for g in compressed_grid)
    if len(compressed_grid) != len(lookup_grid):
        raise DimensionError(f"compressed grid {compressed_grid} and lookup grid {lookup_grid} differ in rank")
    if any(g < 1 for g in compressed_grid):
        raise ConfigurationError(f"compressed grid extents must be >= 1, got {compressed_grid}")
    if any(g > l for g, l in zip(compressed_grid, lookup_grid)):
        raise ConfigurationError(
            f"compressed grid {compressed_grid} exceeds lookup grid {tuple(lookup_grid)}"
        )
    return compressed_grid


def flatten_grid(x: Tensor, rank: int) -> Tensor:
    """``[..., *grid, D]`` to ``[..., prod(grid), D]`` in row-major order."""
    lead = x.shape[:-rank - 1]
    grid = x.shape[-rank - 1:-1]
    return T.reshape(x, lead + (math.prod(grid), x.shape[-1]))


def unflatten_tokens(z: Tensor, grid: Sequence[int]) -> Tensor:
    return T.reshape(z, z.shape[:-2] + tuple(grid) + (z.shape[-1],))


def lookup_positions(params: PatchEmbedParams, grid: Sequence[int]) -> Tensor:
    """Positional table for ``grid``; resized from the trained grid when they differ."""
    grid = tuple(grid)
    if grid == params.lookup_grid:
        return params.pos_lookup
    with T.cost_term("tokenize"):
        return T.resize(params.pos_lookup, grid)


def build_token_pair(features: Tensor, params: PatchEmbedParams,
                     compressed_grid: Sequence[int]) -> TokenPair:
    """Form ``(z_p, z_l)`` from lookup features ``[..., *lookup_grid, D]``."""
    k = len(params.patch)
    lookup_grid = tuple(features.shape[-k - 1:-1])
    compressed_grid = _check_grid(compressed_grid, lookup_grid)
    pos = lookup_positions(params, lookup_grid)
    with T.cost_term("tokenize"):
        f_l = features + pos
        f_p = T.resize(features, compressed_grid) + T.resize(pos, compressed_grid)
    return TokenPair(
        z_p=flatten_grid(f_p, k),
        z_l=flatten_grid(f_l, k),
        lookup_grid=lookup_grid,
        compressed_grid=compressed_grid,
    )


def build_video_token_pair(features: Tensor, params: PatchEmbedParams,
                           compressed_grid: Sequence[int]) -> TokenPair:
    """Video variant: ``features`` is ``[..., t_l, h_l, w_l, D]``, grid ``(t_p, h_p, w_p)``."""
    if len(params.patch) != 3 or len(compressed_grid) != 3:
        raise DimensionError("video tokenization needs a 3-D patch and a (t, h, w) grid")
    return build_token_pair(features, params, compressed_grid)


def tokenize(images, params: PatchEmbedParams, compressed_grid: Sequence[int]) -> TokenPair:
    return build_token_pair(embed_patches(images, params), params, compressed_grid)
