"""Attention-map export and the noise-robustness curve."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import model as M
from .config import ModelConfig
from .errors import ConfigurationError

SEVERITY_SIGMA = 0.05


def attention_maps(params: M.ModelParams, config: ModelConfig, image: np.ndarray,
                   grid: Sequence[int] | None = None) -> np.ndarray:
    """Gather weights of each block averaged over heads and compressed tokens.

    Returns ``[depth, *lookup_grid]``: for every lookup position, how much
    attention it received on average in that block.
    """
    if config.no_lookup_tokens:
        raise ConfigurationError("a model without lookup tokens has no cross-attention maps")
    image = np.asarray(image)
    if image.ndim == len(config.patch) + 1:
        image = image[None]
    _, attn = M.encode(image[:1], params, config, grid, off_menu=True)
    maps = [a.data[0].mean(axis=(0, 1)).reshape(config.lookup_grid) for a in attn]
    return np.stack(maps).astype(np.float64)


def as_image(attn_map: np.ndarray) -> np.ndarray:
    """2-D view of one map; video grids stack their time slices vertically."""
    if attn_map.ndim == 2:
        return attn_map
    return attn_map.reshape(-1, attn_map.shape[-1])


def severity_sigmas(severities: Sequence[int]) -> list[float]:
    return [SEVERITY_SIGMA * s for s in severities]


def robustness_curve(params: M.ModelParams, config: ModelConfig, images: np.ndarray,
                     sigmas: Sequence[float], grid: Sequence[int] | None = None,
                     seed: int = 0) -> list[tuple[float, float]]:
    """Mean normalized feature deviation for each noise level.

    One standard-normal noise field per image is drawn once and scaled by
    each sigma, so the levels differ only in magnitude.
    """
    images = np.asarray(images)
    rng = np.random.default_rng(seed)
    unit = rng.normal(0.0, 1.0, size=images.shape)
    clean = M.features(images, params, config, grid)
    rows = []
    for sigma in sigmas:
        noisy = (images + sigma * unit).astype(images.dtype)
        dev = M.deviation_from_features(clean, M.features(noisy, params, config, grid))
        rows.append((float(sigma), float(dev.mean())))
    return rows
