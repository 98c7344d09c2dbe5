"""LookupViT classifier: block stack, dual pooled heads, loss and inference."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .block import BlockFlags, BlockParams, lookup_block_forward
from .config import Grid, ModelConfig
from .errors import ConfigurationError, ContractError, DimensionError
from .params import named_tensors, normal, zeros
from .tensor import Tensor
from .tokenizer import PatchEmbedParams, TokenPair, tokenize


@dataclass
class ModelParams:
    patch: PatchEmbedParams
    blocks: list[BlockParams]
    head_p_w: Tensor
    head_p_b: Tensor
    head_l_w: Tensor
    head_l_b: Tensor
    learned_z_p: Optional[Tensor] = None

    def named(self) -> list[tuple[str, Tensor]]:
        return list(named_tensors(self))

    def tensors(self) -> list[Tensor]:
        return [t for _, t in named_tensors(self)]

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.grad = None


@dataclass
class ForwardResult:
    logits_p: Tensor
    logits_l: Optional[Tensor]
    tokens: TokenPair
    attn: list[Tensor]


def init_params(config: ModelConfig) -> ModelParams:
    """Deterministic initialization from ``config.seed``.

    Projections and positional tables ~ Normal(0, 0.02); norms start at
    identity; MLP biases and both classifier heads start at zero, so the
    initial loss is exactly ``ln(num_classes)``.
    """
    rng = np.random.default_rng(config.seed)
    dtype = config.dtype
    d = config.dim
    patch = PatchEmbedParams.init(rng, config.patch, config.channels, d, config.lookup_grid, dtype)
    blocks = [
        BlockParams.init(rng, d, config.heads, config.p, config.q, config.output_proj, dtype)
        for _ in range(config.depth)
    ]
    learned = None
    if config.random_compressed_init:
        learned = normal(rng, (config.M(), d), dtype)
    return ModelParams(
        patch=patch,
        blocks=blocks,
        head_p_w=zeros((d, config.num_classes), dtype),
        head_p_b=zeros((config.num_classes,), dtype),
        head_l_w=zeros((d, config.num_classes), dtype),
        head_l_b=zeros((config.num_classes,), dtype),
        learned_z_p=learned,
    )


def block_flags(config: ModelConfig) -> BlockFlags:
    return BlockFlags(
        scale_logits=config.scale_logits,
        no_infuse=config.no_infuse,
        vit_only=config.no_lookup_tokens,
    )


def _resolve_grid(config: ModelConfig, grid: Sequence[int] | None, off_menu: bool) -> Grid:
    if grid is None:
        return config.compressed_grids[0]
    grid = tuple(int(g) for g in grid)
    if grid not in config.compressed_grids:
        if config.random_compressed_init:
            raise ConfigurationError("a learned compressed table only supports its training grid")
        if not off_menu:
            raise ConfigurationError(
                f"grid {grid} is not among the configured grids {config.compressed_grids}; "
                "pass off_menu=True to evaluate it anyway"
            )
    return grid


def encode(images, params: ModelParams, config: ModelConfig, grid: Sequence[int] | None = None,
           off_menu: bool = False) -> tuple[TokenPair, list[Tensor]]:
    """Tokenize and run every block; returns final tokens and per-block gather weights."""
    images = np.asarray(images)
    k = len(config.patch)
    if images.ndim != k + 2:
        raise DimensionError(f"expected images of shape [batch, *{config.image_size}, channels]")
    grid = _resolve_grid(config, grid, off_menu)
    tokens = tokenize(images, params.patch, grid)
    if params.learned_z_p is not None:
        base = Tensor(np.zeros(tokens.z_p.shape, dtype=config.dtype))
        tokens = tokens.replace(z_p=base + params.learned_z_p)
    flags = block_flags(config)
    attn = []
    for i, bp in enumerate(params.blocks):
        with T.block_index(i):
            tokens, weights = lookup_block_forward(tokens, bp, flags)
        if weights is not None:
            attn.append(weights)
    return tokens, attn


def pooled(tokens: TokenPair, config: ModelConfig) -> tuple[Tensor, Optional[Tensor]]:
    gp = T.mean(tokens.z_p, axis=-2)
    gl = None if config.no_lookup_tokens else T.mean(tokens.z_l, axis=-2)
    return gp, gl


def forward(images, params: ModelParams, config: ModelConfig, grid: Sequence[int] | None = None,
            off_menu: bool = False) -> ForwardResult:
    """Logits of both heads for ``images``.

    ``images`` is ``[batch, *image_size, channels]`` or a single unbatched
    image, in which case the logits are ``[num_classes]``. ``logits_l`` is
    ``None`` for the ``no_lookup_tokens`` ablation.
    """
    images = np.asarray(images)
    single = images.ndim == len(config.patch) + 1
    if single:
        images = images[None]
    tokens, attn = encode(images, params, config, grid, off_menu)
    gp, gl = pooled(tokens, config)
    with T.cost_term("head"):
        logits_p = T.matmul(gp, params.head_p_w) + params.head_p_b
        logits_l = None if gl is None else T.matmul(gl, params.head_l_w) + params.head_l_b
    if single:
        logits_p = T.reshape(logits_p, (config.num_classes,))
        if logits_l is not None:
            logits_l = T.reshape(logits_l, (config.num_classes,))
    return ForwardResult(logits_p, logits_l, tokens, attn)


def loss(logits_p: Tensor, logits_l: Optional[Tensor], labels, config: ModelConfig) -> Tensor:
    """Equal-weight cross-entropy over the two heads.

    ``no_lookup_loss`` (or a missing lookup head) keeps only the compressed
    term at weight 1; ``no_compressed_loss`` keeps only the lookup term.
    """
    labels = np.atleast_1d(np.asarray(labels))
    if labels.size and (labels.min() < 0 or labels.max() >= config.num_classes):
        raise ContractError(f"labels must lie in [0, {config.num_classes})")
    use_p = not config.no_compressed_loss
    use_l = logits_l is not None and not config.no_lookup_loss
    if not use_p and not use_l:
        raise ConfigurationError("no loss term is enabled")
    if use_p and use_l:
        return 0.5 * T.cross_entropy(logits_p, labels) + 0.5 * T.cross_entropy(logits_l, labels)
    if use_p:
        return T.cross_entropy(logits_p, labels)
    return T.cross_entropy(logits_l, labels)


def predict(logits_p, logits_l=None) -> np.ndarray | int:
    """Argmax of the mean of both heads' logits; ties go to the lowest index."""
    lp = logits_p.data if isinstance(logits_p, Tensor) else np.asarray(logits_p)
    if logits_l is None:
        avg = lp
    else:
        ll = logits_l.data if isinstance(logits_l, Tensor) else np.asarray(logits_l)
        if ll.shape != lp.shape:
            raise DimensionError(f"head logits differ in shape: {lp.shape} vs {ll.shape}")
        avg = (lp + ll) / 2
    out = np.argmax(avg, axis=-1)
    return int(out) if out.ndim == 0 else out


def head_predictions(result: ForwardResult) -> dict[str, np.ndarray]:
    """Per-head and averaged class predictions for a batched forward."""
    out = {"p": predict(result.logits_p)}
    out["l"] = predict(result.logits_l) if result.logits_l is not None else out["p"]
    out["avg"] = predict(result.logits_p, result.logits_l)
    return out


def features(images, params: ModelParams, config: ModelConfig, grid: Sequence[int] | None = None,
             off_menu: bool = True) -> np.ndarray:
    """Pooled pre-head features ``[batch, 2D]``: mean z_p then mean z_l."""
    tokens, _ = encode(np.asarray(images), params, config, grid, off_menu)
    gp, gl = pooled(tokens, config)
    parts = [gp.data] if gl is None else [gp.data, gl.data]
    return np.concatenate(parts, axis=-1).astype(np.float64)


def deviation_from_features(f_clean: np.ndarray, f_corrupt: np.ndarray) -> np.ndarray:
    """Row-wise ``||f_corrupt - f_clean|| / ||f_clean||``."""
    num = np.linalg.norm(f_corrupt - f_clean, axis=-1)
    den = np.linalg.norm(f_clean, axis=-1)
    if np.any(den == 0):
        raise ContractError("clean feature norm is zero; normalized deviation is undefined")
    return num / den


def feature_deviation(params: ModelParams, config: ModelConfig, x, x_corrupt,
                      grid: Sequence[int] | None = None):
    """Normalized feature deviation between clean and corrupted inputs.

    A single image gives a float; a batch gives one value per sample.
    """
    x, x_corrupt = np.asarray(x), np.asarray(x_corrupt)
    if x.shape != x_corrupt.shape:
        raise DimensionError(f"clean {x.shape} and corrupted {x_corrupt.shape} inputs differ in shape")
    single = x.ndim == len(config.patch) + 1
    if single:
        x, x_corrupt = x[None], x_corrupt[None]
    dev = deviation_from_features(
        features(x, params, config, grid), features(x_corrupt, params, config, grid)
    )
    return float(dev[0]) if single else dev
