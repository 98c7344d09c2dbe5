"""The LookupViT block.

One block runs four steps on a :class:`~lookupvit.tokenizer.TokenPair`:

1. gather: compressed tokens cross-attend to the lookup tokens
   (:func:`mhbc_gather`), keeping the attention weights;
2. refine: a pre-LN transformer layer on the compressed tokens only
   (:func:`vit_block`);
3. infuse: lookup tokens read the refined compressed tokens through the
   transposed attention weights from step 1 (:func:`mhbc_infuse`); no
   second softmax is computed;
4. a narrow MLP (hidden ``D / q``) on the lookup tokens.

Every matmul runs inside a :func:`~lookupvit.tensor.cost_term` named after
the term of the analytic cost model it belongs to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .params import LayerNormParams, MLPParams, normal
from .tensor import Tensor
from .tokenizer import TokenPair

LN_EPS = 1e-6

# cost-term labels shared with lookupvit.flops
ATTN_QUADRATIC = "attention_quadratic"
ATTN_CROSS = "attention_cross"
PROJECTIONS = "projections"
MLP_COMPRESSED = "mlp_compressed"
MLP_LOOKUP = "mlp_lookup"
MODELED_TERMS = (ATTN_QUADRATIC, ATTN_CROSS, PROJECTIONS, MLP_COMPRESSED, MLP_LOOKUP)


@dataclass
class BlockFlags:
    """Switches that change what a block computes."""

    scale_logits: bool = True
    no_infuse: bool = False
    vit_only: bool = False


@dataclass
class GatherParams:
    ln_pre_p: LayerNormParams
    ln_pre_l: LayerNormParams
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    ln_q: LayerNormParams
    ln_k: LayerNormParams
    w_o: Optional[Tensor] = None


@dataclass
class InfuseParams:
    ln_pre_p: LayerNormParams
    w_v: Tensor
    ln_v: LayerNormParams
    w_o: Optional[Tensor] = None


@dataclass
class SelfAttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor


@dataclass
class ViTBlockParams:
    ln_attn: LayerNormParams
    attn: SelfAttentionParams
    ln_mlp: LayerNormParams
    mlp: MLPParams


@dataclass
class BlockParams:
    gather: GatherParams
    vit: ViTBlockParams
    infuse: InfuseParams
    ln_lookup_mlp: LayerNormParams
    lookup_mlp: MLPParams
    heads: int = field(default=1)

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, heads: int, p: int = 4, q: int = 2,
             output_proj: bool = True, dtype=np.float32) -> "BlockParams":
        if dim % heads:
            raise DimensionError(f"embedding dim {dim} is not divisible by {heads} heads")
        if dim % q:
            raise DimensionError(f"embedding dim {dim} is not divisible by q={q}")

        def proj():
            return normal(rng, (dim, dim), dtype)

        def ln():
            return LayerNormParams.init(dim, dtype)

        gather = GatherParams(ln(), ln(), proj(), proj(), proj(), ln(), ln(),
                              proj() if output_proj else None)
        vit = ViTBlockParams(
            ln(), SelfAttentionParams(proj(), proj(), proj(), proj()), ln(),
            MLPParams.init(rng, dim, p * dim, dtype),
        )
        infuse = InfuseParams(ln(), proj(), ln(), proj() if output_proj else None)
        lookup_mlp = MLPParams.init(rng, dim, dim // q, dtype)
        return cls(gather, vit, infuse, ln(), lookup_mlp, heads)


def _ln(x: Tensor, p: LayerNormParams) -> Tensor:
    return T.layer_norm(x, p.gamma, p.beta, LN_EPS)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """``[..., L, D]`` to ``[..., heads, L, D / heads]``."""
    d = x.shape[-1]
    if d % heads:
        raise DimensionError(f"dim {d} is not divisible by {heads} heads")
    x = T.reshape(x, x.shape[:-1] + (heads, d // heads))
    return T.swapaxes(x, -3, -2)


def merge_heads(x: Tensor) -> Tensor:
    """Inverse of :func:`split_heads`: concatenate heads along features."""
    x = T.swapaxes(x, -3, -2)
    return T.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
              scale: float | None = None) -> tuple[Tensor, Tensor]:
    """Multi-head dot-product attention on already projected inputs.

    Returns the merged output ``[..., M, D]`` and the weights
    ``[..., heads, M, N]``. ``scale=None`` leaves logits unscaled.
    """
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    logits = T.matmul(qh, T.swapaxes(kh, -1, -2))
    if scale is not None:
        logits = logits * scale
    weights = T.softmax_rows(logits)
    return merge_heads(T.matmul(weights, vh)), weights


def _scale(dim: int, heads: int, enabled: bool) -> float | None:
    return 1.0 / math.sqrt(dim // heads) if enabled else None


def mhbc_gather(z_p: Tensor, z_l: Tensor, params: GatherParams, heads: int,
                scale_logits: bool = True) -> tuple[Tensor, Tensor]:
    """Compressed tokens attend to lookup tokens.

    ``Q = LN(LN_pre(z_p) W_q)``, ``K = LN(LN_pre(z_l) W_k)``,
    ``V = LN_pre(z_l) W_v``; returns ``z_p + merge(A V) [W_o]`` and ``A``.
    """
    if z_p.shape[-2] < 1 or z_l.shape[-2] < 1:
        raise DimensionError("gather needs at least one token on each side")
    d = z_p.shape[-1]
    with T.cost_term(PROJECTIONS):
        xp = _ln(z_p, params.ln_pre_p)
        xl = _ln(z_l, params.ln_pre_l)
        q = _ln(T.matmul(xp, params.w_q), params.ln_q)
        k = _ln(T.matmul(xl, params.w_k), params.ln_k)
        v = T.matmul(xl, params.w_v)
    with T.cost_term(ATTN_CROSS):
        out, weights = attention(q, k, v, heads, _scale(d, heads, scale_logits))
    if params.w_o is not None:
        with T.cost_term(PROJECTIONS):
            out = T.matmul(out, params.w_o)
    return z_p + out, weights


def mhsa(x: Tensor, params: SelfAttentionParams, heads: int,
         scale_logits: bool = True) -> tuple[Tensor, Tensor]:
    d = x.shape[-1]
    with T.cost_term(PROJECTIONS):
        q = T.matmul(x, params.w_q)
        k = T.matmul(x, params.w_k)
        v = T.matmul(x, params.w_v)
    with T.cost_term(ATTN_QUADRATIC):
        out, weights = attention(q, k, v, heads, _scale(d, heads, scale_logits))
    with T.cost_term(PROJECTIONS):
        out = T.matmul(out, params.w_o)
    return out, weights


def mlp(x: Tensor, params: MLPParams) -> Tensor:
    h = T.gelu(T.matmul(x, params.w1) + params.b1)
    return T.matmul(h, params.w2) + params.b2


def vit_block(z_p: Tensor, params: ViTBlockParams, heads: int, scale_logits: bool = True) -> Tensor:
    """Pre-LN transformer layer: self-attention then an MLP of width ``p * D``."""
    attn_out, _ = mhsa(_ln(z_p, params.ln_attn), params.attn, heads, scale_logits)
    z_p = z_p + attn_out
    with T.cost_term(MLP_COMPRESSED):
        z_p = z_p + mlp(_ln(z_p, params.ln_mlp), params.mlp)
    return z_p


def infuse_values(weights: Tensor, v: Tensor, heads: int) -> Tensor:
    """``merge(A^T V)``: ``[..., heads, M, N]`` weights, ``[..., M, D]`` values -> ``[..., N, D]``."""
    return merge_heads(T.matmul(T.swapaxes(weights, -1, -2), split_heads(v, heads)))


def mhbc_infuse(z_l: Tensor, z_p: Tensor, weights: Tensor, params: InfuseParams, heads: int) -> Tensor:
    """Update term for the lookup tokens, ``merge(A^T V) [W_o]``.

    ``V = LN(LN_pre(z_p) W_v)``. ``weights`` are the gather weights of the
    same block, used as-is: no softmax and no renormalization of ``A^T``.
    The caller adds the result to ``z_l``.
    """
    m, n = z_p.shape[-2], z_l.shape[-2]
    if weights.shape[-3:] != (heads, m, n):
        raise ContractError(
            f"attention weights {weights.shape} do not match heads={heads}, M={m}, N={n}"
        )
    with T.cost_term(PROJECTIONS):
        v = _ln(T.matmul(_ln(z_p, params.ln_pre_p), params.w_v), params.ln_v)
    with T.cost_term(ATTN_CROSS):
        update = infuse_values(weights, v, heads)
    if params.w_o is not None:
        with T.cost_term(PROJECTIONS):
            update = T.matmul(update, params.w_o)
    return update


def lookup_block_forward(tokens: TokenPair, params: BlockParams,
                         flags: BlockFlags | None = None) -> tuple[TokenPair, Optional[Tensor]]:
    """Run one block; returns the new token pair and the gather weights.

    With ``flags.vit_only`` only the transformer layer on ``z_p`` runs and
    the weights are ``None``.
    """
    flags = flags or BlockFlags()
    heads = params.heads
    z_p, z_l = tokens.z_p, tokens.z_l
    if flags.vit_only:
        return tokens.replace(z_p=vit_block(z_p, params.vit, heads, flags.scale_logits)), None

    z_p, weights = mhbc_gather(z_p, z_l, params.gather, heads, flags.scale_logits)
    z_p = vit_block(z_p, params.vit, heads, flags.scale_logits)
    if not flags.no_infuse:
        z_l = z_l + mhbc_infuse(z_l, z_p, weights, params.infuse, heads)
    with T.cost_term(MLP_LOOKUP):
        z_l = z_l + mlp(_ln(z_l, params.ln_lookup_mlp), params.lookup_mlp)
    return tokens.replace(z_p=z_p, z_l=z_l), weights
