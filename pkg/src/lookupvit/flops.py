"""Analytic MAC/FLOP model for ViT and LookupViT blocks, and an empirical check.

Per block, with ``N`` lookup tokens, ``M`` compressed tokens, width ``D``
and MLP factors ``p`` (compressed) and ``q`` (lookup):

=====================  ============================  ======================
term                   ViT block                     LookupViT block
=====================  ============================  ======================
attention_quadratic    ``2 N^2 D``                   ``2 M^2 D``
attention_cross        0                             ``3 N M D``
projections            ``4 N D^2``                   ``(7 M + 3 N) D^2``
mlp_compressed         ``2 p N D^2``                 ``2 p M D^2``
mlp_lookup             0                             ``2 N D^2 / q``
=====================  ============================  ======================

At ``(p, q) = (4, 2)`` the sums are ``2N^2 D + 12 N D^2`` and
``(3NM + 2M^2) D + (4N + 15M) D^2``. LookupViT projections count
``Q, K, V, O`` of the gather step (``M + 2N + M``), the four self-attention
projections on compressed tokens (``4M``) and ``V, O`` of the infuse step
(``M + N``). LayerNorm, softmax, biases, GELU, patch embedding and the
heads are left out of these totals and reported as a separate
``neglected`` count. One MAC is two FLOPs.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import model as M
from . import tensor as T
from .block import ATTN_CROSS, ATTN_QUADRATIC, MLP_COMPRESSED, MLP_LOOKUP, MODELED_TERMS, PROJECTIONS
from .config import ModelConfig
from .errors import ConfigurationError

CSV_HEADER = "size,grid_h,grid_w,N,M,D,depth,gmacs,gflops"


def vit_block_terms(N: int, D: int, p: int = 4) -> dict[str, int]:
    return {
        ATTN_QUADRATIC: 2 * N * N * D,
        ATTN_CROSS: 0,
        PROJECTIONS: 4 * N * D * D,
        MLP_COMPRESSED: 2 * p * N * D * D,
        MLP_LOOKUP: 0,
    }


def vit_block_macs(N: int, D: int, p: int = 4) -> int:
    """MACs of one pre-LN ViT block; ``2N^2 D + 12 N D^2`` at ``p = 4``."""
    if N < 1 or D < 1:
        raise ConfigurationError("N and D must be >= 1")
    return sum(vit_block_terms(N, D, p).values())


def lookup_block_terms(N: int, M: int, D: int, p: int = 4, q: int = 2) -> dict[str, int]:
    if not 1 <= M <= N:
        raise ConfigurationError(f"need 1 <= M <= N, got M={M}, N={N}")
    if D < 1 or (2 * N * D * D) % q:
        raise ConfigurationError(f"lookup MLP width D/q is fractional for D={D}, q={q}")
    return {
        ATTN_QUADRATIC: 2 * M * M * D,
        ATTN_CROSS: 3 * N * M * D,
        PROJECTIONS: (7 * M + 3 * N) * D * D,
        MLP_COMPRESSED: 2 * p * M * D * D,
        MLP_LOOKUP: 2 * N * D * D // q,
    }


def lookup_block_macs(N: int, M: int, D: int, p: int = 4, q: int = 2) -> int:
    """MACs of one LookupViT block; ``(3NM + 2M^2) D + (4N + 15M) D^2`` at ``(4, 2)``."""
    return sum(lookup_block_terms(N, M, D, p, q).values())


def cross_overhead(N: int, M: int, D: int, q: int = 2) -> dict[str, int]:
    """Work a LookupViT block adds on top of a ViT layer over its ``M`` tokens.

    ``lookup_block_macs(N, M, D) == vit_block_macs(M, D) + sum(cross_overhead(...))``.
    """
    return {
        ATTN_CROSS: 3 * N * M * D,
        "cross_projections": (3 * M + 3 * N) * D * D,
        MLP_LOOKUP: 2 * N * D * D // q,
    }


def patch_embed_macs(N: int, patch: Sequence[int], channels: int, D: int) -> int:
    return N * math.prod(patch) * channels * D


def head_macs(D: int, classes: int, heads: int = 2) -> int:
    return heads * D * classes


@dataclass
class FlopsReport:
    """MAC breakdown of a whole model (all blocks).

    ``terms`` holds the modeled block terms; ``neglected`` everything else
    (patch embedding, heads, element-wise work) when it was counted.
    """

    model: str
    N: int
    M: int
    D: int
    depth: int
    p: int
    q: int
    terms: dict[str, int]
    neglected: int = 0
    per_block: list[dict[str, int]] = field(default_factory=list)

    @property
    def macs(self) -> int:
        return sum(self.terms.values())

    @property
    def flops(self) -> int:
        return 2 * self.macs

    def total_macs(self, include_neglected: bool = False) -> int:
        return self.macs + (self.neglected if include_neglected else 0)

    @property
    def neglected_fraction(self) -> float:
        return self.neglected / (self.macs + self.neglected)

    def gflops(self, include_neglected: bool = False) -> float:
        return 2 * self.total_macs(include_neglected) / 1e9


def _scaled(terms: dict[str, int], depth: int) -> dict[str, int]:
    return {k: v * depth for k, v in terms.items()}


def vit_report(N: int, D: int, depth: int, p: int = 4, overheads: int = 0) -> FlopsReport:
    return FlopsReport("vit", N, N, D, depth, p, 1, _scaled(vit_block_terms(N, D, p), depth), overheads)


def lookup_report(N: int, M: int, D: int, depth: int, p: int = 4, q: int = 2,
                  overheads: int = 0) -> FlopsReport:
    terms = _scaled(lookup_block_terms(N, M, D, p, q), depth)
    return FlopsReport("lookupvit", N, M, D, depth, p, q, terms, overheads)


@dataclass(frozen=True)
class Preset:
    dim: int
    depth: int
    heads: int
    image_size: int = 224
    patch: int = 16
    channels: int = 3
    classes: int = 1000
    grids: tuple[tuple[int, int], ...] = ((3, 3), (5, 5), (7, 7), (10, 10))


PRESETS = {
    "b16-224": Preset(dim=768, depth=12, heads=12),
    "l16-224": Preset(dim=1024, depth=24, heads=16),
}

# Published whole-model GFLOPs at 224px; "vit" is the ViT baseline.
REFERENCE_GFLOPS = {
    "b16-224": {"vit": 35.1, (3, 3): 12.9, (5, 5): 16.5, (7, 7): 21.9, (10, 10): 33.6},
    "l16-224": {"vit": 123.5, (3, 3): 46.2, (5, 5): 58.8, (7, 7): 77.7, (10, 10): 118.5},
}


@dataclass
class SweepRow:
    size: int
    grid_h: int
    grid_w: int
    N: int
    M: int
    D: int
    depth: int
    gmacs: float
    gflops: float

    @property
    def is_vit(self) -> bool:
        return self.M == 0


def _row(size: int, grid: tuple[int, int], N: int, Mtok: int, D: int, depth: int, macs: int) -> SweepRow:
    return SweepRow(size, grid[0], grid[1], N, Mtok, D, depth, macs / 1e9, 2 * macs / 1e9)


def scaling_sweep(image_sizes: Iterable[int], grids: Iterable[tuple[int, int]], D: int = 768,
                  depth: int = 12, patch: int = 16, p: int = 4, q: int = 2,
                  include_overheads: bool = False, channels: int = 3,
                  classes: int = 1000) -> list[SweepRow]:
    """One ViT row (``grid = (0, 0)``, ``M = 0``) plus one row per grid, per image size."""
    grids = [tuple(g) for g in grids]
    rows = []
    for size in image_sizes:
        if size % patch:
            raise ConfigurationError(f"image size {size} is not divisible by patch {patch}")
        side = size // patch
        N = side * side
        embed = patch_embed_macs(N, (patch, patch), channels, D) if include_overheads else 0
        vit_head = head_macs(D, classes, 1) if include_overheads else 0
        lookup_heads = head_macs(D, classes, 2) if include_overheads else 0
        rows.append(_row(size, (0, 0), N, 0, D, depth, depth * vit_block_macs(N, D, p) + embed + vit_head))
        for g in grids:
            Mtok = g[0] * g[1]
            macs = depth * lookup_block_macs(N, Mtok, D, p, q) + embed + lookup_heads
            rows.append(_row(size, g, N, Mtok, D, depth, macs))
    return rows


def preset_rows(name: str, include_overheads: bool = False) -> list[SweepRow]:
    try:
        pre = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return scaling_sweep([pre.image_size], pre.grids, pre.dim, pre.depth, pre.patch,
                         include_overheads=include_overheads, channels=pre.channels, classes=pre.classes)


def to_csv(rows: Sequence[SweepRow], reference: dict | None = None) -> str:
    """Rows as CSV; with ``reference`` an extra ``reference_gflops`` column is appended."""
    buf = io.StringIO()
    header = CSV_HEADER + (",reference_gflops" if reference is not None else "")
    buf.write(header + "\n")
    for r in rows:
        line = f"{r.size},{r.grid_h},{r.grid_w},{r.N},{r.M},{r.D},{r.depth},{r.gmacs:.4f},{r.gflops:.4f}"
        if reference is not None:
            key = "vit" if r.is_vit else (r.grid_h, r.grid_w)
            ref = reference.get(key)
            line += "," + ("" if ref is None else f"{ref}")
        buf.write(line + "\n")
    return buf.getvalue()


def empirical_macs(config: ModelConfig, grid: Sequence[int] | None = None,
                   params: M.ModelParams | None = None, seed: int = 0) -> FlopsReport:
    """Count MACs of one instrumented forward pass on a single random image.

    ``per_block`` holds the modeled terms measured inside each block;
    ``neglected`` is every matmul outside the modeled terms plus all
    element-wise operations.
    """
    grid = tuple(grid) if grid is not None else config.compressed_grids[0]
    params = params if params is not None else M.init_params(config)
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.0, 1.0, size=(1, *config.image_size, config.channels)).astype(config.dtype)
    with T.instrument():
        M.forward(image, params, config, grid, off_menu=True)
        counters = T.active_counters()
    per_block = []
    for k in range(config.depth):
        by_term = counters.macs_by_term(block=k)
        per_block.append({t: int(by_term.get(t, 0)) for t in MODELED_TERMS})
    terms = {t: sum(b[t] for b in per_block) for t in MODELED_TERMS}
    modeled_total = sum(terms.values())
    neglected = counters.total_macs() - modeled_total + counters.total_element_ops()
    Mtok = math.prod(grid)
    model = "vit" if config.no_lookup_tokens else "lookupvit"
    return FlopsReport(model, config.N, Mtok, config.dim, config.depth, config.p, config.q,
                       terms, neglected, per_block)


def analytic_block_terms(config: ModelConfig, grid: Sequence[int] | None = None) -> dict[str, int]:
    """Analytic per-block terms for exactly what ``config`` computes.

    Equals :func:`lookup_block_terms` for the default block; ``no_infuse``,
    ``output_proj=False`` and ``no_lookup_tokens`` remove the matching work.
    """
    grid = tuple(grid) if grid is not None else config.compressed_grids[0]
    Mtok, N, D = math.prod(grid), config.N, config.dim
    if config.no_lookup_tokens:
        return vit_block_terms(Mtok, D, config.p)
    terms = lookup_block_terms(N, Mtok, D, config.p, config.q)
    infuse = not config.no_infuse
    proj = (Mtok + 2 * N) + 4 * Mtok
    if config.output_proj:
        proj += Mtok + (N if infuse else 0)
    if infuse:
        proj += Mtok
    terms[PROJECTIONS] = proj * D * D
    terms[ATTN_CROSS] = (3 if infuse else 2) * N * Mtok * D
    return terms
