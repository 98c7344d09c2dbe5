"""Adam training loop with multi-resolution grid sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import model as M
from .config import Grid, ModelConfig, TrainConfig
from .errors import ContractError, NonFiniteError
from .tensor import Tape, Tensor, backward


def lr_at(step: int, total: int, base: float, warmup_frac: float = 0.05) -> float:
    """Linear warmup over ``warmup_frac * total`` steps, then cosine decay to zero."""
    warmup = int(round(warmup_frac * total))
    if step < warmup:
        return base * (step + 1) / warmup
    span = max(1, total - warmup)
    return base * 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / span))


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, tensors: list[Tensor], lr: float) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in tensors]
            self.v = [np.zeros_like(p.data) for p in tensors]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(tensors, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if lr:
                update = (m / c1) / (np.sqrt(v / c2) + self.eps)
                p.data -= (lr * update).astype(p.dtype, copy=False)


def draw_grid(config: ModelConfig, rng: np.random.Generator) -> Grid:
    """Uniform draw over the configured compressed grids."""
    grids = config.compressed_grids
    if len(grids) == 1:
        return grids[0]
    return grids[int(rng.integers(len(grids)))]


def train_step(images: np.ndarray, labels: np.ndarray, params: M.ModelParams, config: ModelConfig,
               opt: Adam, rng: np.random.Generator, lr: float) -> dict:
    """One optimizer step on a batch; parameters are updated in place.

    The compressed grid is drawn once for the whole batch.
    """
    if len(labels) == 0:
        raise ContractError("empty batch")
    grid = draw_grid(config, rng)
    tensors = params.tensors()
    params.zero_grad()
    with Tape() as tape:
        out = M.forward(images, params, config, grid)
        loss = M.loss(out.logits_p, out.logits_l, labels, config)
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteError(f"loss became {value} at optimizer step {opt.t + 1}, grid {grid}")
    backward(tape, loss)
    opt.step(tensors, lr)
    preds = M.head_predictions(out)
    return {
        "loss": value,
        "acc_p": float(np.mean(preds["p"] == labels)),
        "acc_l": float(np.mean(preds["l"] == labels)),
        "acc_avg": float(np.mean(preds["avg"] == labels)),
        "grid": grid,
        "lr": lr,
    }


def fit(config: ModelConfig, train_cfg: TrainConfig, images: np.ndarray, labels: np.ndarray,
        params: Optional[M.ModelParams] = None,
        callback: Optional[Callable[[int, dict], None]] = None) -> tuple[M.ModelParams, list[dict]]:
    """Train from ``init_params(config)`` (or ``params``); returns params and per-step metrics.

    Batches are sampled without replacement within each pass over the data;
    all randomness comes from ``train_cfg.seed``.
    """
    params = params if params is not None else M.init_params(config)
    rng = np.random.default_rng(train_cfg.seed)
    opt = Adam(train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    n = len(labels)
    bs = min(train_cfg.batch_size, n)
    order = rng.permutation(n)
    cursor = 0
    history = []
    for step in range(train_cfg.steps):
        if cursor + bs > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + bs]
        cursor += bs
        lr = lr_at(step, train_cfg.steps, train_cfg.lr, train_cfg.warmup_frac)
        metrics = train_step(images[idx], labels[idx], params, config, opt, rng, lr)
        metrics["step"] = step
        history.append(metrics)
        if callback is not None:
            callback(step, metrics)
    return params, history


def evaluate(params: M.ModelParams, config: ModelConfig, images: np.ndarray, labels: np.ndarray,
             grid: Grid | None = None, batch_size: int = 256, off_menu: bool = True) -> dict:
    """Mean loss and accuracy of each head and of the averaged prediction."""
    n = len(labels)
    hits = {"p": 0, "l": 0, "avg": 0}
    total_loss = 0.0
    for start in range(0, n, batch_size):
        xb, yb = images[start:start + batch_size], labels[start:start + batch_size]
        out = M.forward(xb, params, config, grid, off_menu=off_menu)
        total_loss += M.loss(out.logits_p, out.logits_l, yb, config).item() * len(yb)
        for key, pred in M.head_predictions(out).items():
            hits[key] += int(np.sum(pred == yb))
    return {
        "loss": total_loss / n,
        "acc_p": hits["p"] / n,
        "acc_l": hits["l"] / n,
        "acc_avg": hits["avg"] / n,
    }
