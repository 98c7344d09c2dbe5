"""Central finite-difference checks for tape gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckResult:
    name: str
    coords_checked: int
    max_rel_error: float
    max_abs_error: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps coordinates whose true gradient is ~0 from dividing
    round-off by round-off.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    names: Sequence[str] | None = None,
    step: float = 1e-5,
    max_coords: int = 1000,
    seed: int = 0,
) -> list[GradCheckResult]:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the loss from the current ``.data`` of
    ``tensors`` on every call. Up to ``max_coords`` coordinates per tensor
    are sampled; use float64 tensors.
    """
    names = list(names) if names is not None else [t.name or f"t{i}" for i, t in enumerate(tensors)]
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    results = []
    for t, name, grad in zip(tensors, names, analytic):
        flat = t.data.reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        numeric = np.empty(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + step
            up = loss_fn().item()
            flat[c] = orig - step
            down = loss_fn().item()
            flat[c] = orig
            numeric[j] = (up - down) / (2.0 * step)
        a = grad.reshape(-1)[coords]
        rel = relative_error(a, numeric)
        results.append(
            GradCheckResult(name, len(coords), float(rel.max()), float(np.abs(a - numeric).max()))
        )
    return results
