"""Dense tensors with a recording tape for reverse-mode gradients.

Every kernel takes and returns :class:`Tensor` values backed by numpy
arrays. While a :class:`Tape` is active, kernels whose inputs require
gradients append a node holding a backward closure, and :func:`backward`
replays those nodes in reverse registration order.

An optional instrumentation layer (:func:`instrument`, :func:`cost_term`)
counts the multiply-accumulates done by each matmul, keyed by block index
and cost term, plus a rough element-operation count for everything else.
The FLOP model in :mod:`lookupvit.flops` is checked against these counts.

Kernels work on arrays with any number of leading batch axes; the
documented shapes describe the trailing axes.
"""
from __future__ import annotations

import contextlib
import functools
import math
from collections import Counter
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, ContractError, DimensionError, NonFiniteError

DEFAULT_DTYPE = np.float32
_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A numpy array that can take part in gradient recording.

    ``data`` is always float32 or float64. ``grad`` is filled in by
    :func:`backward` for leaf tensors created with ``requires_grad=True``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.dtype not in _FLOAT_DTYPES:
            raise TypeError(f"unsupported dtype {arr.dtype}")
        if any(s == 0 for s in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._node = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by python scalars")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Node:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: BackwardFn
    op: str


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; one tape per forward/backward pass.
    """

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]


_TAPE: ContextVar[Optional[Tape]] = ContextVar("lookupvit_tape", default=None)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every differentiable leaf.

    ``loss`` must be a scalar produced by an operation recorded on ``tape``.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    if loss._node is None or not any(n is loss._node for n in tape.nodes):
        raise ContractError("loss was not produced under this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._node is None:
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# instrumentation
# ---------------------------------------------------------------------------

_ALL_BLOCKS = object()


@dataclass
class Counters:
    """MAC and call counters filled while :func:`instrument` is active.

    ``macs`` is keyed by ``(block_index, term)``; block index is ``None``
    outside any block. ``element_ops`` counts non-matmul work by term.
    """

    macs: Counter = field(default_factory=Counter)
    element_ops: Counter = field(default_factory=Counter)
    softmax_calls: Counter = field(default_factory=Counter)

    def macs_by_term(self, block=_ALL_BLOCKS) -> Counter:
        """Sum MACs per term, for one block index or (by default) all of them."""
        out: Counter = Counter()
        for (b, term), n in self.macs.items():
            if block is _ALL_BLOCKS or b == block:
                out[term] += n
        return out

    def total_macs(self) -> int:
        return sum(self.macs.values())

    def total_element_ops(self) -> int:
        return sum(self.element_ops.values())


_COUNTERS: ContextVar[Optional[Counters]] = ContextVar("lookupvit_counters", default=None)
_TERM: ContextVar[str] = ContextVar("lookupvit_term", default="unscoped")
_BLOCK: ContextVar[Optional[int]] = ContextVar("lookupvit_block", default=None)


@contextlib.contextmanager
def instrument() -> Iterator[Counters]:
    """Count MACs and softmax calls for every kernel run inside the block."""
    counters = Counters()
    token = _COUNTERS.set(counters)
    try:
        yield counters
    finally:
        _COUNTERS.reset(token)


def active_counters() -> Counters:
    counters = _COUNTERS.get()
    if counters is None:
        raise ContractError("instrumentation is not enabled; wrap the call in instrument()")
    return counters


@contextlib.contextmanager
def cost_term(term: str) -> Iterator[None]:
    """Attribute MACs of kernels run inside the block to ``term``."""
    token = _TERM.set(term)
    try:
        yield
    finally:
        _TERM.reset(token)


@contextlib.contextmanager
def block_index(k: int) -> Iterator[None]:
    token = _BLOCK.set(k)
    try:
        yield
    finally:
        _BLOCK.reset(token)


def _count_macs(n: int) -> None:
    counters = _COUNTERS.get()
    if counters is not None:
        counters.macs[(_BLOCK.get(), _TERM.get())] += int(n)


def _count_elements(n: int) -> None:
    counters = _COUNTERS.get()
    if counters is not None:
        counters.element_ops[_TERM.get()] += int(n)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x, dtype=dtype)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], bwd: BackwardFn, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._node = None
    out.requires_grad = False
    tape = _TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        node = _Node(out, parents, bwd, op)
        tape.nodes.append(node)
        out._node = node
        out.requires_grad = True
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------------------
# elementwise and shape kernels
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    data = a.data + b.data
    _count_elements(data.size)
    sa, sb = a.shape, b.shape
    return _result(data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    data = a.data - b.data
    _count_elements(data.size)
    sa, sb = a.shape, b.shape
    return _result(data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    data = a.data * b.data
    _count_elements(data.size)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(data, (a, b), bwd, "mul")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _result(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = x.shape
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.asarray(data), (x,), bwd, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = math.prod(x.shape[a] for a in axes)
    return mul(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = tuple(xs)
    sizes = [t.shape[axis] for t in xs]
    splits = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in xs], axis=axis)
    return _result(data, xs, lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


# ---------------------------------------------------------------------------
# numeric kernels
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes.

    Records ``batch * r * k * c`` MACs under the current cost term.
    """
    a, b = _binary_operands(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands with at least two axes")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise DimensionError(f"matmul batch axes do not broadcast: {a.shape} @ {b.shape}") from exc
    r, k = a.shape[-2:]
    c = b.shape[-1]
    _count_macs(math.prod(batch) * r * k * c)
    ad, bd = a.data, b.data
    data = ad @ bd

    def bwd(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, ad.shape),
            None if gb is None else _unbroadcast(gb, bd.shape),
        )

    return _result(data, (a, b), bwd, "matmul")


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, shifted by the row max."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    counters = _COUNTERS.get()
    if counters is not None:
        counters.softmax_calls[(_BLOCK.get(), _TERM.get())] += 1
    _count_elements(3 * y.size)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), bwd, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean, unit (population) variance, then scale and shift."""
    d = x.shape[-1]
    if d < 2:
        raise ConfigurationError(f"layer_norm needs a feature axis of at least 2, got {d}")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gamma.data + beta.data
    _count_elements(5 * y.size)
    gd = gamma.data

    def bwd(g):
        gx = gb = gg = None
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gg = (g * xhat).sum(axis=lead)
        if beta.requires_grad:
            gb = g.sum(axis=lead)
        if x.requires_grad:
            dxhat = g * gd
            gx = rstd * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, gg, gb

    return _result(y, (x, gamma, beta), bwd, "layer_norm")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the erf form of the normal CDF."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    y = (xd * cdf).astype(xd.dtype, copy=False)
    _count_elements(8 * y.size)

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return ((g * (cdf + xd * pdf)).astype(xd.dtype, copy=False),)

    return _result(y, (x,), bwd, "gelu")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``logits[..., classes]`` against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    ld = logits.data
    flat = ld.reshape(-1, ld.shape[-1])
    lab = labels.reshape(-1)
    if lab.shape[0] != flat.shape[0]:
        raise DimensionError(f"{lab.shape[0]} labels for {flat.shape[0]} logit rows")
    z = flat - flat.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    rows = np.arange(flat.shape[0])
    loss = -logp[rows, lab].mean()
    _count_elements(4 * flat.size)

    def bwd(g):
        p = np.exp(logp)
        p[rows, lab] -= 1.0
        return ((g * p / flat.shape[0]).reshape(ld.shape).astype(ld.dtype, copy=False),)

    return _result(np.asarray(loss, dtype=ld.dtype), (logits,), bwd, "cross_entropy")


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=256)
def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights ``[n_out, n_in]`` with half-pixel centers.

    Output sample ``i`` reads input coordinate ``(i + 0.5) * n_in / n_out - 0.5``,
    clamped to ``[0, n_in - 1]``. Equal sizes give the identity exactly.
    """
    if n_in < 1 or n_out < 1:
        raise DimensionError(f"resize extents must be >= 1, got {n_in} -> {n_out}")
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        w[i, i0] += 1.0 - frac
        w[i, i1] += frac
    w.setflags(write=False)
    return w


def resize(x: Tensor, target: Sequence[int]) -> Tensor:
    """Separable linear resize of the ``len(target)`` axes before the channel axis."""
    target = tuple(int(t) for t in target)
    k = len(target)
    if x.ndim < k + 1:
        raise DimensionError(f"resize to {target} needs at least {k + 1} axes, got {x.shape}")
    if any(t < 1 for t in target):
        raise DimensionError(f"resize target extents must be >= 1, got {target}")
    axes = tuple(range(x.ndim - 1 - k, x.ndim - 1))
    source = tuple(x.shape[a] for a in axes)
    if source == target:
        return x
    mats = [interp_matrix(s, t).astype(x.dtype) for s, t in zip(source, target)]

    def apply(arr, transpose):
        for ax, m in zip(axes, mats):
            m = m.T if transpose else m
            moved = np.moveaxis(arr, ax, -1)
            arr = np.moveaxis(moved @ m.T, -1, ax)
        return np.ascontiguousarray(arr)

    data = apply(x.data, transpose=False)
    _count_elements((2 ** k) * data.size)
    return _result(data, (x,), lambda g: (apply(g, transpose=True),), "resize")


def bilinear_resize(x: Tensor, target: Sequence[int]) -> Tensor:
    """Resize ``[..., h, w, D]`` to ``[..., h', w', D]``."""
    if len(target) != 2:
        raise DimensionError("bilinear_resize takes a (h, w) target")
    return resize(x, target)


def trilinear_resize(x: Tensor, target: Sequence[int]) -> Tensor:
    """Resize ``[..., t, h, w, D]`` to ``[..., t', h', w', D]``."""
    if len(target) != 3:
        raise DimensionError("trilinear_resize takes a (t, h, w) target")
    return resize(x, target)
