"""
Dense numeric core: a small reverse-mode tape over float64 numpy arrays.

Every op returns a new :class:`Tensor`. When gradient recording is on and
at least one input requires a gradient, the op keeps a reference to its
inputs and a closure mapping the output gradient to input gradients.
``Tensor.backward`` walks that graph in reverse topological order and
accumulates into the ``grad`` buffers of :class:`Parameter` leaves.
"""

from __future__ import annotations

import contextlib
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

_logger = logging.getLogger(__name__)

DTYPE = np.float64
LOG_FLOOR = 1e-12

_grad_enabled = True


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class GradCheckError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "_parents", "_backward", "requires_grad")

    def __init__(self, data, parents: tuple = (), backward=None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable Parameter's grad."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if isinstance(node, Parameter):
                node.grad += g
                continue
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)


class Parameter(Tensor):
    """A named trainable leaf. ``grad`` has the value's shape and starts at zero."""

    __slots__ = ("name", "grad")

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=DTYPE, copy=True), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class ModelParams:
    """Ordered registry of parameters addressable by dotted name."""

    def __init__(self):
        self._params: "OrderedDict[str, Parameter]" = OrderedDict()

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self._params.items())

    def grads(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.grad.copy()) for n, p in self._params.items())

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for n, p in self._params.items():
            out.add(n, p.data)
        return out


def _topo_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; recurrent graphs are too deep for recursion
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, tuple(parents), backward, requires_grad=True)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    xd = x.data
    e = np.exp(-np.abs(xd))
    y = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def log(x, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of ``max(x, floor)``; zero gradient where the floor is active. NaN passes through."""
    x = as_tensor(x)
    xd = x.data
    active = (xd > floor) | np.isnan(xd)
    y = np.log(np.where(active, xd, floor))
    return _make(y, (x,), lambda g: (np.where(active, g / np.where(active, xd, 1.0), 0.0),))


# ---------------------------------------------------------------------------
# linear algebra and shape
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both inputs at least 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError(f"matmul needs >=2-D inputs, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _make(np.matmul(ad, bd), (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """``x @ w.T (+ b)`` for ``w`` stored as (out, in); a 1-D ``x`` gives a 1-D result."""
    x = as_tensor(x)
    if x.ndim == 1:
        out = reshape(matmul(reshape(x, (1, -1)), transpose(w)), (-1,))
    else:
        out = matmul(x, transpose(w))
    return out if b is None else add(out, b)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def index(x, idx) -> Tensor:
    """Numpy-style indexing (basic or advanced)."""
    x = as_tensor(x)
    shape = x.shape
    fancy = isinstance(idx, (np.ndarray, list)) or (
        isinstance(idx, tuple) and any(isinstance(i, (np.ndarray, list)) for i in idx)
    )

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        if fancy:
            np.add.at(out, idx, g)
        else:
            out[idx] += g
        return (out,)

    return _make(x.data[idx], (x,), backward)


def gather(table, ids) -> Tensor:
    """Row gather: ``table[ids]`` for an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"row index out of range [0, {table.shape[0]})")
    shape = table.shape

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, ids, g)
        return (out,)

    return _make(table.data[ids], (table,), backward)


def _along_index(idx: np.ndarray, axis: int) -> tuple:
    full = list(np.indices(idx.shape, sparse=True))
    full[axis] = idx
    return tuple(full)


def take_along(x, idx, axis: int) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape
    axis = axis % x.ndim
    target = list(shape)
    target[axis] = idx.shape[axis]
    idx = np.broadcast_to(idx, target)

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, _along_index(idx, axis), g)
        return (out,)

    return _make(np.take_along_axis(x.data, idx, axis=axis), (x,), backward)


def scatter_add(src, idx, size: int) -> Tensor:
    """Scatter ``src`` (..., L) into (..., size) at last-axis positions ``idx``; repeats sum."""
    src = as_tensor(src)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != src.shape:
        raise ContractError(f"scatter index shape {idx.shape} != source shape {src.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ContractError(f"scatter index out of range [0, {size})")
    out = np.zeros(src.shape[:-1] + (size,), dtype=DTYPE)
    np.add.at(out, _along_index(idx, src.ndim - 1), src.data)
    return _make(out, (src,), lambda g: (np.take_along_axis(g, idx, axis=-1),))


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# distributions and losses
# ---------------------------------------------------------------------------


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Max-stabilised softmax. ``mask`` (broadcastable bool) zeroes excluded entries."""
    x = as_tensor(x)
    if x.data.size == 0 or x.shape[axis] == 0:
        raise ContractError("softmax of an empty vector")
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        xd = np.where(mask, xd, -np.inf)
    m = np.max(xd, axis=axis, keepdims=True)
    e = np.exp(xd - m)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _make(y, (x,), backward)


def cross_entropy(probs, target, floor: float = LOG_FLOOR) -> Tensor:
    """Per-row ``-log(max(probs[target], floor))`` for probs (..., K) and integer target (...)."""
    probs = as_tensor(probs)
    target = np.asarray(target, dtype=np.int64)
    picked = take_along(probs, target[..., None], axis=-1)
    return mul(log(reshape(picked, target.shape), floor), -1.0)


def binary_cross_entropy(probs, target, floor: float = LOG_FLOOR) -> Tensor:
    """Summed BCE with probabilities clamped to [floor, 1 - floor]."""
    probs = as_tensor(probs)
    y = np.asarray(target, dtype=DTYPE)
    p = probs.data
    inside = (p > floor) & (p < 1.0 - floor)
    pc = np.clip(p, floor, 1.0 - floor)
    value = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))

    def backward(g):
        return (np.where(inside, g * (pc - y) / (pc * (1.0 - pc)), 0.0),)

    return _make(np.asarray(value), (probs,), backward)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

GRU_NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


@dataclass
class GruCellParams:
    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @classmethod
    def from_registry(cls, params: ModelParams, prefix: str) -> "GruCellParams":
        return cls(*(params[f"{prefix}.{n}"] for n in GRU_NAMES))

    @property
    def hidden_size(self) -> int:
        return self.U_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]


def init_gru(params: ModelParams, prefix: str, input_size: int, hidden_size: int, rng, scale: float = 0.08):
    for n in ("W_z", "W_r", "W_h"):
        params.add(f"{prefix}.{n}", rng.uniform(-scale, scale, (hidden_size, input_size)))
    for n in ("U_z", "U_r", "U_h"):
        params.add(f"{prefix}.{n}", rng.uniform(-scale, scale, (hidden_size, hidden_size)))
    for n in ("b_z", "b_r", "b_h"):
        params.add(f"{prefix}.{n}", np.zeros(hidden_size))


def gru_cell(x, h_prev, p: GruCellParams) -> Tensor:
    """One GRU step on (…, input) / (…, hidden) rows.

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * h~
    """
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    if x.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size:
        raise ContractError(
            f"gru_cell expects input {p.input_size} / hidden {p.hidden_size}, "
            f"got {x.shape[-1]} / {h_prev.shape[-1]}"
        )
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, -1))
        h_prev = reshape(h_prev, (1, -1))
    h = gru_step_projected(
        linear(x, p.W_z, p.b_z), linear(x, p.W_r, p.b_r), linear(x, p.W_h, p.b_h), h_prev, p
    )
    return reshape(h, (-1,)) if squeeze else h


def gru_step_projected(xz, xr, xh, h_prev, p: GruCellParams) -> Tensor:
    z = sigmoid(xz + linear(h_prev, p.U_z))
    r = sigmoid(xr + linear(h_prev, p.U_r))
    cand = tanh(xh + linear(r * h_prev, p.U_h))
    return h_prev + z * (cand - h_prev)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(f: Callable[[ModelParams], Tensor], params: ModelParams, eps: float = 1e-5,
               names: Sequence[str] | None = None) -> float:
    """Max over parameter entries of |analytic - central difference| / max(1, |central difference|)."""
    if not 0.0 < eps <= 1e-3:
        raise ContractError(f"eps must lie in (0, 1e-3], got {eps}")
    params.zero_grad()
    loss = f(params)
    if not math.isfinite(loss.item()):
        raise GradCheckError("non-finite loss at the unperturbed point")
    loss.backward()
    analytic = params.grads()
    worst, worst_at = 0.0, None
    with no_grad():
        for p in params:
            if names is not None and p.name not in names:
                continue
            flat = p.data.reshape(-1)
            g = analytic[p.name].reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                fp = f(params).item()
                flat[k] = orig - eps
                fm = f(params).item()
                flat[k] = orig
                if not (math.isfinite(fp) and math.isfinite(fm)):
                    raise GradCheckError(f"non-finite loss when perturbing {p.name}[{k}] by +/-{eps}")
                numeric = (fp - fm) / (2.0 * eps)
                err = abs(g[k] - numeric) / max(1.0, abs(numeric))
                if err > worst:
                    worst, worst_at = err, (p.name, k)
    params.zero_grad()
    _logger.debug("grad_check worst relative error %.3e at %s", worst, worst_at)
    return worst
