"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value in the computation is a `Tensor` wrapping a numpy array. Ops
eagerly compute forward values, validate finiteness, and (when autograd is
enabled) remember their parents plus a backward rule. `backward()` walks the
recorded graph in reverse topological order and accumulates gradients into
leaf tensors that were created with `requires_grad=True`.

Conventions:
  - all data is float64, row-major;
  - gradients never flow through integer index arrays;
  - op outputs are treated as immutable (only `.grad` mutates afterwards).
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np

_node_counter = itertools.count()
_grad_enabled = True


class NonFiniteError(ArithmeticError):
    """A forward op produced NaN or Inf."""


class MissingGradError(RuntimeError):
    """An optimizer step ran before gradients were populated."""


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / memory replay)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "node_id")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, _op)
        self.data = arr
        self.grad = None
        self.node_id = next(_node_counter)
        if _grad_enabled:
            self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
            self._parents = _parents if self.requires_grad else ()
            self._backward = _backward if self.requires_grad else None
        else:
            self.requires_grad = False
            self._parents = ()
            self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Same values, cut from the tape."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *perm):
        return transpose(self, perm or None)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise / arithmetic ----------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out_data, _parents=(a, b), _backward=backward, _op="add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor(out_data, _parents=(a, b), _backward=backward, _op="sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(out_data, _parents=(a, b), _backward=backward, _op="mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor(out_data, _parents=(a, b), _backward=backward, _op="div")


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, _parents=(a,), _backward=lambda g: (-g,), _op="neg")


def sigmoid(a: Tensor) -> Tensor:
    # computed via tanh for stability at large |x|
    out_data = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="sigmoid")


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="tanh")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        return (g * out_data,)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="exp")


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="log")


def cos(a: Tensor) -> Tensor:
    out_data = np.cos(a.data)

    def backward(g):
        return (-g * np.sin(a.data),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="cos")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0.0
    out_data = np.where(mask, a.data, slope * a.data)

    def backward(g):
        return (g * np.where(mask, 1.0, slope),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="leaky_relu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(a.data, lo, hi)
    pass_through = (a.data > lo) & (a.data < hi)

    def backward(g):
        return (g * pass_through,)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="clip")


# -- linear algebra / shape ---------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(out_data, _parents=(a, b), _backward=backward, _op="matmul")


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="sum")


def tensor_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="reshape")


def transpose(a: Tensor, perm=None) -> Tensor:
    out_data = a.data.transpose(perm)
    inv = np.argsort(perm) if perm is not None else None

    def backward(g):
        return (g.transpose(inv),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ValueError("concat of zero tensors")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return Tensor(out_data, _parents=tensors, _backward=backward, _op="concat")


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows `a[idx]` along axis 0; idx may be any integer array."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="gather")


def segment_sum(a: Tensor, seg_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of `a` into `num_segments` buckets given per-row segment ids.

    Rows are accumulated in their given order, so callers that need bitwise
    determinism must present rows in a canonical order.
    """
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    out_shape = (num_segments,) + a.shape[1:]
    out_data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(out_data, seg_ids, a.data)

    def backward(g):
        return (g[seg_ids],)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="segment_sum")


def scatter_rows(base: Tensor, idx: np.ndarray, rows: Tensor) -> Tensor:
    """Copy of `base` with `out[idx] = rows`; idx must not repeat."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ValueError("scatter_rows requires unique row indices")
    out_data = base.data.copy()
    out_data[idx] = rows.data

    def backward(g):
        g_base = g.copy()
        g_base[idx] = 0.0
        return g_base, g[idx]

    return Tensor(out_data, _parents=(base, rows), _backward=backward, _op="scatter_rows")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along `axis` (max subtracted before exponentiating)."""
    if a.shape == () or a.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return Tensor(out_data, _parents=(a,), _backward=backward, _op="softmax")


def bce_loss(prob: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1-1e-7]."""
    y = np.asarray(labels, dtype=np.float64)
    p = clip(prob, 1e-7, 1.0 - 1e-7)
    term = Tensor(y) * log(p) + Tensor(1.0 - y) * log(Tensor(np.ones_like(y)) - p)
    return -tensor_mean(term)


# -- backward pass ------------------------------------------------------------


def backward(loss: Tensor, params=None) -> None:
    """Populate gradients of all reachable `requires_grad` leaves of `loss`.

    `params`, when given, is an iterable of parameter tensors; any of them
    left unreached by the graph walk gets an all-zero gradient so optimizer
    steps see a complete gradient set.
    """
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    # reversed(topo) visits every consumer before its parents, so a node's
    # dict entry is complete by the time it is popped
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
