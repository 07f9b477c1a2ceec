"""Minimal reverse-mode differentiation over float64 numpy arrays.

A :class:`Var` wraps an array together with the closure that propagates
adjoints to its parents.  The graph is implicit in the parent links; a
topological order is rebuilt on every call to :func:`backward`.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block; ops still return :class:`Var`."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Var, ...] = ()
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}{label})"

    def item(self) -> float:
        return float(self.value.reshape(()))

    # operator sugar, all routed through the functional ops below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def make(value: np.ndarray, parents: Sequence[Var], backward_fn) -> Var:
    """Create an op output; records parents only when some input needs grad."""
    out = Var(value)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    return out


def topological_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Var, params: Iterable[Var] | None = None) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(node) through the graph rooted at ``loss``.

    Leaf variables with ``requires_grad`` get their ``.grad`` overwritten.
    Returns a mapping ``id(param) -> gradient`` for ``params`` (every
    requested param appears, with zeros when it is disconnected).
    """
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    order = topological_order(loss)
    for node in reversed(order):
        adj = adjoints.get(id(node))
        if adj is None or node.backward_fn is None:
            continue
        grads = node.backward_fn(adj)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + g
            else:
                adjoints[key] = g
    for node in order:
        if node.requires_grad and not node.parents:
            node.grad = adjoints.get(id(node), np.zeros_like(node.value))
    result = {}
    if params is not None:
        for p in params:
            result[id(p)] = adjoints.get(id(p), np.zeros_like(p.value))
    return result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return make(a.value + b.value, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return make(a.value - b.value, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return make(a.value * b.value, (a, b),
                lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return make(out, (a, b),
                lambda g: (_unbroadcast(g / b.value, a.shape),
                           _unbroadcast(-g * out / b.value, b.shape)))


def exp(x) -> Var:
    x = as_var(x)
    out = np.exp(x.value)
    return make(out, (x,), lambda g: (g * out,))


def log(x) -> Var:
    x = as_var(x)
    return make(np.log(x.value), (x,), lambda g: (g / x.value,))


def tanh(x) -> Var:
    x = as_var(x)
    out = np.tanh(x.value)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x) -> Var:
    x = as_var(x)
    out = _sigmoid(x.value)
    return make(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x) -> Var:
    x = as_var(x)
    mask = x.value > 0
    return make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (x,), bw)


def log_softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return make(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def clip(x, lo: float, hi: float) -> Var:
    x = as_var(x)
    inside = (x.value >= lo) & (x.value <= hi)
    return make(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def minimum(a, b) -> Var:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = as_var(a), as_var(b)
    pick_a = a.value <= b.value
    return make(np.where(pick_a, a.value, b.value), (a, b),
                lambda g: (_unbroadcast(g * pick_a, a.shape),
                           _unbroadcast(g * ~pick_a, b.shape)))


# ---------------------------------------------------------------- shape/reduce

def vsum(x, axis=None) -> Var:
    x = as_var(x)
    shape = x.shape

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make(np.asarray(x.value.sum(axis=axis)), (x,), bw)


def mean(x, axis=None) -> Var:
    x = as_var(x)
    n = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return vsum(x, axis) * (1.0 / n)


def reshape(x, shape) -> Var:
    x = as_var(x)
    old = x.shape
    return make(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def getitem(x, idx) -> Var:
    x = as_var(x)

    def bw(g):
        full = np.zeros_like(x.value)
        np.add.at(full, idx, g)
        return (full,)

    return make(np.asarray(x.value[idx]), (x,), bw)


def concat(xs: Sequence[Var], axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return make(np.concatenate([x.value for x in xs], axis=axis), xs,
                lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs: Sequence[Var], axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    n = len(xs)
    return make(np.stack([x.value for x in xs], axis=axis), xs,
                lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def matmul(a, b) -> Var:
    """Matrix product for 2-D @ 2-D and 2-D @ 1-D operands."""
    a, b = as_var(a), as_var(b)
    out = a.value @ b.value

    def bw(g):
        if b.ndim == 1:
            return np.outer(g, b.value), a.value.T @ g
        return g @ b.value.T, a.value.T @ g

    return make(out, (a, b), bw)


def dot(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return make(np.asarray(a.value @ b.value), (a, b), lambda g: (g * b.value, g * a.value))
