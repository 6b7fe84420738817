"""Reverse-mode autodiff core.

Everything is a float64 numpy array wrapped in a :class:`Tensor`.  Ops record
their parents and a backward closure while gradients are enabled; calling
``backward()`` on a scalar walks the tape once and accumulates exact analytic
gradients into every tensor that requires them.  Gradients persist across
backward calls until ``zero_grad``.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (sampling and evaluation)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def backward(self):
        """Backpropagate from this scalar through the recorded tape."""
        if self.values.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.values))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    return Tensor(values)


def _result(values, parents, backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(values, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward(out)
        return out
    return Tensor(values)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to an operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return run

    return _result(a.values + b.values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))
        return run

    return _result(a.values - b.values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.values, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.values, b.shape))
        return run

    return _result(a.values * b.values, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(-g)
        return run

    return _result(-a.values, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g @ b.values.T)
            if b.requires_grad:
                b._accumulate(a.values.T @ g)
        return run

    return _result(a.values @ b.values, (a, b), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    values = np.exp(a.values)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * out.values)
        return run

    return _result(values, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g / a.values)
        return run

    return _result(np.log(a.values), (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    values = np.tanh(a.values)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * (1.0 - out.values ** 2))
        return run

    return _result(values, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    values = np.empty_like(a.values)
    pos = a.values >= 0
    values[pos] = 1.0 / (1.0 + np.exp(-a.values[pos]))
    ez = np.exp(a.values[~pos])
    values[~pos] = ez / (1.0 + ez)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * out.values * (1.0 - out.values))
        return run

    return _result(values, (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * (a.values > 0))
        return run

    return _result(np.maximum(a.values, 0.0), (a,), backward)


def leakyrelu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * np.where(a.values >= 0, 1.0, slope))
        return run

    return _result(np.where(a.values >= 0, a.values, slope * a.values), (a,), backward)


def softmax(a) -> Tensor:
    """Row-stable softmax over the last axis."""
    a = _as_tensor(a)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    values = ez / ez.sum(axis=-1, keepdims=True)

    def backward(out):
        def run(g):
            if a.requires_grad:
                y = out.values
                a._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))
        return run

    return _result(values, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]

    def backward(out):
        def run(g):
            offset = 0
            for t, size in zip(tensors, sizes):
                if t.requires_grad:
                    index = [slice(None)] * g.ndim
                    index[axis] = slice(offset, offset + size)
                    t._accumulate(g[tuple(index)])
                offset += size
        return run

    return _result(np.concatenate([t.values for t in tensors], axis=axis), tensors, backward)


def gather_rows(table, ids) -> Tensor:
    """Select rows of a 2-D tensor by integer id (embedding lookup)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min(initial=0) < 0 or ids.max(initial=-1) >= table.shape[0]:
        raise ValueError(f"ids outside [0, {table.shape[0]})")

    def backward(out):
        def run(g):
            if table.requires_grad:
                acc = np.zeros_like(table.values)
                np.add.at(acc, ids, g)
                table._accumulate(acc)
        return run

    return _result(table.values[ids], (table,), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = _as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(out):
        def run(g):
            if a.requires_grad:
                acc = np.zeros_like(a.values)
                acc[index] = g
                a._accumulate(acc)
        return run

    return _result(a.values[index], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g.reshape(a.shape))
        return run

    return _result(a.values.reshape(shape), (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def run(g):
            if a.requires_grad:
                if axis is None:
                    a._accumulate(np.broadcast_to(g, a.shape).copy())
                else:
                    expanded = g if keepdims else np.expand_dims(g, axis)
                    a._accumulate(np.broadcast_to(expanded, a.shape).copy())
        return run

    return _result(a.values.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.values.size if axis is None else a.shape[axis]

    def backward(out):
        def run(g):
            if a.requires_grad:
                if axis is None:
                    a._accumulate(np.broadcast_to(g / count, a.shape).copy())
                else:
                    expanded = g if keepdims else np.expand_dims(g, axis)
                    a._accumulate(np.broadcast_to(expanded / count, a.shape).copy())
        return run

    return _result(a.values.mean(axis=axis, keepdims=keepdims), (a,), backward)


def dropout(a, rate: float, rng) -> Tensor:
    """Inverted dropout; rate 0 returns the input tensor unchanged."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        return a
    a = _as_tensor(a)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def backward(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(g * mask)
        return run

    return _result(a.values * mask, (a,), backward)


def cross_entropy(probs, targets) -> Tensor:
    """Per-row negative log likelihood of integer targets; returns shape (B,)."""
    probs = _as_tensor(probs)
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(len(targets))
    picked = np.maximum(probs.values[rows, targets], 1e-300)

    def backward(out):
        def run(g):
            if probs.requires_grad:
                acc = np.zeros_like(probs.values)
                acc[rows, targets] = -g / picked
                probs._accumulate(acc)
        return run

    return _result(-np.log(picked), (probs,), backward)


def binary_cross_entropy(p, y, eps: float = 1e-12) -> Tensor:
    """Elementwise -[y log p + (1-y) log(1-p)] with probabilities clamped to
    [eps, 1-eps]; the gradient is zero where the clamp is active."""
    p = _as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    clamped = np.clip(p.values, eps, 1.0 - eps)
    inside = (p.values > eps) & (p.values < 1.0 - eps)

    def backward(out):
        def run(g):
            if p.requires_grad:
                grad = (-y / clamped + (1.0 - y) / (1.0 - clamped)) * inside
                p._accumulate(g * grad)
        return run

    values = -(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped))
    return _result(values, (p,), backward)


class ParamSet:
    """An ordered, named collection of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.asarray(values, dtype=np.float64).copy(), requires_grad=True)
        tensor.zero_grad()
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.zero_grad()

    def copy(self) -> "ParamSet":
        duplicate = ParamSet()
        for name, tensor in self._params.items():
            duplicate.register(name, tensor.values)
        return duplicate

    def load_values(self, other: "ParamSet"):
        """Overwrite values in place from a ParamSet with identical names/shapes."""
        if self.names() != other.names():
            raise ValueError("parameter names differ")
        for name, tensor in self._params.items():
            source = other[name]
            if source.shape != tensor.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            tensor.values = source.values.copy()
        return self

    def first_nonfinite(self):
        for name, tensor in self._params.items():
            if not np.isfinite(tensor.values).all():
                return name
        return None

    def size(self) -> int:
        return sum(t.values.size for t in self._params.values())
