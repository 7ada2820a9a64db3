#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tensor Engine
=============

n-dimensional numpy-backed tensors with reverse-mode automatic differentiation.

Every operation returns a new Tensor. When any input requires a gradient, the
result records its parents and a closure that, given the upstream gradient,
accumulates partial derivatives into those parents. ``Tensor.backward`` walks
the graph in reverse topological order.

Gradients add across uses of a tensor and are only cleared explicitly (the
optimizer clears them after each step).
"""

import logging
import threading
from contextlib import contextmanager
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit

from .errors import ContractViolation

logger = logging.getLogger("dmn_segmentation.tensor")

ArrayLike = Union[np.ndarray, float, int, Sequence]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """True unless the current thread is inside a ``no_grad`` block."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference, finite differences)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """
    Array value with an optional gradient accumulator.

    Attributes:
        data: Underlying floating point ndarray
        grad: Same-shape gradient accumulator, or None
        requires_grad: Whether gradients flow into this tensor
        name: Optional label (parameter name)
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_prev", "_op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        array = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data = array
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._prev: Tuple["Tensor", ...] = ()
        self._op = "leaf"

    @classmethod
    def parameter(cls, data: ArrayLike, name: Optional[str] = None, dtype=None) -> "Tensor":
        """Create a trainable leaf."""
        return cls(np.array(data, dtype=dtype, copy=True), requires_grad=True, name=name)

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], dtype=np.float64) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------------
    # Backward pass
    # ------------------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Args:
            grad: Upstream gradient; defaults to ones for a single-element tensor
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractViolation(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        order = _topological_order(self)
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.grad = np.array(grad, dtype=self.data.dtype, copy=True).reshape(self.shape)

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_constant(other, self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_constant(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_constant(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, _constant(-1.0, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def relu(self) -> "Tensor":
        return relu(self)


# ----------------------------------------------------------------------
# Graph helpers
# ----------------------------------------------------------------------

def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order of the gradient-carrying subgraph under ``root`` (iterative DFS)."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _constant(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap arrays and scalars; Tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _result(data: np.ndarray, parents: Iterable[Tensor], op: str) -> Tensor:
    out = Tensor(data)
    parents = tuple(parents)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = parents
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    """Add ``grad`` (reduced over broadcast axes) into ``tensor.grad``."""
    if not tensor.requires_grad:
        return
    grad = _unbroadcast(np.asarray(grad), tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=tensor.dtype, copy=True)
    else:
        tensor.grad += grad


def accumulate_at(tensor: Tensor, index, grad: np.ndarray) -> None:
    """Add ``grad`` into ``tensor.grad[index]``; repeated fancy indices accumulate."""
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    if _is_basic_index(index):
        tensor.grad[index] += grad
    else:
        np.add.at(tensor.grad, index, grad)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


# ----------------------------------------------------------------------
# Elementwise arithmetic
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _constant(b, a)
    out = _result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _backward(g):
            accumulate(a, g)
            accumulate(b, g)
        out._backward = _backward
    return out


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = _constant(b, a)
    out = _result(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def _backward(g):
            accumulate(a, g)
            accumulate(b, -g)
        out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _constant(b, a)
    out = _result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _backward(g):
            if a.requires_grad:
                accumulate(a, g * b.data)
            if b.requires_grad:
                accumulate(b, g * a.data)
        out._backward = _backward
    return out


def div(a, b) -> Tensor:
    a = as_tensor(a)
    b = _constant(b, a)
    out = _result(a.data / b.data, (a, b), "div")
    if out.requires_grad:
        def _backward(g):
            if a.requires_grad:
                accumulate(a, g / b.data)
            if b.requires_grad:
                accumulate(b, -g * a.data / (b.data * b.data))
        out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Nonlinearities
# ----------------------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    out = _result(s, (x,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g * s * (1.0 - s))
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    """log(sigmoid(x)) without overflow for large |x|."""
    out = _result(log_expit(x.data), (x,), "log_sigmoid")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g * expit(-x.data))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = _result(t, (x,), "tanh")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g * (1.0 - t * t))
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _result(x.data * mask, (x,), "relu")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g * mask)
    return out


def log(x: Tensor) -> Tensor:
    out = _result(np.log(x.data), (x,), "log")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g / x.data)
    return out


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    out = _result(np.clip(x.data, low, high), (x,), "clip")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g * inside)
    return out


# ----------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------

def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), "sum")
    if out.requires_grad:
        def _backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            accumulate(x, np.broadcast_to(g, x.shape))
        out._backward = _backward
    return out


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ----------------------------------------------------------------------
# Shape manipulation
# ----------------------------------------------------------------------

def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = _result(x.data.reshape(shape), (x,), "reshape")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g.reshape(x.shape))
    return out


def transpose(x: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    out = _result(np.transpose(x.data, axes), (x,), "transpose")
    if out.requires_grad:
        inverse = None if axes is None else tuple(np.argsort(axes))
        out._backward = lambda g: accumulate(x, np.transpose(g, inverse))
    return out


def getitem(x: Tensor, index) -> Tensor:
    out = _result(np.array(x.data[index], copy=True), (x,), "getitem")
    if out.requires_grad:
        out._backward = lambda g: accumulate_at(x, index, g)
    return out


def broadcast_to(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = _result(np.array(np.broadcast_to(x.data, shape)), (x,), "broadcast_to")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, g)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("concat needs at least one tensor")
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")
    if out.requires_grad:
        bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

        def _backward(g):
            for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
                if t.requires_grad:
                    index = [slice(None)] * g.ndim
                    index[axis] = slice(start, stop)
                    accumulate(t, g[tuple(index)])
        out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("stack needs at least one tensor")
    out = _result(np.stack([t.data for t in tensors], axis=axis), tensors, "stack")
    if out.requires_grad:
        def _backward(g):
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    accumulate(t, np.take(g, i, axis=axis))
        out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Linear algebra
# ----------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a (..., n) @ b (n, m) -> (..., m)``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ContractViolation(f"matmul right operand must be 2-D, got shape {b.shape}")
    n, m = b.shape
    if a.shape[-1] != n:
        raise ContractViolation(f"matmul inner dimension mismatch: {a.shape[-1]} vs {n}")
    a2 = a.data.reshape(-1, n)
    out = _result((a2 @ b.data).reshape(a.shape[:-1] + (m,)), (a, b), "matmul")
    if out.requires_grad:
        def _backward(g):
            g2 = g.reshape(-1, m)
            if a.requires_grad:
                accumulate(a, (g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                accumulate(b, a2.T @ g2)
        out._backward = _backward
    return out


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x (..., d_in) @ weight.T + bias`` with ``weight`` shaped (d_out, d_in)."""
    x = as_tensor(x)
    if weight.ndim != 2:
        raise ContractViolation(f"weight must be 2-D (d_out, d_in), got shape {weight.shape}")
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ContractViolation(f"input dimension d_in mismatch: input has {x.shape[-1]}, weight expects {d_in}")
    if bias is not None and bias.shape != (d_out,):
        raise ContractViolation(f"bias must have shape ({d_out},), got {bias.shape}")
    x2 = x.data.reshape(-1, d_in)
    y = x2 @ weight.data.T
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _result(y.reshape(x.shape[:-1] + (d_out,)), parents, "linear")
    if out.requires_grad:
        def _backward(g):
            g2 = g.reshape(-1, d_out)
            if x.requires_grad:
                accumulate(x, (g2 @ weight.data).reshape(x.shape))
            if weight.requires_grad:
                accumulate(weight, g2.T @ x2)
            if bias is not None and bias.requires_grad:
                accumulate(bias, g2.sum(axis=0))
        out._backward = _backward
    return out
