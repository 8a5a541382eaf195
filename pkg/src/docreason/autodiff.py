"""Reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps a row-major float64 ndarray and records the operations
that produced it. Calling :meth:`Tensor.backward` on a scalar walks the tape
in reverse topological order and accumulates exact gradients into the
``grad`` attribute of every tensor created with ``requires_grad=True``.

Only the operations the model actually needs are implemented; each op stores
a closure that maps the output gradient to its parents' gradients.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation tape.

    Attributes:
        data: the float64 ndarray value (row-major).
        grad: accumulated gradient (same shape as data) after backward();
            only populated for tensors with requires_grad=True.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    __float__ = item

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    @staticmethod
    def _result(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad or p._parents for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data + other.data

        def backward(g, grads):
            grads[0] = _unbroadcast(g, self.data.shape)
            grads[1] = _unbroadcast(g, other.data.shape)

        return Tensor._result(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g, grads):
            grads[0] = -g

        return Tensor._result(-self.data, (self,), backward)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data * other.data
        a, b = self.data, other.data

        def backward(g, grads):
            grads[0] = _unbroadcast(g * b, a.shape)
            grads[1] = _unbroadcast(g * a, b.shape)

        return Tensor._result(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data / other.data
        a, b = self.data, other.data

        def backward(g, grads):
            grads[0] = _unbroadcast(g / b, a.shape)
            grads[1] = _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._result(data, (self, other), backward)

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeMismatch(f"matmul needs 2-D operands, got {self.data.shape} @ {other.data.shape}")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeMismatch(f"matmul inner dims differ: {self.data.shape} @ {other.data.shape}")
        data = self.data @ other.data
        a, b = self.data, other.data

        def backward(g, grads):
            grads[0] = g @ b.T
            grads[1] = a.T @ g

        return Tensor._result(data, (self, other), backward)

    # -- shape ops -----------------------------------------------------

    def reshape(self, *shape):
        old = self.data.shape
        data = self.data.reshape(*shape)

        def backward(g, grads):
            grads[0] = g.reshape(old)

        return Tensor._result(data, (self,), backward)

    def transpose(self):
        def backward(g, grads):
            grads[0] = g.T

        return Tensor._result(self.data.T.copy(), (self,), backward)

    def take_rows(self, indices) -> "Tensor":
        """Gather rows by integer index; backward scatter-adds."""
        idx = np.asarray(indices, dtype=np.intp)
        data = self.data[idx]
        shape = self.data.shape

        def backward(g, grads):
            acc = np.zeros(shape)
            np.add.at(acc, idx, g)
            grads[0] = acc

        return Tensor._result(data, (self,), backward)

    def slice_rows(self, start: int, stop: int) -> "Tensor":
        data = self.data[start:stop]
        shape = self.data.shape

        def backward(g, grads):
            acc = np.zeros(shape)
            acc[start:stop] = g
            grads[0] = acc

        return Tensor._result(data, (self,), backward)

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(g, grads):
            if axis is None:
                grads[0] = np.broadcast_to(g, shape).copy()
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                grads[0] = np.broadcast_to(gg, shape).copy()

        return Tensor._result(data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- nonlinearities ------------------------------------------------

    def relu(self):
        data = np.maximum(self.data, 0.0)
        mask = self.data > 0.0

        def backward(g, grads):
            grads[0] = g * mask

        return Tensor._result(data, (self,), backward)

    def tanh(self):
        data = np.tanh(self.data)

        def backward(g, grads):
            grads[0] = g * (1.0 - data * data)

        return Tensor._result(data, (self,), backward)

    def gelu(self):
        # tanh approximation: 0.5 x (1 + tanh(c (x + a x^3)))
        x = self.data
        inner = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(inner)
        data = 0.5 * x * (1.0 + t)

        def backward(g, grads):
            dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
            grads[0] = g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)

        return Tensor._result(data, (self,), backward)

    def exp(self):
        data = np.exp(self.data)

        def backward(g, grads):
            grads[0] = g * data

        return Tensor._result(data, (self,), backward)

    def log(self):
        data = np.log(self.data)
        x = self.data

        def backward(g, grads):
            grads[0] = g / x

        return Tensor._result(data, (self,), backward)

    def log_softmax(self, axis: int = -1):
        x = self.data
        m = x.max(axis=axis, keepdims=True)
        shifted = x - m
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        data = shifted - lse
        sm = np.exp(data)

        def backward(g, grads):
            grads[0] = g - sm * g.sum(axis=axis, keepdims=True)

        return Tensor._result(data, (self,), backward)

    def softmax(self, axis: int = -1):
        return self.log_softmax(axis=axis).exp()

    # -- backward ------------------------------------------------------

    def backward(self):
        """Accumulate dself/dparam into .grad of every requires_grad tensor.

        self must be a finite scalar. Repeated calls add up, which is how
        gradients accumulate across the instances of a batch.
        """
        if self.data.size != 1:
            raise ShapeMismatch(f"backward() needs a scalar, got shape {self.data.shape}")
        if not np.isfinite(self.data):
            raise NonFiniteLoss(f"loss is {float(self.data)}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        flow: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flow.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            grads: dict[int, np.ndarray] = {}
            node._backward(g, grads)
            for i, p in enumerate(node._parents):
                pg = grads.get(i)
                if pg is None:
                    continue
                key = id(p)
                if key in flow:
                    flow[key] = flow[key] + pg
                else:
                    flow[key] = pg


# -- free-function helpers ----------------------------------------------


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g, grads):
        for i in range(len(sizes)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads[i] = g[tuple(sl)]

    return Tensor._result(data, tuple(tensors), backward)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    data = np.stack([t.data for t in tensors], axis=0)

    def backward(g, grads):
        for i in range(len(tensors)):
            grads[i] = g[i]

    return Tensor._result(data, tuple(tensors), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity when train is False or rate is 0."""
    if not train or rate <= 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


def add_masked(x: Tensor, mask: np.ndarray, value: float = -1e9) -> Tensor:
    """Add `value` at positions where mask is False (for -inf style logit masks)."""
    return x + Tensor(np.where(mask, 0.0, value))


def finite_difference(loss_fn, param: Tensor, eps: float = 1e-5, entries=None) -> np.ndarray:
    """Central finite differences of a scalar loss wrt selected param entries.

    `entries` is an iterable of flat indices (all entries when None). Returns
    an array shaped like param.data with untested entries zero. This is the
    independent oracle used by the gradient-check tests.
    """
    base = param.data
    flat = base.reshape(-1)
    if entries is None:
        entries = range(flat.size)
    out = np.zeros_like(base).reshape(-1)
    for i in entries:
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(loss_fn())
        flat[i] = orig - eps
        lo = float(loss_fn())
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return out.reshape(base.shape)
