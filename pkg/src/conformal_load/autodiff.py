"""Minimal reverse-mode automatic differentiation on dense 2-D numpy arrays.

Every value is a Tensor wrapping a float64 matrix. Operations build a DAG;
``Tensor.backward()`` walks it in reverse topological order and accumulates
gradients into the leaves. The op set is intentionally small: exactly what
graph-convolutional training needs (matmul, broadcasting arithmetic, ReLU,
sigmoid, dropout, reductions, sqrt, elementwise maximum).

All forward results are checked for NaN/Inf: a non-finite intermediate is a
bug or a diverged training run, never a value to propagate silently.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
    return arr


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ValueError(f"cannot reduce grad {grad.shape} to {shape}")
    return out


class Tensor:
    """A 2-D float64 matrix node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _check_finite(_as_matrix(data), "tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a 1x1 tensor")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = _check_finite(data, op)
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    def backward(self, grad=None) -> None:
        """Accumulate gradients of this output into every reachable leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = _as_matrix(grad)
            if grad.shape != self.shape:
                raise ValueError("output gradient shape mismatch")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                # leaf: accumulate into .grad
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators -----------------------------------------------------------

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

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(data, "mul", (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(data, "matmul", (a, b), backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    data = a.data.T.copy()

    def backward(g):
        return (g.T,)

    return Tensor._from_op(data, "transpose", (a,), backward)


def propagate(prop, h) -> Tensor:
    """Multiply by a constant (possibly sparse) matrix on the left: prop @ h.

    `prop` carries no gradient; this is the hot path for graph propagation,
    where the matrix is fixed per training session and usually very sparse.
    """
    h = as_tensor(h)
    data = np.asarray(prop @ h.data)
    prop_t = prop.T

    def backward(g):
        return (np.asarray(prop_t @ g),)

    return Tensor._from_op(data, "propagate", (h,), backward)


def gather_rows(a, idx) -> Tensor:
    """Select rows by index; backward scatter-adds into the source rows."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise IndexError("row index out of range")
    data = a.data[idx]

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._from_op(data, "gather_rows", (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)
    active = a.data > 0.0

    def backward(g):
        return (g * active,)

    return Tensor._from_op(data, "relu", (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * data * (1.0 - data),)

    return Tensor._from_op(data, "sigmoid", (a,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; the gradient follows the larger branch (ties go to `a`)."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return Tensor._from_op(data, "maximum", (a, b), backward)


def tsum(a) -> Tensor:
    a = as_tensor(a)
    data = np.array([[a.data.sum()]])

    def backward(g):
        return (np.full(a.shape, g[0, 0]),)

    return Tensor._from_op(data, "sum", (a,), backward)


def tmean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    data = np.array([[a.data.mean()]])

    def backward(g):
        return (np.full(a.shape, g[0, 0] / n),)

    return Tensor._from_op(data, "mean", (a,), backward)


def sqrt(a) -> Tensor:
    """Elementwise square root.

    The backward pass clamps the denominator so a sqrt sitting on top of a
    sum of squares yields gradient 0 (not NaN) when the sum is exactly zero.
    """
    a = as_tensor(a)
    if np.any(a.data < 0.0):
        raise ValueError("sqrt of negative value")
    data = np.sqrt(a.data)
    denom = np.maximum(data, 1e-12)

    def backward(g):
        return (g * 0.5 / denom,)

    return Tensor._from_op(data, "sqrt", (a,), backward)


class DropoutKind(Enum):
    OFF = "off"
    TRAIN = "train"
    MONTE_CARLO = "monte_carlo"


class DropoutMode:
    """Dropout behaviour: disabled, training-time, or Monte-Carlo sampling."""

    __slots__ = ("kind", "rate")

    def __init__(self, kind: DropoutKind, rate: float = 0.0):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.kind = kind
        self.rate = rate

    @staticmethod
    def off() -> "DropoutMode":
        return DropoutMode(DropoutKind.OFF, 0.0)


def dropout_apply(x, mode: DropoutMode, rng: np.random.Generator) -> Tensor:
    """Zero entries with probability `mode.rate`, scaling survivors by 1/(1-p).

    OFF mode (or rate 0) is the identity. TRAIN and MONTE_CARLO behave the
    same way per call; the distinction is who supplies the rng stream.
    """
    x = as_tensor(x)
    if mode.kind is DropoutKind.OFF or mode.rate == 0.0:
        return x
    keep = 1.0 - mode.rate
    mask = (rng.random(x.shape) < keep) / keep
    data = x.data * mask

    def backward(g):
        return (g * mask,)

    return Tensor._from_op(data, "dropout", (x,), backward)


class Param:
    """A named trainable matrix with its gradient buffer."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, value):
        self.name = name
        self.tensor = value if isinstance(value, Tensor) else Tensor(value)
        self.tensor.requires_grad = True

    @property
    def value(self) -> np.ndarray:
        return self.tensor.data

    @value.setter
    def value(self, arr) -> None:
        arr = _as_matrix(arr)
        if arr.shape != self.tensor.shape:
            raise ValueError("param shape is fixed after construction")
        self.tensor.data = arr

    @property
    def grad(self) -> np.ndarray:
        g = self.tensor.grad
        return np.zeros_like(self.tensor.data) if g is None else g

    def zero_grad(self) -> None:
        self.tensor.zero_grad()

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.tensor.shape})"


def glorot_uniform(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot/Xavier uniform init for a rows x cols weight matrix."""
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
