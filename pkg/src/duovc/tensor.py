"""Reverse-mode automatic differentiation over dense float arrays.

A :class:`Tensor` wraps an immutable numpy array plus an optional
gradient buffer.  Operations record a computation graph (parents and a
backward closure, micrograd style); ``backward()`` on a scalar walks the
graph in reverse topological order.  Compute is float32 by default;
every op preserves the dtype of its inputs so the gradient checker can
re-run whole graphs in float64.

Every op validates that its result is finite and never mutates its
inputs (input arrays are marked read-only on construction).
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .backend import kernels
from .errors import ContractError, NonFiniteError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Immutable n-d float array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.array(data, dtype=dtype)
        _check_finite(arr, "tensor")
        arr.setflags(write=False)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._op = "leaf"

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                backward: Callable[["Tensor"], None] | None, op: str) -> "Tensor":
        """Wrap an op result, recording the graph edge when tracking is on."""
        _check_finite(data, op)
        out = cls.__new__(cls)
        if not data.flags.writeable:
            data = data.copy()
        data.setflags(write=False)
        out.data = data
        out.grad = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        out._op = op
        return out

    # -- basic properties ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- autograd ---------------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node)

    def _accum_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Same values, disconnected from the graph (no gradient flows back)."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out._op = "detach"
        return out

    def assign(self, data: np.ndarray) -> None:
        """Replace the stored values (optimizer update; single-threaded).

        Swaps in a fresh frozen array, leaving previously shared data intact.
        """
        if data.shape != self.data.shape:
            raise ShapeError(f"assign shape {data.shape} != {self.data.shape}")
        arr = np.array(data, dtype=self.data.dtype)
        _check_finite(arr, "assign")
        arr.setflags(write=False)
        self.data = arr

    # -- arithmetic --------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return tmean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def rows(self, t0: int, t1: int):
        return rows(self, t0, t1)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by op {op!r}")


def _as_const(x, dtype) -> np.ndarray:
    """Plain numpy constant matching a tensor dtype (for python scalars)."""
    return np.asarray(x, dtype=dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- elementwise binary ----------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        data = a.data + b.data

        def bwd(out):
            if a.requires_grad:
                a._accum_grad(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum_grad(_unbroadcast(out.grad, b.shape))

        return Tensor.from_op(data, (a, b), bwd, "add")
    c = _as_const(b, a.dtype)
    data = a.data + c

    def bwd_const(out):
        a._accum_grad(_unbroadcast(out.grad, a.shape))

    return Tensor.from_op(data, (a,), bwd_const, "add")


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        data = a.data - b.data

        def bwd(out):
            if a.requires_grad:
                a._accum_grad(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum_grad(_unbroadcast(-out.grad, b.shape))

        return Tensor.from_op(data, (a, b), bwd, "sub")
    return add(a, -float(b))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        data = a.data * b.data

        def bwd(out):
            if a.requires_grad:
                a._accum_grad(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accum_grad(_unbroadcast(out.grad * a.data, b.shape))

        return Tensor.from_op(data, (a, b), bwd, "mul")
    c = _as_const(b, a.dtype)
    data = a.data * c

    def bwd_const(out):
        a._accum_grad(_unbroadcast(out.grad * c, a.shape))

    return Tensor.from_op(data, (a,), bwd_const, "mul")


def neg(a: Tensor) -> Tensor:
    def bwd(out):
        a._accum_grad(-out.grad)

    return Tensor.from_op(-a.data, (a,), bwd, "neg")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; gradient routes to the first operand on ties."""
    if a.shape != b.shape:
        raise ShapeError(f"maximum shapes {a.shape} vs {b.shape}")
    mask = a.data >= b.data
    data = np.where(mask, a.data, b.data)

    def bwd(out):
        if a.requires_grad:
            a._accum_grad(out.grad * mask)
        if b.requires_grad:
            b._accum_grad(out.grad * ~mask)

    return Tensor.from_op(data, (a, b), bwd, "maximum")


# -- elementwise unary -------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def bwd(out):
        a._accum_grad(out.grad * (a.data > 0))

    return Tensor.from_op(data, (a,), bwd, "relu")


def sigmoid(a: Tensor) -> Tensor:
    # exp may overflow to inf for very negative inputs; the result still
    # rounds to the correct 0.0
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(out):
        a._accum_grad(out.grad * data * (1.0 - data))

    return Tensor.from_op(data, (a,), bwd, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bwd(out):
        a._accum_grad(out.grad * (1.0 - data * data))

    return Tensor.from_op(data, (a,), bwd, "tanh")


def texp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # inf is caught by the finite check
        data = np.exp(a.data)

    def bwd(out):
        a._accum_grad(out.grad * data)

    return Tensor.from_op(data, (a,), bwd, "exp")


def tlog(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bwd(out):
        a._accum_grad(out.grad / a.data)

    return Tensor.from_op(data, (a,), bwd, "log")


def tabs(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def bwd(out):
        a._accum_grad(out.grad * np.sign(a.data))

    return Tensor.from_op(data, (a,), bwd, "abs")


def smooth_l1(a: Tensor) -> Tensor:
    """Elementwise smooth-L1 with beta=1: 0.5x^2 if |x|<1 else |x|-0.5."""
    absa = np.abs(a.data)
    data = np.where(absa < 1.0, 0.5 * a.data * a.data, absa - 0.5).astype(a.dtype)

    def bwd(out):
        a._accum_grad(out.grad * np.clip(a.data, -1.0, 1.0))

    return Tensor.from_op(data, (a,), bwd, "smooth_l1")


# -- matmul -----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims {a.shape} @ {b.shape}")
    ker = kernels()
    data = ker.gemm(np.ascontiguousarray(a.data), np.ascontiguousarray(b.data))

    def bwd(out):
        g = out.grad
        if a.requires_grad:
            a._accum_grad(ker.gemm(np.ascontiguousarray(g), np.ascontiguousarray(b.data.T)))
        if b.requires_grad:
            b._accum_grad(ker.gemm(np.ascontiguousarray(a.data.T), np.ascontiguousarray(g)))

    return Tensor.from_op(data, (a, b), bwd, "matmul")


# -- reductions ---------------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(out):
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum_grad(np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return Tensor.from_op(np.asarray(data), (a,), bwd, "sum")


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def logsumexp_rows(a: Tensor) -> Tensor:
    """Row-wise log(sum(exp(x))) with the usual max shift; [N, M] -> [N]."""
    if a.data.ndim != 2:
        raise ShapeError(f"logsumexp_rows needs a matrix, got {a.shape}")
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    data = (m + np.log(s)).reshape(-1)

    def bwd(out):
        a._accum_grad(out.grad[:, None] * (e / s))

    return Tensor.from_op(data, (a,), bwd, "logsumexp_rows")


# -- shape & indexing ------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def bwd(out):
        a._accum_grad(out.grad.reshape(a.shape))

    return Tensor.from_op(data, (a,), bwd, "reshape")


def rows(a: Tensor, t0: int, t1: int) -> Tensor:
    data = a.data[t0:t1]

    def bwd(out):
        g = np.zeros_like(a.data)
        g[t0:t1] = out.grad
        a._accum_grad(g)

    return Tensor.from_op(data, (a,), bwd, "rows")


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def bwd(out):
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        a._accum_grad(g)

    return Tensor.from_op(data, (a,), bwd, "gather_rows")


def shift_rows(a: Tensor, shift: int, boundary: np.ndarray | None = None) -> Tensor:
    """y[t] = x[t - shift]; out-of-range rows come from ``boundary`` or zeros.

    For shift > 0 ``boundary`` supplies the leading rows (a [shift, C]
    constant that receives no gradient), which is how streaming state is
    injected; offline callers leave it as zeros.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"shift_rows needs a matrix, got {a.shape}")
    T = a.shape[0]
    data = np.zeros_like(a.data)
    if shift >= 0:
        data[shift:] = a.data[:T - shift]
        if boundary is not None and shift > 0:
            data[:shift] = boundary[-shift:]
    else:
        data[:T + shift] = a.data[-shift:]

    def bwd(out):
        g = np.zeros_like(a.data)
        if shift >= 0:
            g[:T - shift] = out.grad[shift:]
        else:
            g[-shift:] = out.grad[:T + shift]
        a._accum_grad(g)

    return Tensor.from_op(data, (a,), bwd, "shift_rows")


def concat(parts: Iterable[Tensor], axis: int = 1) -> Tensor:
    parts = list(parts)
    data = np.concatenate([p.data for p in parts], axis=axis)
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bwd(out):
        for p, g in zip(parts, np.split(out.grad, splits, axis=axis)):
            if p.requires_grad:
                p._accum_grad(g)

    return Tensor.from_op(data, tuple(parts), bwd, "concat")
