"""Tensors with a differentiation tape.

Every primitive records a :class:`TapeNode` holding a backward closure.  The
closures are written with the same primitives, so running them while
recording is enabled yields a differentiable gradient graph.  That is what
lets the gradient penalty (a function of an input gradient) be differentiated
again with respect to the critic weights.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when a primitive receives operands of incompatible extents."""

    def __init__(self, primitive: str, message: str):
        super().__init__(f"{primitive}: {message}")
        self.primitive = primitive


_state = threading.local()
_order = itertools.count()


def is_recording() -> bool:
    return getattr(_state, "recording", True)


@contextmanager
def recording(enabled: bool):
    prev = is_recording()
    _state.recording = enabled
    try:
        yield
    finally:
        _state.recording = prev


def no_grad():
    """Context manager under which primitives record nothing."""
    return recording(False)


class TapeNode:
    """One operation record: kind, inputs, and the backward rule.

    ``order`` is a global creation counter; inputs always carry a smaller
    value than the node consuming them, so sorting by it is a topological
    order of the tape.
    """

    __slots__ = ("op", "inputs", "backward", "order")

    def __init__(self, op: str, inputs: tuple, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.order = next(_order)

    def __repr__(self) -> str:
        return f"TapeNode({self.op}, #{self.order})"


class Tensor:
    __slots__ = ("data", "requires_grad", "node", "name", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node: TapeNode | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        grad = " requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag}{grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar; all of it routes through the primitives below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other), power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, float(p))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self, tuple(reversed(range(self.ndim))))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = is_recording() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out.node = TapeNode(op, tuple(inputs), backward)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (each is its own primitive; they are mutual adjoints)


def _reduced_axes(from_shape: tuple, to_shape: tuple) -> tuple[tuple, tuple]:
    lead = len(from_shape) - len(to_shape)
    axes = list(range(lead))
    keep = []
    for i, n in enumerate(to_shape):
        if n == 1 and from_shape[lead + i] != 1:
            keep.append(lead + i)
    return tuple(axes), tuple(keep)


def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Sum ``x`` down to a broadcast-compatible ``shape``."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead, keep = _reduced_axes(x.shape, shape)
    data = x.data
    if keep:
        data = data.sum(axis=keep, keepdims=True)
    if lead:
        data = data.sum(axis=lead)
    data = data.reshape(shape)
    src = x.shape
    return _record("sum_to", data, (x,), lambda g, out: (broadcast_to(g, src),))


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError("broadcast_to", f"cannot broadcast {x.shape} to {shape}") from None
    src = x.shape
    return _record("broadcast_to", np.array(data), (x,), lambda g, out: (sum_to(g, src),))


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"operand extents {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def backward(g, out):
        return sum_to(g, sa), sum_to(g, sb)

    return _record("add", a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g, out: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    sa, sb = a.shape, b.shape

    def backward(g, out):
        ga = sum_to(mul(g, b), sa) if a.requires_grad else None
        gb = sum_to(mul(g, a), sb) if b.requires_grad else None
        return ga, gb

    return _record("mul", a.data * b.data, (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    with np.errstate(divide="ignore"):
        data = a.data**p

    def backward(g, out):
        if p == 1.0:
            return (g,)
        return (mul(g, mul(power(a, p - 1.0), p)),)

    return _record("pow", data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    return _record("exp", np.exp(a.data), (a,), lambda g, out: (mul(g, out),))


def log(a: Tensor) -> Tensor:
    return _record("log", np.log(a.data), (a,), lambda g, out: (mul(g, power(a, -1.0)),))


def safe_reciprocal(a: Tensor) -> Tensor:
    """1/a where a != 0, else 0.  Keeps norms differentiable at the origin."""
    nz = a.data != 0
    data = np.zeros_like(a.data)
    data[nz] = 1.0 / a.data[nz]

    def backward(g, out):
        return (neg(mul(g, mul(out, out))),)

    return _record("safe_reciprocal", data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    def backward(g, out):
        return (mul(g, mul(safe_reciprocal(out), 0.5)),)

    return _record("sqrt", np.sqrt(a.data), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    def backward(g, out):
        return (mul(g, add(1.0, neg(mul(out, out)))),)

    return _record("tanh", np.tanh(a.data), (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(a.data > 0, 1.0, slope)
    mask_t = Tensor(mask)
    return _record("leaky_relu", a.data * mask, (a,), lambda g, out: (mul(g, mask_t),))


def maximum_scalar(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient flows only where a > floor."""
    pass_t = Tensor((a.data > floor).astype(np.float64))
    return _record("maximum", np.maximum(a.data, floor), (a,), lambda g, out: (mul(g, pass_t),))


# ---------------------------------------------------------------------------
# structural


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    src = a.shape

    def backward(g, out):
        if not keepdims and axis is not None:
            kshape = tuple(1 if i in axis else n for i, n in enumerate(src))
            g = reshape(g, kshape)
        elif not keepdims:
            g = reshape(g, (1,) * len(src))
        return (broadcast_to(g, src),)

    return _record("sum", data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axis(axis, a.ndim)
    n = a.size if ax is None else int(np.prod([a.shape[i] for i in ax]))
    return mul(sum_(a, ax, keepdims), 1.0 / n)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} into {shape}") from None
    src = a.shape
    return _record("reshape", data, (a,), lambda g, out: (reshape(g, src),))


def transpose(a: Tensor, axes: tuple) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", f"axes {axes} invalid for extents {a.shape}")
    inv = tuple(np.argsort(axes))
    return _record("transpose", a.data.transpose(axes), (a,), lambda g, out: (transpose(g, inv),))


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def getitem(a: Tensor, index) -> Tensor:
    src = a.shape
    data = a.data[index]
    return _record("getitem", np.array(data), (a,), lambda g, out: (scatter(g, index, src),))


def scatter(g: Tensor, index, shape: tuple) -> Tensor:
    """Adjoint of :func:`getitem`: place ``g`` at ``index`` in a zero tensor."""
    data = np.zeros(shape)
    np.add.at(data, index, g.data)
    return _record("scatter", data, (g,), lambda gg, out: (getitem(gg, index),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "no operands")
    nd = tensors[0].ndim
    axis = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != axis):
            raise ShapeError(
                "concat",
                f"extents {[tt.shape for tt in tensors]} disagree off axis {axis}",
            )
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g, out):
        grads = []
        for lo, hi, t in zip(bounds[:-1], bounds[1:], tensors):
            if not t.requires_grad:
                grads.append(None)
                continue
            idx = [slice(None)] * nd
            idx[axis] = slice(int(lo), int(hi))
            grads.append(getitem(g, tuple(idx)))
        return tuple(grads)

    return _record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def pad_last(a: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    if left == 0 and right == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    n = a.shape[-1]
    index = (Ellipsis, slice(left, left + n))
    return _record("pad", np.pad(a.data, widths), (a,), lambda g, out: (getitem(g, index),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner extents mismatch: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", f"batch extents {a.shape[:-2]} vs {b.shape[:-2]}") from None
    sa, sb = a.shape, b.shape

    def backward(g, out):
        ga = sum_to(matmul(g, swap_last(b)), sa) if a.requires_grad else None
        gb = sum_to(matmul(swap_last(a), g), sb) if b.requires_grad else None
        return ga, gb

    return _record("matmul", np.matmul(a.data, b.data), (a, b), backward)


def unfold1d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """Sliding windows along the last axis: (..., L) -> (..., L_out, kernel)."""
    n = x.shape[-1]
    if kernel > n:
        raise ShapeError("conv1d", f"kernel {kernel} longer than padded length {n}")
    n_out = (n - kernel) // stride + 1
    idx = np.arange(n_out)[:, None] * stride + np.arange(kernel)[None, :]
    data = x.data[..., idx]
    return _record("unfold1d", data, (x,), lambda g, out: (fold1d(g, n, stride),))


def fold1d(cols: Tensor, length: int, stride: int) -> Tensor:
    """Adjoint of :func:`unfold1d`: overlap-add windows back onto an axis."""
    n_out, kernel = cols.shape[-2], cols.shape[-1]
    data = np.zeros(cols.shape[:-2] + (length,))
    span = stride * (n_out - 1) + 1
    for k in range(kernel):
        data[..., k : k + span : stride] += cols.data[..., k]
    return _record("fold1d", data, (cols,), lambda g, out: (unfold1d(g, kernel, stride),))


def detach_all(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t.detach() for t in tensors]
