"""Network-level primitives composed from the tape operations.

Everything here is built from differentiable tape ops, so each function
supports reverse-over-reverse differentiation without extra work.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor, as_tensor

LAYER_NORM_VAR_FLOOR = 1e-5


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis; ``weight`` is (out, in)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError("dense", f"input {x.shape} vs weight {weight.shape}")
    lead = x.shape[:-1]
    y = T.matmul(x.reshape(-1, x.shape[-1]), T.swap_last(weight))
    if len(lead) != 1:
        y = y.reshape(*lead, weight.shape[0])
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError("dense", f"bias {bias.shape} vs weight {weight.shape}")
        y = y + bias
    return y


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Convolution along time.  x: (B, C_in, L), weight: (C_out, C_in, K)."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv1d", f"input {x.shape} vs kernel {weight.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError("conv1d", f"stride {stride} / padding {padding} invalid")
    c_out, c_in, k = weight.shape
    xp = T.pad_last(x, padding, padding)
    cols = T.unfold1d(xp, k, stride)  # (B, C_in, L_out, K)
    b, _, l_out, _ = cols.shape
    cols = T.transpose(cols, (0, 2, 1, 3)).reshape(b * l_out, c_in * k)
    y = T.matmul(cols, T.swap_last(weight.reshape(c_out, c_in * k)))  # (B*L_out, C_out)
    if bias is not None:
        y = y + bias
    return T.transpose(y.reshape(b, l_out, c_out), (0, 2, 1))


def conv1x1(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Pointwise channel mixing.  x: (B, C_in, N), weight: (C_out, C_in)."""
    if x.ndim != 3 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv1x1", f"input {x.shape} vs weight {weight.shape}")
    y = T.matmul(weight, x)
    if bias is not None:
        y = y + bias.reshape(-1, 1)
    return y


def layer_norm(
    x: Tensor,
    axis=-1,
    gain: Tensor | None = None,
    bias: Tensor | None = None,
    var_floor: float = LAYER_NORM_VAR_FLOOR,
) -> Tensor:
    """Per-sample normalization over ``axis``; variance is floored, not offset."""
    mu = T.mean(x, axis, keepdims=True)
    xc = x - mu
    var = T.mean(xc * xc, axis, keepdims=True)
    y = xc * T.power(T.maximum_scalar(var, var_floor), -0.5)
    if gain is not None:
        y = y * gain
    if bias is not None:
        y = y + bias
    return y


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = T.exp(x - shift)
    return e * T.power(T.sum_(e, axis, keepdims=True), -1.0)


def l2_norm(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm; its gradient at the zero vector is taken as zero."""
    return T.sqrt(T.sum_(x * x, axis, keepdims))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return T.leaky_relu(x, slope)


def tanh(x: Tensor) -> Tensor:
    return T.tanh(x)


def resize_time(x: Tensor, length: int) -> Tensor:
    """Nearest-neighbour repetition along the last axis to ``length`` samples."""
    n = x.shape[-1]
    if n == length:
        return x
    src = np.minimum((np.arange(length) * n) // length, n - 1)
    sel = np.zeros((n, length))
    sel[src, np.arange(length)] = 1.0
    return T.matmul(x, Tensor(sel))


_PRIMITIVES = {
    "dense": dense,
    "conv1d": conv1d,
    "conv1x1": conv1x1,
    "layer_norm": layer_norm,
    "softmax": softmax,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "add": T.add,
    "mul": T.mul,
    "matmul": T.matmul,
    "concat": lambda *xs, axis=0: T.concat(xs, axis),
    "reshape": lambda x, shape: T.reshape(x, shape),
    "mean": lambda x, axis=None, keepdims=False: T.mean(x, axis, keepdims),
    "sum": lambda x, axis=None, keepdims=False: T.sum_(x, axis, keepdims),
    "l2_norm": l2_norm,
}

PRIMITIVE_KINDS = tuple(_PRIMITIVES)


def apply_primitive(kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Dispatch a primitive by name, e.g. ``apply_primitive("conv1d", [x, w], {"stride": 2})``."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}; known: {', '.join(PRIMITIVE_KINDS)}") from None
    return fn(*[as_tensor(t) for t in inputs], **(attrs or {}))
