from .autograd import gradients
from .functional import (
    PRIMITIVE_KINDS,
    apply_primitive,
    conv1d,
    conv1x1,
    dense,
    l2_norm,
    layer_norm,
    leaky_relu,
    resize_time,
    softmax,
    tanh,
)
from .optim import AdamState, adam_step
from .tensor import (
    ShapeError,
    TapeNode,
    Tensor,
    as_tensor,
    concat,
    exp,
    log,
    no_grad,
    sqrt,
)

__all__ = [
    "AdamState",
    "PRIMITIVE_KINDS",
    "ShapeError",
    "TapeNode",
    "Tensor",
    "adam_step",
    "apply_primitive",
    "as_tensor",
    "concat",
    "conv1d",
    "conv1x1",
    "dense",
    "exp",
    "gradients",
    "l2_norm",
    "layer_norm",
    "leaky_relu",
    "log",
    "no_grad",
    "resize_time",
    "softmax",
    "sqrt",
    "tanh",
]
