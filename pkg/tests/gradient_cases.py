"""Gradient-check cases shared by the unit and acceptance tests."""

import numpy as np

from motionforge import diffcore as dc
from motionforge.diffcore import Tensor
from motionforge.diffcore import tensor as T


def rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


# name -> (scalar builder, input shapes)
PRIMITIVE_CASES = {
    "dense": (lambda x, w, b: T.sum_(dc.dense(x, w, b) ** 2), [(3, 4), (5, 4), (5,)]),
    "conv1d": (lambda x, w, b: T.sum_(dc.conv1d(x, w, b, stride=2, padding=1) ** 2), [(2, 3, 7), (4, 3, 3), (4,)]),
    "conv1x1": (lambda x, w: T.sum_(dc.conv1x1(x, w) ** 2), [(2, 3, 5), (4, 3)]),
    "layer_norm": (lambda x, g: T.sum_(dc.layer_norm(x, (1, 2), g) * Tensor(np.arange(12.0).reshape(1, 3, 4))), [(2, 3, 4), (3, 1)]),
    "softmax": (lambda x: T.sum_(dc.softmax(x, axis=1) * Tensor(np.arange(12.0).reshape(3, 4))), [(3, 4)]),
    "leaky_relu": (lambda x: T.sum_(dc.leaky_relu(x) ** 2), [(4, 5)]),
    "tanh": (lambda x: T.sum_(dc.tanh(x) ** 3), [(4, 5)]),
    "add": (lambda a, b: T.sum_((a + b) ** 2), [(3, 4), (4,)]),
    "mul": (lambda a, b: T.sum_((a * b) ** 2), [(3, 1), (1, 4)]),
    "matmul": (lambda a, b: T.sum_(T.matmul(a, b) ** 2), [(2, 3, 4), (4, 5)]),
    "concat": (lambda a, b: T.sum_(T.concat([a, b], axis=1) ** 3), [(2, 3), (2, 2)]),
    "reshape": (lambda a: T.sum_(a.reshape(6, 2) * Tensor(np.arange(12.0).reshape(6, 2))), [(3, 4)]),
    "mean": (lambda a: T.sum_(T.mean(a, axis=0) ** 2), [(3, 4)]),
    "sum": (lambda a: T.sum_(T.sum_(a, axis=1, keepdims=True) ** 2), [(3, 4)]),
    "l2_norm": (lambda a: T.sum_(dc.l2_norm(a, axis=1)), [(3, 4)]),
    "exp_log": (lambda a: T.sum_(dc.log(dc.exp(a) + 2.0)), [(3, 4)]),
    "getitem": (lambda a: T.sum_(a[:, np.array([0, 2, 2])] ** 2), [(3, 4)]),
    "resize_time": (lambda a: T.sum_(dc.resize_time(a, 7) ** 2), [(2, 3, 4)]),
    "pad_last": (lambda a: T.sum_(T.pad_last(a, 1, 2) ** 2 * Tensor(np.arange(7.0))), [(2, 4)]),
}
