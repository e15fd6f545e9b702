"""Parameter containers and the layers the three networks are built from."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..diffcore import tensor as T


class Module:
    """Ordered registry of parameters and sub-modules."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Module"] = {}

    def param(self, name: str, value) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + n, p) for n, p in self._params.items()]
        for cname, c in self._children.items():
            out.extend(c.named_parameters(f"{prefix}{cname}."))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for c in self._children.values():
            yield from c.modules()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise KeyError(f"parameter names differ; missing={missing} unexpected={extra}")
        for n, p in own.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{n}: checkpoint extents {arr.shape} vs model {p.shape}")
            p.data = arr.copy()


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = c_in * kernel
        self.weight = self.param("weight", _uniform(rng, (c_out, c_in, kernel), fan_in))
        self.bias = self.param("bias", _uniform(rng, (c_out,), fan_in))

    def __call__(self, x):
        return dc.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class Dense(Module):
    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = self.param("weight", _uniform(rng, (n_out, n_in), n_in))
        self.bias = self.param("bias", _uniform(rng, (n_out,), n_in))

    def __call__(self, x):
        return dc.dense(x, self.weight, self.bias)


class LayerNorm(Module):
    """Per-sample normalization over channels and time, with per-channel affine."""

    def __init__(self, channels):
        super().__init__()
        self.gain = self.param("gain", np.ones((channels, 1)))
        self.bias = self.param("bias", np.zeros((channels, 1)))

    def __call__(self, x):
        return dc.layer_norm(x, axis=(1, 2), gain=self.gain, bias=self.bias)


class SelfAttention(Module):
    """Attention over the N feature locations of a (B, C, N) map, gated by ``gamma``.

    ``gamma`` starts at exactly zero so the layer is the identity at initialization.
    """

    def __init__(self, channels, ratio=8, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        c, cb = channels, max(1, channels // ratio)
        self.channels, self.reduced = c, cb
        self.w_f = self.param("w_f", _uniform(rng, (cb, c), c))
        self.w_g = self.param("w_g", _uniform(rng, (cb, c), c))
        self.w_h = self.param("w_h", _uniform(rng, (cb, c), c))
        self.w_v = self.param("w_v", _uniform(rng, (c, cb), cb))
        self.gamma = self.param("gamma", np.zeros(()))

    def attend(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (attention output o, attention map beta[b, i, j])."""
        f = dc.conv1x1(x, self.w_f)
        g = dc.conv1x1(x, self.w_g)
        h = dc.conv1x1(x, self.w_h)
        s = T.matmul(T.swap_last(f), g)  # s[b, i, j] = f(x_i) . g(x_j)
        beta = dc.softmax(s, axis=1)  # normalized over i for each j
        o = dc.conv1x1(T.matmul(h, beta), self.w_v)
        return o, beta

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise dc.ShapeError("self_attention", f"input {x.shape} vs {self.channels} channels")
        o, _ = self.attend(x)
        return x + self.gamma * o
