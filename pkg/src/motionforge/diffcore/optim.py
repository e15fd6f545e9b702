"""Bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdamState:
    alpha: float = 0.005
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        st = cls(**hyper)
        st.m = [np.zeros(p.shape) for p in params]
        st.v = [np.zeros(p.shape) for p in params]
        return st


def adam_step(params: list[Tensor], grads: list, state: AdamState) -> AdamState:
    """Apply one Adam update to ``params`` in place and advance ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            "adam_step",
            f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots",
        )
    for p, g, m in zip(params, grads, state.m):
        gshape = g.shape
        if p.shape != gshape or m.shape != p.shape:
            raise ShapeError("adam_step", f"param {p.shape} vs grad {gshape} vs moment {m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
