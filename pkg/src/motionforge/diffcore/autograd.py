"""Reverse-mode differentiation over the tape."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, TapeNode, add, recording


def _collect(root: Tensor) -> list[Tensor]:
    """Every tape-attached tensor reachable from ``root``, newest first."""
    seen: set[int] = set()
    found: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node is None or id(t) in seen:
            continue
        seen.add(id(t))
        found.append(t)
        stack.extend(t.node.inputs)
    found.sort(key=lambda t: t.node.order, reverse=True)
    return found


def gradients(
    loss: Tensor, params: Sequence[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradients of a scalar ``loss`` with respect to each of ``params``.

    Parameters unreachable from ``loss`` receive zeros.  With
    ``create_graph`` the backward pass is itself recorded, so the returned
    gradients can be differentiated again.
    """
    if loss.size != 1:
        raise ValueError(f"gradients: loss must be a scalar, got extents {loss.shape}")
    wanted = {id(p) for p in params}
    grads: dict[int, Tensor] = {id(loss): Tensor(np.ones(loss.shape))}
    if loss.node is not None:
        with recording(create_graph):
            for t in _collect(loss):
                g = grads.get(id(t))
                if g is None:
                    continue
                node: TapeNode = t.node
                in_grads = node.backward(g, t)
                for inp, gi in zip(node.inputs, in_grads):
                    if gi is None or not inp.requires_grad:
                        continue
                    prev = grads.get(id(inp))
                    grads[id(inp)] = gi if prev is None else add(prev, gi)
                # intermediate gradients are no longer needed
                if id(t) not in wanted:
                    del grads[id(t)]
    out = []
    for p in params:
        g = grads.get(id(p))
        out.append(Tensor(np.zeros(p.shape)) if g is None else g)
    return out
