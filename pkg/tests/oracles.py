"""Independent numerical oracles shared by the test modules."""

from __future__ import annotations

import numpy as np

from motionforge import diffcore as dc

H = 1e-5


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of scalar ``f`` with respect to array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    """max |a - b| / max(1, |b|_inf); robust when the true gradient is tiny."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def check_gradients(build, arrays, h: float = H) -> float:
    """Worst relative error between tape gradients and central differences.

    ``build(*tensors)`` returns a scalar Tensor; ``arrays`` are the float64
    inputs, all treated as differentiable.
    """
    tensors = [dc.Tensor(a, requires_grad=True) for a in arrays]
    analytic = dc.gradients(build(*tensors), tensors)

    def value():
        # plain leaves record no tape, and build may differentiate internally
        return build(*[dc.Tensor(t.data) for t in tensors]).item()

    worst = 0.0
    for t, g in zip(tensors, analytic):
        worst = max(worst, rel_error(g.data, numeric_grad(value, t.data, h)))
    return worst


def check_module_gradients(module, loss_fn, h: float = H, max_entries: int = 40, rng=None) -> float:
    """Gradient check over a random subset of a module's parameter entries."""
    rng = rng or np.random.default_rng(0)
    params = module.parameters()
    grads = dc.gradients(loss_fn(), params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(max_entries, flat.size), replace=False)
        for k in picks:
            old = flat[k]
            # no no_grad here: loss_fn may differentiate internally
            flat[k] = old + h
            fp = loss_fn().item()
            flat[k] = old - h
            fm = loss_fn().item()
            flat[k] = old
            num = (fp - fm) / (2 * h)
            worst = max(worst, abs(g.data.reshape(-1)[k] - num) / max(1.0, abs(num)))
    return worst
