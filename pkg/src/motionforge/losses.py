"""Objectives: critic Wasserstein loss with gradient penalty, generator loss,
skeleton, blend and classification losses.

All functions accept and return :class:`~motionforge.diffcore.Tensor` values so
they can sit inside a differentiated graph.  Pose batches are (B, T, J, 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor, as_tensor
from .diffcore import tensor as T
from .motiondata.skeleton import SkeletonSpec

PROB_FLOOR = 1e-12
LAMBDA_GP = 10.0


def interpolate(real, fake, eps) -> Tensor:
    """Per-sample ``eps * real + (1 - eps) * fake`` with eps of shape (B,)."""
    real, fake = as_tensor(real), as_tensor(fake)
    e = Tensor(np.asarray(eps, dtype=float).reshape((-1,) + (1,) * (real.ndim - 1)))
    return real * e + fake * (1.0 - e)


def input_gradient_norms(critic, motion, control=None, create_graph: bool = True) -> Tensor:
    """Per-sample ||d critic / d motion||_2 at ``motion``; (B,)."""
    m = Tensor(as_tensor(motion).data, requires_grad=True)
    scores = critic(m) if control is None else critic(m, control)
    (g,) = dc.gradients(T.sum_(scores), [m], create_graph=create_graph)
    return dc.l2_norm(g.reshape(g.shape[0], -1), axis=1)


def gradient_penalty(critic, real, fake, rng=None, control=None, eps=None, return_norms=False):
    """Mean over the batch of (||grad D(m_hat)|| - 1)^2 with m_hat = eps r + (1 - eps) f.

    ``critic`` is called as ``critic(m)`` or ``critic(m, control)``.  A fresh
    eps ~ U[0, 1] is drawn per sample from ``rng`` unless ``eps`` is given.
    """
    real, fake = as_tensor(real), as_tensor(fake)
    if real.shape != fake.shape:
        raise dc.ShapeError("gradient_penalty", f"real {real.shape} vs fake {fake.shape}")
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng()
        eps = rng.uniform(0.0, 1.0, size=real.shape[0])
    # interpolates are a fresh leaf: the penalty differentiates D w.r.t. its input only
    m_hat = interpolate(real.detach(), fake.detach(), eps)
    norms = input_gradient_norms(critic, m_hat, control, create_graph=True)
    gp = T.mean((norms - 1.0) ** 2)
    return (gp, norms) if return_norms else gp


def critic_loss(scores_real, scores_fake, gp, lam: float = LAMBDA_GP) -> Tensor:
    """mean D(fake) - mean D(real) + lam * gp (minimized by the critic)."""
    scores_real, scores_fake = as_tensor(scores_real), as_tensor(scores_fake)
    if scores_real.shape != scores_fake.shape:
        raise dc.ShapeError("critic_loss", f"{scores_real.shape} vs {scores_fake.shape}")
    return T.mean(scores_fake) - T.mean(scores_real) + as_tensor(gp) * lam


def skeleton_loss(reference, future, skeleton: SkeletonSpec, horizon: int | None = None) -> Tensor:
    """(1/T) sum over bones and frames of ||ref bone - future bone||, averaged over the batch.

    reference: (B, J, 3) or (J, 3); future: (B, F, J, 3) or (F, J, 3).  ``horizon``
    is the T in the 1/T factor and defaults to the window length F.
    """
    reference, future = as_tensor(reference), as_tensor(future)
    single = future.ndim == 3
    if single:
        future = future.reshape(1, *future.shape)
        reference = reference.reshape(1, *reference.shape)
    b = skeleton.bone_array()
    bone_f = future[:, :, b[:, 1], :] - future[:, :, b[:, 0], :]  # (B, F, S, 3)
    bone_r = reference[:, b[:, 1], :] - reference[:, b[:, 0], :]  # (B, S, 3)
    diff = bone_f - bone_r.reshape(bone_r.shape[0], 1, *bone_r.shape[1:])
    dist = dc.l2_norm(diff, axis=-1)  # (B, F, S)
    t = future.shape[1] if horizon is None else horizon
    return T.mean(T.sum_(dist, axis=(1, 2))) * (1.0 / t)


def blend_loss(prior_last, future_first) -> Tensor:
    """Mean over the 3J coordinates (and batch) of squared differences."""
    prior_last, future_first = as_tensor(prior_last), as_tensor(future_first)
    if prior_last.shape != future_first.shape:
        raise dc.ShapeError("blend_loss", f"{prior_last.shape} vs {future_first.shape}")
    d = prior_last - future_first
    return T.mean(d * d)


def classification_loss(predicted, target, floor: float = PROB_FLOOR) -> Tensor:
    """-(1/m) sum_i y_i . log(p_i), with p floored at ``floor``."""
    predicted, target = as_tensor(predicted), as_tensor(target)
    if predicted.shape != target.shape:
        raise dc.ShapeError("classification_loss", f"{predicted.shape} vs {target.shape}")
    logp = dc.log(T.maximum_scalar(predicted, floor))
    return -T.mean(T.sum_(logp * target, axis=-1))


@dataclass
class LossBreakdown:
    components: dict = field(default_factory=dict)  # name -> Tensor
    total: Tensor | None = None

    def values(self) -> dict[str, float]:
        out = {k: float(v.item()) for k, v in self.components.items()}
        out["total"] = float(self.total.item())
        return out


def generator_loss(
    scores_fake, skel=None, blend=None, class_loss=None
) -> LossBreakdown:
    """-mean D(fake) + skel + blend + class, unit weights; disabled terms pass None."""
    wass = -T.mean(as_tensor(scores_fake))
    comps = {"gen_wasserstein": wass}
    for name, v in (("skel", skel), ("blend", blend), ("class", class_loss)):
        if v is not None:
            comps[name] = as_tensor(v)
    total = None
    for v in comps.values():
        total = v if total is None else total + v
    return LossBreakdown(comps, total)
