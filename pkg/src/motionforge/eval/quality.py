"""Rollout quality measures used for validation during and after training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..losses import input_gradient_norms, interpolate
from ..motiondata.preprocess import NormalizationStats
from ..motiondata.skeleton import SkeletonSpec
from ..synthesis import bone_deviation, rollout_batch, seam_blend
from .angles import DEFAULT_HORIZON, mean_angle_curve


@dataclass
class ValidationSet:
    """Fixed real (prior, future, control) triples, normalized."""

    prior: np.ndarray
    future: np.ndarray
    control: np.ndarray

    @classmethod
    def from_batch(cls, batch) -> "ValidationSet":
        return cls(np.asarray(batch.prior), np.asarray(batch.future), np.asarray(batch.control))


def relative_bone_deviation(frames, reference_pose, stats: NormalizationStats, skeleton: SkeletonSpec) -> np.ndarray:
    """|length - reference length| / reference length in meters, (B, F, S)."""
    m = stats.invert(np.asarray(frames))
    ref = stats.invert(np.asarray(reference_pose))
    return bone_deviation(m, ref, skeleton) / skeleton.bone_lengths(ref)[:, None, :]


def rollout_quality(
    generator,
    val: ValidationSet,
    stats: NormalizationStats,
    skeleton: SkeletonSpec,
    iterations: int = 4,
) -> dict:
    """Seam blend and bone-length deviation of rollouts seeded from ``val.prior``.

    The seed itself is excluded from the bone statistics; the reference is
    the first seed pose.
    """
    t = val.prior.shape[1]
    frames = rollout_batch(generator, val.prior, val.control, iterations)
    gen = frames[:, t:]
    rel = relative_bone_deviation(gen, val.prior[:, 0], stats, skeleton)
    dev_m = bone_deviation(stats.invert(gen), stats.invert(val.prior[:, 0]), skeleton)
    return {
        "seam_blend": float(seam_blend(frames, t).mean()),
        "bone_dev": float(dev_m.mean()),
        "bone_rel_max": float(rel.max()),
        "bone_rel_frame_max": float(rel.mean(axis=2).max()),
        "finite": float(np.isfinite(frames).all()),
    }


def critic_gradient_norm(critic, generator, val: ValidationSet, rng: np.random.Generator, draws: int = 1) -> float:
    """Mean ||grad D|| over real/fake interpolates of the validation set, pooled over ``draws`` eps draws."""
    fake = generator(val.prior, val.control).data
    real = np.concatenate([val.prior, val.future], axis=1)
    fake = np.concatenate([val.prior, fake], axis=1)
    norms = []
    for _ in range(draws):
        m_hat = interpolate(real, fake, rng.uniform(0.0, 1.0, size=len(real)))
        norms.append(input_gradient_norms(lambda m: critic(m, val.control), m_hat, create_graph=False).data)
    return float(np.mean(norms))


def angle_error_curve(generator, windows, stats: NormalizationStats, skeleton: SkeletonSpec, horizon: int = DEFAULT_HORIZON):
    """Generated vs real angle error over the frames following each window's seed."""
    t = generator.cfg.window_T
    seeds = np.stack([w.frames[:t] for w in windows])
    y = np.eye(generator.cfg.n_classes)[[w.label for w in windows]]
    iterations = -(-horizon // t)
    fake = stats.invert(rollout_batch(generator, seeds, y, iterations, drop_seed=True))
    real = stats.invert(np.stack([w.frames[t:] for w in windows]))
    return mean_angle_curve(list(fake), list(real), skeleton, horizon)
