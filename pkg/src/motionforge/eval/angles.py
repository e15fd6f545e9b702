"""Joint-angle representation and angle-error curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..motiondata.clips import MotionClip
from ..motiondata.skeleton import SkeletonSpec

DEFAULT_HORIZON = 70
ZERO_BONE = 1e-12


def angle_pairs(skeleton: SkeletonSpec) -> list[tuple[int, int, int]]:
    """(joint, bone_a, bone_b) for every interior joint.

    A joint with more than two incident bones contributes each consecutive
    pair of its bones in bone order.
    """
    pairs = []
    for j, bones in skeleton.incident_bones().items():
        for a, b in zip(bones, bones[1:]):
            pairs.append((j, a, b))
    return pairs


@dataclass
class AngleSpaceMotion:
    """Per-frame joint angles (F, P) in radians; ``valid`` marks frames with no zero-length bone."""

    angles: np.ndarray
    valid: np.ndarray
    pairs: list

    @property
    def n_frames(self) -> int:
        return len(self.angles)


def _frames(motion) -> np.ndarray:
    return np.asarray(motion.frames if isinstance(motion, MotionClip) else motion, dtype=float)


def to_angle_space(motion, skeleton: SkeletonSpec) -> AngleSpaceMotion:
    """Angle between the two bone vectors leaving each interior joint.

    Frames with a zero-length bone get NaN angles and ``valid = False``.
    """
    frames = _frames(motion)
    pairs = angle_pairs(skeleton)
    bones = skeleton.bone_array()
    n_frames = len(frames)
    angles = np.full((n_frames, len(pairs)), np.nan)
    valid = np.ones(n_frames, dtype=bool)
    for p, (j, a, b) in enumerate(pairs):
        # orient both bones away from the shared joint
        va = frames[:, bones[a, 1] if bones[a, 0] == j else bones[a, 0]] - frames[:, j]
        vb = frames[:, bones[b, 1] if bones[b, 0] == j else bones[b, 0]] - frames[:, j]
        na, nb = np.linalg.norm(va, axis=-1), np.linalg.norm(vb, axis=-1)
        ok = (na > ZERO_BONE) & (nb > ZERO_BONE)
        valid &= ok
        # atan2 stays accurate near 0 and pi, where arccos loses half the digits
        sin = np.linalg.norm(np.cross(va[ok], vb[ok]), axis=-1)
        angles[ok, p] = np.arctan2(sin, np.einsum("fi,fi->f", va[ok], vb[ok]))
    angles[~valid] = np.nan
    return AngleSpaceMotion(angles, valid, pairs)


def _angle_sets(clips, skeleton, horizon):
    out = []
    for c in clips:
        a = c if isinstance(c, AngleSpaceMotion) else to_angle_space(c, skeleton)
        if a.n_frames < horizon:
            raise ValueError(f"clip of {a.n_frames} frames shorter than horizon {horizon}")
        out.append(a)
    return out


def mean_angle_curve(generated, reference, skeleton: SkeletonSpec, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Per-frame mean over pairs and joints of |angle_gen - angle_ref|; shape (horizon,).

    ``generated[i]`` and ``reference[i]`` must come from the same seed.
    Frames flagged in either clip are left out of that frame's mean.
    """
    generated, reference = list(generated), list(reference)
    if len(generated) != len(reference) or not generated:
        raise ValueError(f"unmatched sets: {len(generated)} generated vs {len(reference)} reference")
    gen = _angle_sets(generated, skeleton, horizon)
    ref = _angle_sets(reference, skeleton, horizon)
    total = np.zeros(horizon)
    count = np.zeros(horizon)
    for g, r in zip(gen, ref):
        ok = g.valid[:horizon] & r.valid[:horizon]
        err = np.abs(g.angles[:horizon] - r.angles[:horizon])
        total[ok] += err[ok].mean(axis=1)
        count[ok] += 1
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def mean_angle_trajectory(clips, skeleton: SkeletonSpec, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Per-frame mean angle over clips and joints (the plotted quantity, not an error)."""
    sets = _angle_sets(list(clips), skeleton, horizon)
    stack = np.stack([a.angles[:horizon] for a in sets])
    return np.nanmean(stack, axis=(0, 2))


def curve_auc(curve) -> float:
    """Area under a per-frame curve with unit frame spacing (rectangle rule)."""
    return float(np.nansum(np.asarray(curve, dtype=float)))
