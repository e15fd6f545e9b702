"""Global-motion removal, normalization, windowing and gait segmentation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .clips import MotionClip, MotionWindow
from .skeleton import UP, SkeletonSpec

log = logging.getLogger(__name__)

STD_FLOOR = 1e-6
GAIT_WINDOW = 125


def _yaw_matrices(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    R = np.zeros(angles.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 1, 1] = 1.0
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def remove_global_motion(
    clip: MotionClip, skeleton: SkeletonSpec, return_flags: bool = False
):
    """Put the root at the origin and turn the hip axis onto +x, frame by frame.

    Frames whose horizontal hip axis has zero length reuse the previous
    frame's heading (identity for the first frame) and are flagged.
    """
    root = skeleton.index(skeleton.root)
    lh, rh = skeleton.index(skeleton.left_hip), skeleton.index(skeleton.right_hip)
    frames = clip.frames - clip.frames[:, root : root + 1, :]
    axis = frames[:, lh, :] - frames[:, rh, :]
    hx, hz = axis[:, 0], axis[:, 2]
    ok = np.hypot(hx, hz) > 1e-9
    # yaw that carries (hx, hz) onto +x under _yaw_matrices' convention
    yaw = np.arctan2(hz, hx)
    flagged = np.flatnonzero(~ok)
    last = 0.0
    for t in range(len(yaw)):
        if ok[t]:
            last = yaw[t]
        else:
            yaw[t] = last
    if len(flagged):
        log.warning("%d frame(s) with degenerate hip axis reused the previous heading", len(flagged))
    R = _yaw_matrices(yaw)
    out = np.einsum("tab,tjb->tja", R, frames)
    result = replace(clip, frames=out)
    if return_flags:
        return result, flagged.tolist()
    return result


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray  # (3J,)
    std: np.ndarray  # (3J,), already floored

    def apply(self, frames: np.ndarray) -> np.ndarray:
        shape = frames.shape
        flat = frames.reshape(shape[:-2] + (-1,))
        return ((flat - self.mean) / self.std).reshape(shape)

    def invert(self, frames: np.ndarray) -> np.ndarray:
        shape = frames.shape
        flat = frames.reshape(shape[:-2] + (-1,))
        return (flat * self.std + self.mean).reshape(shape)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def compute_stats(items, std_floor: float = STD_FLOOR) -> NormalizationStats:
    flat = np.concatenate([it.frames.reshape(len(it.frames), -1) for it in items], axis=0)
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), std_floor)
    return NormalizationStats(mean, std)


def normalize(items, stats: NormalizationStats | None = None):
    """Centre-mean unit-variance per coordinate channel over the whole corpus.

    Works on clips or windows.  Returns ``(normalized_items, stats)``.
    """
    items = list(items)
    if not items:
        raise ValueError("normalize needs at least one clip")
    if stats is None:
        stats = compute_stats(items)
    return [replace(it, frames=stats.apply(it.frames)) for it in items], stats


def denormalize(items, stats: NormalizationStats):
    return [replace(it, frames=stats.invert(it.frames)) for it in items]


def resample(frames: np.ndarray, start: float, stop: float, n: int) -> np.ndarray:
    """Linear per-coordinate interpolation of ``frames`` on ``n`` points over [start, stop]."""
    times = np.linspace(start, stop, n)
    lo = np.clip(np.floor(times).astype(int), 0, len(frames) - 1)
    hi = np.minimum(lo + 1, len(frames) - 1)
    w = (times - lo)[:, None, None]
    return (1.0 - w) * frames[lo] + w * frames[hi]


def estimate_period(signal: np.ndarray, min_lag: int = 5) -> float | None:
    """Dominant period (in samples) from the first autocorrelation peak."""
    x = signal - signal.mean()
    n = len(x)
    if n < 3 * min_lag or not np.any(x):
        return None
    ac = np.correlate(x, x, mode="full")[n - 1 :]
    ac = ac / ac[0]
    for lag in range(min_lag, n // 2):
        if ac[lag] > ac[lag - 1] and ac[lag] >= ac[lag + 1] and ac[lag] > 0.3:
            return float(lag)
    return None


def detect_heel_strikes(
    heights: np.ndarray,
    expected_period: float | None = None,
    threshold_frac: float = 0.3,
) -> list[int]:
    """Frames of heel-height local minima below an adaptive threshold.

    The threshold sits ``threshold_frac`` of the way from the 5th to the 95th
    height percentile.  Accepted minima are at least 0.4 periods apart.
    """
    h = np.asarray(heights, dtype=float)
    if len(h) < 3:
        return []
    lo, hi = np.percentile(h, [5, 95])
    thresh = lo + threshold_frac * (hi - lo)
    inner = np.arange(1, len(h) - 1)
    is_min = (h[inner] <= h[inner - 1]) & (h[inner] < h[inner + 1]) & (h[inner] <= thresh)
    cand = inner[is_min]
    if expected_period is None:
        expected_period = estimate_period(h)
    refractory = 0.4 * expected_period if expected_period else 1.0
    accepted: list[int] = []
    for i in cand[np.argsort(h[cand], kind="stable")]:
        if all(abs(int(i) - a) >= refractory for a in accepted):
            accepted.append(int(i))
    return sorted(accepted)


def segment_gait(
    clip: MotionClip,
    skeleton: SkeletonSpec,
    target_len: int = GAIT_WINDOW,
    heel: str | None = None,
    expected_period: float | None = None,
) -> list[MotionWindow]:
    """One window per pair of consecutive same-foot heel strikes, resampled to ``target_len``."""
    heel_idx = skeleton.index(heel or skeleton.left_heel)
    strikes = detect_heel_strikes(clip.frames[:, heel_idx, UP], expected_period)
    if len(strikes) < 2:
        warnings.warn(f"segment_gait: {len(strikes)} heel strike(s) found in {clip.subject}/{clip.action}")
        return []
    return [
        MotionWindow(resample(clip.frames, a, b, target_len), clip.fps, clip.action, clip.subject, a)
        for a, b in zip(strikes[:-1], strikes[1:])
    ]


def window_actions(clip: MotionClip, target_len: int = GAIT_WINDOW, stride: int | None = None) -> list[MotionWindow]:
    """Fixed-length windows; non-overlapping unless ``stride`` < ``target_len``."""
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    stride = target_len if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if clip.n_frames < target_len:
        warnings.warn(f"window_actions: clip of {clip.n_frames} frames shorter than {target_len}")
        return []
    starts = range(0, clip.n_frames - target_len + 1, stride)
    return [
        MotionWindow(clip.frames[s : s + target_len].copy(), clip.fps, clip.action, clip.subject, s)
        for s in starts
    ]
