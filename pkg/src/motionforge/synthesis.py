"""Autoregressive rollout, denormalization and export of generated motion."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import diffcore as dc
from .model import Generator, NonFiniteError
from .motiondata.clips import ACTIONS, DEFAULT_FPS, MotionClip, write_clip_csv
from .motiondata.preprocess import NormalizationStats
from .motiondata.skeleton import SkeletonSpec


@dataclass(frozen=True)
class RolloutConfig:
    seed_len: int = 25
    iterations: int = 4
    drop_seed: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    @property
    def n_frames(self) -> int:
        return self.seed_len * (self.iterations + (0 if self.drop_seed else 1))


class RolloutError(FloatingPointError):
    """Raised when a window turns non-finite; ``partial`` holds the finite prefix."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def rollout_batch(generator: Generator, seeds, controls, iterations: int, drop_seed: bool = False) -> np.ndarray:
    """(B, T, J, 3) seeds -> (B, T*(k+1), J, 3) or (B, T*k, J, 3) with ``drop_seed``.

    Each iteration conditions only on the previous T-frame window.
    """
    seeds = np.asarray(seeds, dtype=float)
    controls = np.asarray(controls, dtype=float)
    windows = [seeds]
    cur = seeds
    with dc.no_grad():
        for k in range(iterations):
            try:
                cur = generator(cur, controls).data
            except NonFiniteError as exc:
                parts = windows[1:] if drop_seed else windows
                partial = np.concatenate(parts, axis=1) if parts else seeds[:, :0]
                raise RolloutError(f"non-finite frame in window {k + 1}: {exc}", partial) from None
            windows.append(cur)
    parts = windows[1:] if drop_seed else windows
    if not parts:
        return seeds[:, :0].copy()
    return np.concatenate(parts, axis=1)


def rollout(
    generator: Generator,
    seed: np.ndarray,
    control: np.ndarray,
    config: RolloutConfig | None = None,
    fps: float = DEFAULT_FPS,
    subject: str = "generated",
) -> MotionClip:
    """Generate ``config.iterations`` windows from one seed under a constant control."""
    config = config or RolloutConfig(seed_len=len(seed))
    seed = np.asarray(seed, dtype=float)
    if len(seed) != config.seed_len:
        raise ValueError(f"seed has {len(seed)} frames, expected {config.seed_len}")
    control = np.asarray(control, dtype=float)
    if control.ndim != 1 or control.sum() != 1 or set(np.unique(control)) - {0.0, 1.0}:
        raise ValueError(f"control must be one-hot, got {control}")
    if config.n_frames == 0:
        raise ValueError("drop_seed with zero iterations leaves no frames")
    action = ACTIONS[int(np.argmax(control))]
    try:
        frames = rollout_batch(generator, seed[None], control[None], config.iterations, config.drop_seed)[0]
    except RolloutError as exc:
        partial = exc.partial[0]
        exc.partial = MotionClip(partial, fps, subject, action) if len(partial) else None
        raise
    return MotionClip(frames, fps, subject, action)


def denormalize_motion(clip: MotionClip, stats: NormalizationStats) -> MotionClip:
    """Map normalized coordinates back to meters."""
    return replace(clip, frames=stats.invert(clip.frames))


def seam_blend(frames: np.ndarray, window: int) -> np.ndarray:
    """Blend loss at every window boundary of rollouts (B, F, J, 3); returns (B, n_seams)."""
    f = np.asarray(frames)
    seams = range(window, f.shape[1], window)
    if not len(seams):
        return np.zeros((f.shape[0], 0))
    return np.stack([((f[:, s - 1] - f[:, s]) ** 2).mean(axis=(1, 2)) for s in seams], axis=1)


def bone_deviation(frames_m: np.ndarray, reference_pose_m: np.ndarray, skeleton: SkeletonSpec) -> np.ndarray:
    """|bone length - reference bone length| per frame and bone, meters: (B, F, S)."""
    lengths = skeleton.bone_lengths(frames_m)
    ref = skeleton.bone_lengths(reference_pose_m)
    return np.abs(lengths - ref[:, None, :])


def export_csv(clip: MotionClip, path) -> None:
    write_clip_csv(clip, path)


def pose_strip_svg(
    frames: np.ndarray,
    skeleton: SkeletonSpec,
    every: int = 10,
    scale: float = 120.0,
    title: str = "",
) -> str:
    """Side-view (forward/up) drawing of every ``every``-th pose, left to right."""
    frames = np.asarray(frames, dtype=float)
    picks = frames[::every] if len(frames) else frames
    gap = 0.6
    width = int(scale * gap * (len(picks) + 1)) + 20
    height = int(scale * 2.2) + 40
    ys = frames[..., 1]
    base = float(ys.max()) if ys.size else 0.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="10" y="18" font-size="14" font-family="sans-serif">{escape(title)}</text>')
    for n, pose in enumerate(picks):
        ox = 10 + scale * gap * (n + 0.5)
        pts = [(ox + scale * (p[2] - pose[0, 2]), 30 + scale * (base - p[1])) for p in pose]
        for i, j in skeleton.bones:
            (x1, y1), (x2, y2) = pts[i], pts[j]
            out.append(
                f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                'stroke="black" stroke-width="2" stroke-linecap="round"/>'
            )
        out.append(
            f'<text x="{ox:.1f}" y="{height - 6}" font-size="10" font-family="sans-serif">{n * every}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_pose_strip(frames, skeleton, path, every: int = 10, title: str = "") -> None:
    Path(path).write_text(pose_strip_svg(frames, skeleton, every, title=title), encoding="utf-8")
