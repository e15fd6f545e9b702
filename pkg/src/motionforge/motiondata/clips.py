"""Motion containers and the Motion CSV format."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .skeleton import SkeletonSpec

log = logging.getLogger(__name__)

ACTIONS = ("knock", "lift", "throw", "walk")
DEFAULT_FPS = 30


class MotionFormatError(ValueError):
    pass


@dataclass
class MotionClip:
    """Frames as an (F, J, 3) array in meters."""

    frames: np.ndarray
    fps: float = DEFAULT_FPS
    subject: str = "s0"
    action: str = "walk"
    heel_strikes: tuple[int, ...] | None = None
    bone_scale: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[-1] != 3 or len(self.frames) < 1:
            raise ValueError(f"clip frames must be (F>=1, J, 3), got {self.frames.shape}")
        if not self.fps > 0:
            raise ValueError(f"frame rate must be positive, got {self.fps}")
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1]


@dataclass
class MotionWindow:
    """Fixed-length (T, J, 3) slice used for training and evaluation."""

    frames: np.ndarray
    fps: float = DEFAULT_FPS
    action: str = "walk"
    subject: str = "s0"
    source: int = field(default=-1, compare=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def label(self) -> int:
        return ACTIONS.index(self.action)


def one_hot(action: str | int, n: int = len(ACTIONS)) -> np.ndarray:
    idx = ACTIONS.index(action) if isinstance(action, str) else int(action)
    y = np.zeros(n)
    y[idx] = 1.0
    return y


def format_header(subject: str, action: str, fps: float, joints: int) -> str:
    return f"# subject={subject} action={action} fps={int(round(fps))} joints={joints}"


def write_clip_csv(clip: MotionClip, path) -> None:
    """Write one clip; values use repr() so they round-trip exactly."""
    flat = clip.frames.reshape(clip.n_frames, -1)
    lines = [format_header(clip.subject, clip.action, clip.fps, clip.n_joints)]
    lines += [",".join(repr(float(v)) for v in row) for row in flat]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(line: str, where: str) -> dict:
    if not line.startswith("#"):
        raise MotionFormatError(f"{where}:1: missing '# subject=.. action=.. fps=.. joints=..' header")
    meta = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise MotionFormatError(f"{where}:1: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        meta[k] = v
    missing = {"subject", "action", "fps", "joints"} - set(meta)
    if missing:
        raise MotionFormatError(f"{where}:1: header lacks {sorted(missing)}")
    if meta["action"] not in ACTIONS:
        raise MotionFormatError(f"{where}:1: unknown action {meta['action']!r}; expected one of {ACTIONS}")
    try:
        meta["fps"] = int(meta["fps"])
        meta["joints"] = int(meta["joints"])
    except ValueError:
        raise MotionFormatError(f"{where}:1: fps and joints must be integers") from None
    if meta["fps"] <= 0:
        raise MotionFormatError(f"{where}:1: fps must be positive")
    return meta


def read_clip_csv(path, skeleton: SkeletonSpec | None = None) -> MotionClip:
    path = Path(path)
    text = path.read_text(encoding="utf-8").splitlines()
    if not text:
        raise MotionFormatError(f"{path}: empty file")
    meta = _parse_header(text[0], str(path))
    n_joints = meta["joints"]
    if skeleton is not None and n_joints != skeleton.n_joints:
        raise MotionFormatError(
            f"{path}:1: header declares {n_joints} joints, skeleton has {skeleton.n_joints}"
        )
    width = 3 * n_joints
    rows = []
    for lineno, line in enumerate(text[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise MotionFormatError(f"{path}:{lineno}: expected {width} values, found {len(parts)}")
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise MotionFormatError(f"{path}:{lineno}: non-numeric value") from None
        if not np.all(np.isfinite(row)):
            raise MotionFormatError(f"{path}:{lineno}: non-finite value")
        rows.append(row)
    if not rows:
        raise MotionFormatError(f"{path}: no frame rows")
    frames = np.asarray(rows).reshape(len(rows), n_joints, 3)
    return MotionClip(frames, fps=meta["fps"], subject=meta["subject"], action=meta["action"])


def load_clips(path, skeleton: SkeletonSpec | None = None) -> list[MotionClip]:
    """Read every ``*.csv`` under ``path`` (sorted by name).  A missing or empty directory yields []."""
    path = Path(path)
    if path.is_file():
        return [read_clip_csv(path, skeleton)]
    if not path.exists():
        log.warning("motion directory %s does not exist", path)
        return []
    return [read_clip_csv(p, skeleton) for p in sorted(path.glob("*.csv"))]
