"""Procedural skeletal motion standing in for a motion-capture library.

Poses come from forward kinematics over the default skeleton, so bone
lengths are constant by construction.  Walking heel strikes happen where the
left leg is straight and vertical (hip and knee angles both zero), which is
the unique per-cycle minimum of the left heel height; their frames are
recorded on the clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clips import ACTIONS, DEFAULT_FPS, MotionClip, MotionWindow
from .preprocess import GAIT_WINDOW, remove_global_motion, segment_gait, window_actions
from .skeleton import SkeletonSpec, default_skeleton

# windows per subject after windowing, in ACTIONS order
DEFAULT_WINDOWS_PER_SUBJECT = {"knock": 64, "lift": 88, "throw": 64, "walk": 80}

_DOWN = np.array([0.0, -1.0, 0.0])
_UPV = np.array([0.0, 1.0, 0.0])
_LEFT = np.array([1.0, 0.0, 0.0])

# unit rest direction of every bone's child joint, in the parent's frame
_REST_DIR = {
    "spine": _UPV, "neck": _UPV, "head": _UPV,
    "l_shoulder": _LEFT, "l_elbow": _DOWN, "l_wrist": _DOWN,
    "r_shoulder": -_LEFT, "r_elbow": _DOWN, "r_wrist": _DOWN,
    "l_hip": _LEFT, "l_knee": _DOWN, "l_heel": _DOWN,
    "r_hip": -_LEFT, "r_knee": _DOWN, "r_heel": _DOWN,
}  # fmt: skip

_ANGLE_KEYS = (
    "trunk_bend", "trunk_twist", "head_nod",
    "l_sh_flex", "l_sh_abd", "l_elbow",
    "r_sh_flex", "r_sh_abd", "r_elbow",
    "l_hip", "l_knee", "r_hip", "r_knee",
)  # fmt: skip


@dataclass
class SubjectStyle:
    """Per-subject variation; drawn once per subject from its seed."""

    scale: float = 1.0
    tempo: float = 1.0
    amplitude: float = 1.0
    posture: float = 0.0
    jitter: float = 0.05
    gait_period: float | None = None
    first_strike: float | None = None

    @classmethod
    def draw(cls, seed: int) -> "SubjectStyle":
        rng = np.random.default_rng([seed, 7919])
        return cls(
            scale=float(rng.uniform(0.88, 1.12)),
            tempo=float(rng.uniform(0.8, 1.25)),
            amplitude=float(rng.uniform(0.7, 1.3)),
            posture=float(rng.uniform(-0.15, 0.15)),
            jitter=float(rng.uniform(0.03, 0.1)),
        )


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(np.shape(a) + (3, 3))
    R[..., 0, 0] = 1
    R[..., 1, 1] = c
    R[..., 1, 2] = -s
    R[..., 2, 1] = s
    R[..., 2, 2] = c
    return R


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(np.shape(a) + (3, 3))
    R[..., 1, 1] = 1
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(np.shape(a) + (3, 3))
    R[..., 2, 2] = 1
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def _mm(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def _mv(a, v):
    return np.einsum("...ij,...j->...i", a, v)


def forward_kinematics(
    skeleton: SkeletonSpec,
    angles: dict,
    root_pos: np.ndarray,
    heading: np.ndarray,
    scale: float = 1.0,
) -> np.ndarray:
    """Joint positions (F, J, 3) from joint angles (radians, each shape (F,)).

    Flexion is positive forward for hips and shoulders; knee and elbow
    flexion bend the distal segment back and forward respectively.
    """
    n = len(root_pos)
    L = {skeleton.joint_names[j]: skeleton.lengths[k] * scale for k, (_, j) in enumerate(skeleton.bones)}
    a = {k: np.asarray(angles.get(k, np.zeros(n)), dtype=float) for k in _ANGLE_KEYS}
    J = skeleton.index
    P = np.zeros((n, skeleton.n_joints, 3))
    G0 = _ry(heading)
    P[:, J("pelvis")] = root_pos

    def place(child, parent, frame):
        P[:, J(child)] = P[:, J(parent)] + _mv(frame, _REST_DIR[child] * L[child])

    G_spine = _mm(G0, _mm(_ry(a["trunk_twist"]), _rx(a["trunk_bend"])))
    place("spine", "pelvis", G_spine)
    place("neck", "spine", G_spine)
    place("head", "neck", _mm(G_spine, _rx(a["head_nod"])))
    for side, sgn in (("l", 1.0), ("r", -1.0)):
        place(f"{side}_shoulder", "neck", G_spine)
        G_up = _mm(G_spine, _mm(_rz(sgn * a[f"{side}_sh_abd"]), _rx(-a[f"{side}_sh_flex"])))
        place(f"{side}_elbow", f"{side}_shoulder", G_up)
        G_fore = _mm(G_up, _rx(-a[f"{side}_elbow"]))
        place(f"{side}_wrist", f"{side}_elbow", G_fore)
        place(f"{side}_hip", "pelvis", G0)
        G_thigh = _mm(G0, _rx(-a[f"{side}_hip"]))
        place(f"{side}_knee", f"{side}_hip", G_thigh)
        G_shank = _mm(G_thigh, _rx(a[f"{side}_knee"]))
        place(f"{side}_heel", f"{side}_knee", G_shank)
    return P


def _smooth_noise(rng, n: int, fps: float, scale: float) -> np.ndarray:
    """Sum of a few slow random sinusoids; band-limited wobble for joint angles."""
    t = np.arange(n) / fps
    out = np.zeros(n)
    for _ in range(3):
        f = rng.uniform(0.1, 0.8)
        out += rng.normal(0.0, scale) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out


def _leg_extent(skeleton, scale, hip, knee):
    thigh = skeleton.lengths[skeleton.bones.index((skeleton.index("l_hip"), skeleton.index("l_knee")))] * scale
    shank = skeleton.lengths[skeleton.bones.index((skeleton.index("l_knee"), skeleton.index("l_heel")))] * scale
    return thigh * np.cos(hip) + shank * np.cos(hip - knee)


def _bump(x):
    """Smooth 0->1->0 pulse over x in [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return np.sin(np.pi * x) ** 2


def synth_procedural(
    action: str,
    subject_params: SubjectStyle | dict | None = None,
    rng_seed: int = 0,
    n_frames: int = 250,
    fps: float = DEFAULT_FPS,
    subject: str = "s0",
    skeleton: SkeletonSpec | None = None,
) -> MotionClip:
    """One kinematically consistent clip of ``action``.

    Walking advances the pelvis along a random heading; the other actions
    stand in place.  Identical arguments give an identical clip.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}; expected one of {ACTIONS}")
    skeleton = skeleton or default_skeleton()
    if subject_params is None:
        style = SubjectStyle()
    elif isinstance(subject_params, dict):
        style = SubjectStyle(**subject_params)
    else:
        style = subject_params
    rng = np.random.default_rng([rng_seed, ACTIONS.index(action)])
    n = int(n_frames)
    t = np.arange(n, dtype=float)
    amp = style.amplitude * rng.uniform(0.9, 1.1)
    ang = {k: _smooth_noise(rng, n, fps, style.jitter) for k in _ANGLE_KEYS}
    ang["trunk_bend"] += style.posture
    heading0 = rng.uniform(-np.pi, np.pi)
    heading = heading0 + 0.15 * _smooth_noise(rng, n, fps, 1.0)
    start = rng.uniform(-2.0, 2.0, size=3)
    start[1] = 0.0
    strikes = None

    if action == "walk":
        period = style.gait_period or fps * rng.uniform(0.95, 1.2) / style.tempo
        t0 = style.first_strike if style.first_strike is not None else rng.uniform(0, period)
        phi = 2 * np.pi * (t - t0) / period
        hip_amp, knee_amp = 0.45 * amp, 0.9 * amp
        for side, off in (("l", 0.0), ("r", np.pi)):
            p = phi + off
            # legs carry no noise so heel minima stay exactly on the strike phase
            ang[f"{side}_hip"] = hip_amp * np.sin(p)
            ang[f"{side}_knee"] = knee_amp * 0.5 * (1 - np.cos(p))
            ang[f"{side}_sh_flex"] += -0.4 * amp * np.sin(p)
            ang[f"{side}_elbow"] += 0.35 + 0.15 * amp * (1 + np.sin(p))
            ang[f"{side}_sh_abd"] += 0.08
        leg = _leg_extent(skeleton, style.scale, 0.0, 0.0)
        stride_len = 4 * 0.42 * style.scale * np.sin(hip_amp)
        speed = stride_len / period
        fwd = np.stack([np.sin(heading), np.zeros(n), np.cos(heading)], axis=1)
        root = start + np.cumsum(fwd * speed, axis=0)
        root[:, 1] = leg
        ks = range(int(np.ceil(-t0 / period)), int(np.floor((n - 1 - t0) / period)) + 1)
        strikes = [t0 + k * period for k in ks]
    else:
        period = fps * {"knock": 2.2, "lift": 3.2, "throw": 2.6}[action] / style.tempo
        phase0 = rng.uniform(0, 1)
        u = ((t / period) + phase0) % 1.0
        if action == "knock":
            raise_env = _bump(u)
            ang["r_sh_flex"] += raise_env * 1.25 * amp
            ang["r_sh_abd"] += 0.1 * raise_env
            rate = 2.5 * style.tempo
            taps = 0.5 + 0.5 * np.sin(2 * np.pi * rate * t / fps)
            ang["r_elbow"] += raise_env * (1.0 + 0.5 * amp * taps)
            ang["head_nod"] += 0.1 * raise_env
            ang["l_elbow"] += 0.2
        elif action == "lift":
            bend = _bump(u)
            ang["trunk_bend"] += 0.95 * amp * bend
            for side in ("l", "r"):
                ang[f"{side}_sh_flex"] += 0.9 * amp * bend
                ang[f"{side}_elbow"] += 0.25 + 0.5 * _bump(np.clip(2 * u - 1, 0, 1))
                ang[f"{side}_hip"] += 0.5 * amp * bend
                ang[f"{side}_knee"] += 1.0 * amp * bend
        else:  # throw
            wind = _bump(np.clip(u / 0.6, 0, 1))
            release = _bump(np.clip((u - 0.55) / 0.3, 0, 1))
            ang["r_sh_flex"] += -0.9 * amp * wind + 2.0 * amp * release
            ang["r_sh_abd"] += 0.5 * wind
            ang["r_elbow"] += 1.4 * wind + 0.3 * release
            ang["trunk_twist"] += -0.45 * amp * wind + 0.35 * amp * release
            ang["trunk_bend"] += 0.25 * release
            ang["l_sh_flex"] += 0.5 * wind
        hip_mean = 0.5 * (ang["l_hip"] + ang["r_hip"])
        knee_mean = 0.5 * (ang["l_knee"] + ang["r_knee"])
        # stand on both feet: legs share one configuration
        for side in ("l", "r"):
            ang[f"{side}_hip"] = hip_mean
            ang[f"{side}_knee"] = np.abs(knee_mean)
        root = np.tile(start, (n, 1)) + 0.02 * np.stack(
            [_smooth_noise(rng, n, fps, 1.0), np.zeros(n), _smooth_noise(rng, n, fps, 1.0)], axis=1
        )
        root[:, 1] = _leg_extent(skeleton, style.scale, ang["l_hip"], ang["l_knee"])

    frames = forward_kinematics(skeleton, ang, root, heading, style.scale)
    if strikes is not None:
        # the sampled minimum is whichever neighbouring frame of the exact strike time sits lower
        heel = frames[:, skeleton.index(skeleton.left_heel), 1]
        picked = []
        for ts in strikes:
            lo, hi = int(np.floor(ts)), int(np.ceil(ts))
            f = lo if heel[lo] <= heel[min(hi, n - 1)] else hi
            if 0 < f < n - 1:
                picked.append(f)
        strikes = tuple(picked)
    return MotionClip(frames, fps, subject, action, strikes, style.scale)


def skeleton_deviation(clip: MotionClip, skeleton: SkeletonSpec) -> float:
    """Largest |bone length - scaled reference| over all frames, meters."""
    ref = np.asarray(skeleton.lengths) * clip.bone_scale
    return float(np.abs(skeleton.bone_lengths(clip.frames) - ref).max())


def build_dataset(
    n_subjects: int,
    seed: int = 0,
    windows_per_subject: dict | None = None,
    skeleton: SkeletonSpec | None = None,
    fps: float = DEFAULT_FPS,
) -> list[MotionClip]:
    """Raw clips for ``n_subjects`` sized so that windowing yields the per-action counts."""
    if n_subjects < 1:
        raise ValueError("need at least one subject")
    skeleton = skeleton or default_skeleton()
    counts = dict(DEFAULT_WINDOWS_PER_SUBJECT if windows_per_subject is None else windows_per_subject)
    unknown = sorted(set(counts) - set(ACTIONS))
    if unknown:
        raise ValueError(f"unknown actions {unknown}; valid actions: {', '.join(ACTIONS)}")
    clips = []
    for s in range(n_subjects):
        sid = f"s{s:02d}"
        style = SubjectStyle.draw(seed * 100003 + s)
        for action in ACTIONS:
            count = int(counts.get(action, 0))
            if count <= 0:
                continue
            clip_seed = seed * 100003 + s * 101 + ACTIONS.index(action)
            if action == "walk":
                # enough cycles for `count` gait windows plus margins at both ends
                n = int(np.ceil((count + 2) * fps * 1.2 / style.tempo / 0.95)) + 10
                clip = synth_procedural(action, style, clip_seed, n, fps, sid, skeleton)
                strikes = clip.heel_strikes
                if len(strikes) > count + 1:
                    end = strikes[count] + 2
                    clip.frames = clip.frames[:end]
                    clip.heel_strikes = tuple(x for x in strikes if x < end)
            else:
                clip = synth_procedural(action, style, clip_seed, count * GAIT_WINDOW, fps, sid, skeleton)
            clips.append(clip)
    return clips


def clips_to_windows(
    clips: list[MotionClip], skeleton: SkeletonSpec, target_len: int = GAIT_WINDOW
) -> list[MotionWindow]:
    """Gait cycles for walking clips, plain windows otherwise; global motion removed."""
    windows = []
    for clip in clips:
        if clip.action == "walk":
            # heel strikes need world heights, so segment first and canonicalize each cycle
            for w in segment_gait(clip, skeleton, target_len):
                as_clip = MotionClip(w.frames, w.fps, w.subject, w.action)
                w.frames = remove_global_motion(as_clip, skeleton).frames
                windows.append(w)
        else:
            windows.extend(window_actions(remove_global_motion(clip, skeleton), target_len))
    return windows
