"""Skeleton model: joints, bone pairs and reference bone lengths."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Vertical axis of every pose array (x lateral, y up, z forward).
UP = 1


@dataclass(frozen=True)
class SkeletonSpec:
    joint_names: tuple[str, ...]
    bones: tuple[tuple[int, int], ...]
    lengths: tuple[float, ...]
    root: str = "pelvis"
    left_hip: str = "l_hip"
    right_hip: str = "r_hip"
    left_heel: str = "l_heel"
    right_heel: str = "r_heel"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.joint_names)})
        self.validate()

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_channels(self) -> int:
        return 3 * self.n_joints

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"skeleton has no joint {name!r}") from None

    def validate(self) -> None:
        n = self.n_joints
        if n == 0:
            raise ValueError("skeleton needs at least one joint")
        if len(self.lengths) != len(self.bones):
            raise ValueError(f"{len(self.bones)} bones but {len(self.lengths)} lengths")
        for (i, j), length in zip(self.bones, self.lengths):
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bone ({i}, {j}) indexes outside [0, {n})")
            if i == j:
                raise ValueError(f"bone ({i}, {j}) is a self-pair")
            if not length > 0:
                raise ValueError(f"bone ({i}, {j}) has non-positive length {length}")
        # connectivity by union-find
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.bones:
            parent[find(i)] = find(j)
        if len({find(a) for a in range(n)}) != 1:
            raise ValueError("bone set does not connect all joints")

    def bone_array(self) -> np.ndarray:
        return np.asarray(self.bones, dtype=int).reshape(-1, 2)

    def bone_vectors(self, poses: np.ndarray) -> np.ndarray:
        """(..., J, 3) -> (..., |S|, 3), each bone pointing from i to j."""
        b = self.bone_array()
        return poses[..., b[:, 1], :] - poses[..., b[:, 0], :]

    def bone_lengths(self, poses: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.bone_vectors(poses), axis=-1)

    def scaled(self, factor: float) -> "SkeletonSpec":
        return SkeletonSpec(
            self.joint_names,
            self.bones,
            tuple(float(l) * factor for l in self.lengths),
            self.root,
            self.left_hip,
            self.right_hip,
            self.left_heel,
            self.right_heel,
        )

    def incident_bones(self) -> dict[int, list[int]]:
        """Joint index -> indices (into ``bones``) of bones touching it, in bone order."""
        out: dict[int, list[int]] = {j: [] for j in range(self.n_joints)}
        for k, (i, j) in enumerate(self.bones):
            out[i].append(k)
            out[j].append(k)
        return out


def default_skeleton() -> SkeletonSpec:
    """16-joint body used by the procedural generator."""
    names = (
        "pelvis", "spine", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_shoulder", "r_elbow", "r_wrist",
        "l_hip", "l_knee", "l_heel",
        "r_hip", "r_knee", "r_heel",
    )  # fmt: skip
    bones = (
        (0, 1), (1, 2), (2, 3),
        (2, 4), (4, 5), (5, 6),
        (2, 7), (7, 8), (8, 9),
        (0, 10), (10, 11), (11, 12),
        (0, 13), (13, 14), (14, 15),
    )  # fmt: skip
    lengths = (
        0.25, 0.25, 0.15,
        0.18, 0.28, 0.25,
        0.18, 0.28, 0.25,
        0.10, 0.42, 0.42,
        0.10, 0.42, 0.42,
    )  # fmt: skip
    return SkeletonSpec(names, bones, lengths)


def read_skeleton(path) -> SkeletonSpec:
    """Parse ``<index> <name>`` lines, a ``BONES`` sentinel, then ``<i> <j> <length_m>``."""
    names: dict[int, str] = {}
    bones, lengths = [], []
    in_bones = False
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "BONES":
            in_bones = True
            continue
        parts = line.split()
        try:
            if in_bones:
                if len(parts) != 3:
                    raise ValueError("expected '<i> <j> <length_m>'")
                bones.append((int(parts[0]), int(parts[1])))
                lengths.append(float(parts[2]))
            else:
                if len(parts) != 2:
                    raise ValueError("expected '<index> <name>'")
                names[int(parts[0])] = parts[1]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if sorted(names) != list(range(len(names))):
        raise ValueError(f"{path}: joint indices must be 0..J-1 without gaps")
    return SkeletonSpec(tuple(names[i] for i in range(len(names))), tuple(bones), tuple(lengths))


def write_skeleton(skeleton: SkeletonSpec, path) -> None:
    lines = [f"{i} {n}" for i, n in enumerate(skeleton.joint_names)]
    lines.append("BONES")
    lines += [f"{i} {j} {l!r}" for (i, j), l in zip(skeleton.bones, skeleton.lengths)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
