"""Kinematic tree, forward kinematics and root recovery from the head."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import FormatError, InvalidArgumentError

NUM_JOINTS = 22

# Joints on the head chain, pelvis excluded (spine1, spine2, spine3, neck, head).
HEAD_CHAIN = (3, 6, 9, 12, 15)
LEFT_ARM = (16, 18)  # shoulder, elbow
RIGHT_ARM = (17, 19)
ARM_JOINTS = (16, 17, 18, 19)


@dataclass(frozen=True, eq=False)
class Skeleton:
    names: tuple[str, ...]
    parents: np.ndarray  # (J,), parents[0] == -1
    offsets: np.ndarray  # (J, 3) rest offsets in the parent frame
    root_index: int = 0
    head_index: int = 15
    left_hand_index: int = 20
    right_hand_index: int = 21

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        n = len(self.names)
        if n != NUM_JOINTS:
            raise InvalidArgumentError(f"skeleton must have {NUM_JOINTS} joints, got {n}")
        if parents.shape != (n,) or offsets.shape != (n, 3):
            raise InvalidArgumentError("parents/offsets do not match the joint count")
        if parents[0] != -1:
            raise InvalidArgumentError("joint 0 must be the root")
        if np.any(parents[1:] >= np.arange(1, n)) or np.any(parents[1:] < 0):
            raise InvalidArgumentError("joints must be topologically ordered (parent < child)")
        parents.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)

    @property
    def num_joints(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def chain(self, joint: int) -> list[int]:
        """Joint indices from the root down to ``joint`` inclusive."""
        out = []
        while joint >= 0:
            out.append(joint)
            joint = int(self.parents[joint])
        return out[::-1]

    def descendants(self, joint: int) -> set[int]:
        out = {joint}
        for j in range(joint + 1, self.num_joints):
            if int(self.parents[j]) in out:
                out.add(j)
        return out

    def digest(self) -> bytes:
        """16-byte fingerprint of names, topology and offsets."""
        h = hashlib.sha256()
        h.update("\n".join(self.names).encode())
        h.update(self.parents.astype("<i8").tobytes())
        h.update(self.offsets.astype("<f8").tobytes())
        return h.digest()[:16]

    def to_text(self) -> str:
        lines = ["# name parent offset_x offset_y offset_z"]
        for i, name in enumerate(self.names):
            parent = "-" if self.parents[i] < 0 else self.names[self.parents[i]]
            x, y, z = (repr(float(v)) for v in self.offsets[i])
            lines.append(f"{name} {parent} {x} {y} {z}")
        return "\n".join(lines) + "\n"


def parse_skeleton(text: str) -> Skeleton:
    names: list[str] = []
    parents: list[int] = []
    offsets: list[tuple[float, float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FormatError(f"skeleton line {lineno}: expected 5 fields, got {len(parts)}")
        name, parent = parts[0], parts[1]
        if parent == "-":
            parents.append(-1)
        elif parent in names:
            parents.append(names.index(parent))
        else:
            raise FormatError(f"skeleton line {lineno}: unknown parent {parent!r}")
        try:
            offsets.append(tuple(float(v) for v in parts[2:]))
        except ValueError as exc:
            raise FormatError(f"skeleton line {lineno}: {exc}") from None
        names.append(name)
    kw = {}
    for key, joint in (("head_index", "head"), ("left_hand_index", "left_wrist"), ("right_hand_index", "right_wrist")):
        if joint in names:
            kw[key] = names.index(joint)
    try:
        return Skeleton(tuple(names), np.array(parents), np.array(offsets), **kw)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from None


def load_skeleton(path: str | Path | None = None) -> Skeleton:
    """Load a skeleton file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("sparsepose.resources").joinpath("skeleton_default.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_skeleton(text)


_DEFAULT: Skeleton | None = None


def default_skeleton() -> Skeleton:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_skeleton()
    return _DEFAULT


@dataclass
class PoseOutput:
    """Pelvis world orientation, 21 child-relative rotations and pelvis position.

    Fields may carry matching leading batch axes, e.g. ``(T, 21, 3, 3)``.
    """

    global_orient: np.ndarray  # (..., 3, 3)
    local_rot: np.ndarray  # (..., 21, 3, 3)
    root_pos: np.ndarray  # (..., 3)

    def __len__(self) -> int:
        return self.root_pos.shape[0]

    def __getitem__(self, idx) -> "PoseOutput":
        return PoseOutput(self.global_orient[idx], self.local_rot[idx], self.root_pos[idx])

    def all_rotations(self) -> np.ndarray:
        """(..., 22, 3, 3) with the global orientation in the pelvis slot."""
        return np.concatenate([self.global_orient[..., None, :, :], self.local_rot], axis=-3)

    def copy(self) -> "PoseOutput":
        return PoseOutput(self.global_orient.copy(), self.local_rot.copy(), self.root_pos.copy())

    @classmethod
    def concat(cls, poses: Sequence["PoseOutput"]) -> "PoseOutput":
        return cls(
            np.concatenate([p.global_orient for p in poses]),
            np.concatenate([p.local_rot for p in poses]),
            np.concatenate([p.root_pos for p in poses]),
        )

    @classmethod
    def rest(cls, root_pos=(0.0, 0.0, 0.0), batch: tuple[int, ...] = ()) -> "PoseOutput":
        eye = np.eye(3)
        return cls(
            np.broadcast_to(eye, batch + (3, 3)).copy(),
            np.broadcast_to(eye, batch + (NUM_JOINTS - 1, 3, 3)).copy(),
            np.broadcast_to(np.asarray(root_pos, dtype=np.float64), batch + (3,)).copy(),
        )


@dataclass
class JointState:
    pos: np.ndarray  # (..., 22, 3) world positions
    orient: np.ndarray  # (..., 22, 3, 3) world orientations


def forward_kinematics(s: Skeleton, p: PoseOutput) -> JointState:
    g = np.asarray(p.global_orient, dtype=np.float64)
    local = np.asarray(p.local_rot, dtype=np.float64)
    batch = g.shape[:-2]
    orient = np.empty(batch + (s.num_joints, 3, 3))
    pos = np.empty(batch + (s.num_joints, 3))
    orient[..., 0, :, :] = g
    pos[..., 0, :] = p.root_pos
    for j in range(1, s.num_joints):
        par = s.parents[j]
        orient[..., j, :, :] = orient[..., par, :, :] @ local[..., j - 1, :, :]
        pos[..., j, :] = pos[..., par, :] + orient[..., par, :, :] @ s.offsets[j]
    return JointState(pos, orient)


def root_from_head(s: Skeleton, global_orient, local_rot, head_pos_world) -> np.ndarray:
    """Root position that puts the FK head joint exactly on ``head_pos_world``."""
    g = np.asarray(global_orient, dtype=np.float64)
    rel = forward_kinematics(s, PoseOutput(g, local_rot, np.zeros(g.shape[:-2] + (3,))))
    return np.asarray(head_pos_world, dtype=np.float64) - rel.pos[..., s.head_index, :]


def head_chain_rotation(local_rot) -> np.ndarray:
    """Product of the local rotations from pelvis down to the head joint."""
    local = np.asarray(local_rot)
    out = np.broadcast_to(np.eye(3), local.shape[:-3] + (3, 3))
    for j in HEAD_CHAIN:
        out = out @ local[..., j - 1, :, :]
    return out


def global_from_head(head_orient, local_rot) -> np.ndarray:
    """Pelvis orientation implied by a world head orientation and the local chain."""
    return np.asarray(head_orient) @ np.swapaxes(head_chain_rotation(local_rot), -1, -2)


# -- differentiable versions --------------------------------------------------
def forward_kinematics_t(
    s: Skeleton,
    global_orient: ad.Tensor,
    local_rot: ad.Tensor | Sequence[ad.Tensor],
    root_pos=None,
) -> tuple[ad.Tensor, list[ad.Tensor]]:
    """Tensor FK. Returns positions ``(B, 22, 3)`` and per-joint world orientations.

    ``local_rot`` is either a ``(B, 21, 3, 3)`` tensor or a list of 21
    ``(B, 3, 3)`` tensors; the list form lets callers mix constant and
    optimized joints without slicing.
    """
    if isinstance(local_rot, ad.Tensor):
        local = [local_rot[:, j] for j in range(s.num_joints - 1)]
    else:
        local = list(local_rot)
    orient: list[ad.Tensor] = [global_orient]
    root = ad.Tensor(np.zeros(global_orient.shape[:-2] + (3,), global_orient.dtype)) if root_pos is None else root_pos
    pos: list[ad.Tensor] = [ad.as_tensor(root, global_orient)]
    offsets = s.offsets.astype(global_orient.dtype)
    for j in range(1, s.num_joints):
        par = int(s.parents[j])
        orient.append(orient[par] @ local[j - 1])
        pos.append(pos[par] + orient[par] @ offsets[j])
    return ad.stack(pos, axis=1), orient


def fk_from_head_t(
    s: Skeleton, global_orient: ad.Tensor, local_rot, head_pos_world
) -> ad.Tensor:
    """Tensor FK with the root placed so the head lands on ``head_pos_world``."""
    rel, _ = forward_kinematics_t(s, global_orient, local_rot)
    root = ad.as_tensor(head_pos_world, rel) - rel[:, s.head_index]
    return rel + ad.reshape(root, (root.shape[0], 1, 3))
