"""MPJRE / MPJPE / MPJVE between predicted and ground-truth pose sequences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .rotations import geodesic_angle
from .skeleton import PoseOutput, Skeleton, forward_kinematics

DEFAULT_FPS = 60.0


@dataclass
class EvalReport:
    mpjre: float  # degrees
    mpjpe: float  # cm
    mpjpe_hand: float  # cm
    mpjve: float  # cm/s
    per_joint_rot: np.ndarray
    per_joint_pos: np.ndarray
    per_joint_vel: np.ndarray
    frames: int
    joint_names: tuple[str, ...] = field(default=())

    def summary(self) -> dict[str, float]:
        return {
            "mpjre_deg": self.mpjre,
            "mpjpe_cm": self.mpjpe,
            "mpjpe_hand_cm": self.mpjpe_hand,
            "mpjve_cm_s": self.mpjve,
            "frames": self.frames,
        }

    def to_keyvalue(self) -> str:
        lines = [f"{k}={v!r}" for k, v in self.summary().items()]
        for i, name in enumerate(self.joint_names):
            lines.append(f"joint.{name}.rot_deg={float(self.per_joint_rot[i])!r}")
            lines.append(f"joint.{name}.pos_cm={float(self.per_joint_pos[i])!r}")
            lines.append(f"joint.{name}.vel_cm_s={float(self.per_joint_vel[i])!r}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        out = [
            f"frames      {self.frames}",
            f"MPJRE       {self.mpjre:10.4f} deg",
            f"MPJPE       {self.mpjpe:10.4f} cm",
            f"MPJPE-Hand  {self.mpjpe_hand:10.4f} cm",
            f"MPJVE       {self.mpjve:10.4f} cm/s",
            "",
            f"{'joint':<16}{'rot [deg]':>12}{'pos [cm]':>12}{'vel [cm/s]':>12}",
        ]
        for i, name in enumerate(self.joint_names):
            out.append(
                f"{name:<16}{self.per_joint_rot[i]:12.4f}{self.per_joint_pos[i]:12.4f}{self.per_joint_vel[i]:12.4f}"
            )
        return "\n".join(out) + "\n"


class ErrorAccumulator:
    """Collects per-frame errors from any number of sequences, reports the means."""

    def __init__(self, s: Skeleton, fps: float = DEFAULT_FPS):
        self.s = s
        self.fps = fps
        self._rot: list[np.ndarray] = []
        self._pos: list[np.ndarray] = []
        self._vel: list[np.ndarray] = []

    def add(self, pred: PoseOutput, gt: PoseOutput) -> None:
        n = len(gt)
        if len(pred) != n:
            raise InvalidArgumentError(f"sequence lengths differ: {len(pred)} vs {n}")
        self._rot.append(np.degrees(geodesic_angle(pred.all_rotations(), gt.all_rotations())))
        pp = forward_kinematics(self.s, pred).pos
        pg = forward_kinematics(self.s, gt).pos
        self._pos.append(np.linalg.norm(pp - pg, axis=-1) * 100.0)
        if n > 1:
            dv = (np.diff(pp, axis=0) - np.diff(pg, axis=0)) * self.fps
            self._vel.append(np.linalg.norm(dv, axis=-1) * 100.0)

    def report(self) -> EvalReport:
        j = self.s.num_joints
        if not self._rot:
            raise InvalidArgumentError("no frames to evaluate")
        rot = np.concatenate(self._rot)
        pos = np.concatenate(self._pos)
        vel = np.concatenate(self._vel) if self._vel else np.zeros((0, j))
        hands = [self.s.left_hand_index, self.s.right_hand_index]
        per_vel = vel.mean(axis=0) if vel.size else np.zeros(j)
        return EvalReport(
            mpjre=float(rot.mean()),
            mpjpe=float(pos.mean()),
            mpjpe_hand=float(pos[:, hands].mean()),
            mpjve=float(vel.mean()) if vel.size else 0.0,
            per_joint_rot=rot.mean(axis=0),
            per_joint_pos=pos.mean(axis=0),
            per_joint_vel=per_vel,
            frames=int(rot.shape[0]),
            joint_names=self.s.names,
        )


def evaluate(pred: PoseOutput, gt: PoseOutput, s: Skeleton, fps: float = DEFAULT_FPS) -> EvalReport:
    """Metrics over one aligned pair of sequences (leading axis = frames).

    The pelvis rotation error uses the global orientation; velocities are
    backward differences, so the first frame has none.
    """
    acc = ErrorAccumulator(s, fps)
    acc.add(pred, gt)
    return acc.report()
