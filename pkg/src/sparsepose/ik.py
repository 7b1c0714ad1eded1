"""Post-hoc arm refinement so the wrists reach the tracked hand positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InvalidArgumentError
from .rotations import matrix_to_6d, recover_6d, recover_6d_t
from .skeleton import ARM_JOINTS, PoseOutput, Skeleton, forward_kinematics, forward_kinematics_t

OPTIMIZERS = ("adam", "gd")


@dataclass(frozen=True)
class IkConfig:
    lr: float = 1e-3
    iters: int = 5
    optimizer: str = "adam"

    def __post_init__(self):
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")


def hand_error(s: Skeleton, pose: PoseOutput, left_target, right_target) -> np.ndarray:
    """Sum over both hands of the squared wrist-to-target distance, per frame."""
    pos = forward_kinematics(s, pose).pos
    dl = pos[..., s.left_hand_index, :] - np.asarray(left_target)
    dr = pos[..., s.right_hand_index, :] - np.asarray(right_target)
    return np.sum(dl * dl, axis=-1) + np.sum(dr * dr, axis=-1)


def _hand_positions_t(s: Skeleton, pose: PoseOutput, arm: dict[int, ad.Tensor]) -> tuple[ad.Tensor, ad.Tensor]:
    locals_ = [
        arm[j] if j in arm else ad.Tensor(pose.local_rot[:, j - 1]) for j in range(1, s.num_joints)
    ]
    pos, _ = forward_kinematics_t(s, ad.Tensor(pose.global_orient), locals_, ad.Tensor(pose.root_pos))
    return pos[:, s.left_hand_index], pos[:, s.right_hand_index]


def refine_arms(
    pose: PoseOutput,
    s: Skeleton,
    left_target,
    right_target,
    cfg: IkConfig = IkConfig(),
) -> PoseOutput:
    """Optimize shoulder and elbow rotations (as 6D codes) toward the hand targets.

    Everything else, including the root, is left untouched, so the shoulder
    joints stay in place. Frames are independent; a batch of frames is solved
    in one pass. A frame whose final error exceeds its starting error gets its
    input pose back.
    """
    single = pose.global_orient.ndim == 2
    if single:
        pose = PoseOutput(pose.global_orient[None], pose.local_rot[None], np.asarray(pose.root_pos)[None])
        left_target = np.asarray(left_target)[None]
        right_target = np.asarray(right_target)[None]
    lt = np.asarray(left_target, dtype=np.float64)
    rt = np.asarray(right_target, dtype=np.float64)
    if not (np.all(np.isfinite(lt)) and np.all(np.isfinite(rt))):
        raise InvalidArgumentError("hand targets must be finite")
    if cfg.iters == 0:
        return _unbatch(pose.copy(), single)

    codes = {j: ad.Tensor(matrix_to_6d(pose.local_rot[:, j - 1]), requires_grad=True) for j in ARM_JOINTS}
    params = [codes[j] for j in ARM_JOINTS]
    state = ad.AdamState.zeros_like(p.data for p in params)
    for _ in range(cfg.iters):
        arm = {j: recover_6d_t(codes[j]) for j in ARM_JOINTS}
        pl, pr = _hand_positions_t(s, pose, arm)
        err = ad.l2_loss(pl, lt) + ad.l2_loss(pr, rt)
        for p in params:
            p.grad = None
        ad.backward(err)
        if cfg.optimizer == "adam":
            ad.adam_step([p.data for p in params], [p.grad for p in params], state, cfg.lr)
        else:
            for p in params:
                p.data -= cfg.lr * p.grad

    refined = pose.copy()
    for j in ARM_JOINTS:
        refined.local_rot[:, j - 1] = recover_6d(codes[j].data)
    before = hand_error(s, pose, lt, rt)
    after = hand_error(s, refined, lt, rt)
    worse = after > before
    if np.any(worse):
        refined.local_rot[worse] = pose.local_rot[worse]
    return _unbatch(refined, single)


def _unbatch(pose: PoseOutput, single: bool) -> PoseOutput:
    return pose[0] if single else pose
