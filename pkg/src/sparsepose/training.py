"""Composite L1 loss and the training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .data import MotionClip, extract_trackers
from .errors import ConfigError
from .features import encode_stream
from .model import ModelConfig, ModelOutput, ModelWeights, forward, init_weights, load_checkpoint, save_checkpoint
from .rotations import matrix_to_6d, matrix_to_6d_t, recover_6d_t
from .skeleton import HEAD_CHAIN, PoseOutput, Skeleton, forward_kinematics, fk_from_head_t, forward_kinematics_t, root_from_head

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    ori: float = 0.05
    rot: float = 1.0
    fk: float = 1.0

    def __post_init__(self):
        if min(self.ori, self.rot, self.fk) < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    batch: int = 256
    window: int = 40
    lr: float = 1e-4
    decay_factor: float = 0.5
    decay_every: int = 20_000
    max_iters: int = 1000
    seed: int = 0
    checkpoint_every: int = 1000
    no_stabilizer: bool = False
    predict_pelvis: bool = False
    no_fk_loss: bool = False
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if min(self.batch, self.window, self.decay_every, self.checkpoint_every) < 1:
            raise ConfigError("batch, window, decay_every and checkpoint_every must be positive")
        if not (self.lr > 0 and self.decay_factor > 0) or self.max_iters < 0:
            raise ConfigError("lr and decay_factor must be positive, max_iters non-negative")

    @property
    def effective_weights(self) -> LossWeights:
        if self.no_fk_loss:
            return LossWeights(self.loss_weights.ori, self.loss_weights.rot, 0.0)
        return self.loss_weights

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        if isinstance(d.get("loss_weights"), dict):
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        return cls(**d)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Step decay: ``lr * decay_factor ** (iteration // decay_every)``."""
    return cfg.lr * cfg.decay_factor ** (iteration // cfg.decay_every)


@dataclass
class Targets:
    """Ground truth for a batch of predicted frames."""

    global_orient: np.ndarray  # (B, 3, 3)
    local_rot: np.ndarray  # (B, 21, 3, 3)
    head_pos: np.ndarray  # (B, 3) tracked head
    head_orient: np.ndarray  # (B, 3, 3)
    joint_pos: np.ndarray  # (B, 22, 3)

    @classmethod
    def from_pose(cls, pose: PoseOutput, s: Skeleton, head_pos=None, head_orient=None) -> "Targets":
        js = forward_kinematics(s, pose)
        head_pos = js.pos[:, s.head_index] if head_pos is None else head_pos
        head_orient = js.orient[:, s.head_index] if head_orient is None else head_orient
        # target joints are placed with the same head-derived root as the prediction
        root = root_from_head(s, pose.global_orient, pose.local_rot, head_pos)
        pos = forward_kinematics(s, PoseOutput(pose.global_orient, pose.local_rot, root)).pos
        return cls(pose.global_orient, pose.local_rot, head_pos, head_orient, pos)


def _chain_t(local: ad.Tensor) -> ad.Tensor:
    out = local[:, HEAD_CHAIN[0] - 1]
    for j in HEAD_CHAIN[1:]:
        out = out @ local[:, j - 1]
    return out


def loss(
    pred: ModelOutput,
    target: Targets,
    s: Skeleton,
    w: LossWeights = LossWeights(),
    *,
    no_stabilizer: bool = False,
) -> tuple[ad.Tensor, dict[str, float]]:
    """Weighted sum of L1 orientation, L1 local-rotation and L1 joint-position terms.

    All terms are means over elements. The predicted and target skeletons are
    both rooted through the same tracked head, so the position term measures
    articulation rather than a shared translation. With a pelvis head the
    predicted root is used directly instead.
    """
    dt = pred.local6d.dtype
    tgt_local6d = matrix_to_6d(target.local_rot).astype(dt)
    tgt_global6d = matrix_to_6d(target.global_orient).astype(dt)
    l_rot = ad.l1_loss(pred.local6d, tgt_local6d)

    need_mats = w.fk > 0 or no_stabilizer
    local = recover_6d_t(pred.local6d) if need_mats else None
    if no_stabilizer:
        glob = ad.Tensor(target.head_orient.astype(dt)) @ _chain_t(local).swapaxes(-1, -2)
        l_ori = ad.l1_loss(matrix_to_6d_t(glob), tgt_global6d)
    else:
        glob = recover_6d_t(pred.global6d) if need_mats else None
        l_ori = ad.l1_loss(pred.global6d, tgt_global6d)

    total = w.ori * l_ori + w.rot * l_rot
    parts = {"ori": l_ori.item(), "rot": l_rot.item(), "fk": 0.0}
    if w.fk > 0:
        if pred.pelvis is not None:
            pos, _ = forward_kinematics_t(s, glob, local, pred.pelvis)
        else:
            pos = fk_from_head_t(s, glob, local, target.head_pos.astype(dt))
        l_fk = ad.l1_loss(pos, target.joint_pos.astype(dt))
        total = total + w.fk * l_fk
        parts["fk"] = l_fk.item()
    parts["total"] = total.item()
    return total, parts


# -- data preparation ------------------------------------------------------------
@dataclass
class PreparedClip:
    features: np.ndarray  # (T-1, F); row k is frame k+1
    targets: Targets  # per frame, T entries


def prepare_clip(clip: MotionClip, s: Skeleton, dtype="float32") -> PreparedClip:
    pose = clip.to_pose()
    stream = extract_trackers(pose, s)
    feats = encode_stream(stream).astype(dtype)
    tg = Targets.from_pose(pose, s, stream.pos[:, 0], stream.orient[:, 0])
    return PreparedClip(feats, tg)


class WindowSampler:
    """Index of every (clip, frame) pair that has a full window behind it."""

    def __init__(self, prepared: Sequence[PreparedClip], window: int):
        self.prepared = list(prepared)
        self.window = window
        pairs = [
            (ci, t)
            for ci, pc in enumerate(self.prepared)
            for t in range(window, pc.features.shape[0] + 1)
        ]
        self.pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def batch(self, idx: np.ndarray) -> tuple[np.ndarray, Targets]:
        n = self.window
        xs, parts = [], {k: [] for k in ("global_orient", "local_rot", "head_pos", "head_orient", "joint_pos")}
        for ci, t in self.pairs[idx]:
            pc = self.prepared[ci]
            xs.append(pc.features[t - n : t])
            for k in parts:
                parts[k].append(getattr(pc.targets, k)[t])
        return np.stack(xs), Targets(**{k: np.stack(v) for k, v in parts.items()})


@dataclass
class TrainResult:
    weights: ModelWeights
    history: list[tuple[int, float, float, float, float]]
    iteration: int


HISTORY_HEADER = "# iteration total ori rot fk"


def write_history(path, history, append: bool = False) -> None:
    path = Path(path)
    mode = "a" if append and path.exists() else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write(HISTORY_HEADER + "\n")
        for it, tot, ori, rot, fk in history:
            fh.write(f"{it} {tot:.9g} {ori:.9g} {rot:.9g} {fk:.9g}\n")


def read_history(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


def _opt_arrays(opt: ad.Adam) -> dict[str, np.ndarray]:
    out = {}
    for i, (m, v) in enumerate(zip(opt.state.m, opt.state.v)):
        out[f"m{i}"], out[f"v{i}"] = m, v
    return out


def train(
    clips: Sequence[MotionClip],
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    s: Skeleton | None = None,
    *,
    checkpoint: str | Path | None = None,
    history_path: str | Path | None = None,
    resume: str | Path | None = None,
    callback: Callable[[int, dict], None] | None = None,
) -> TrainResult:
    """Adam on randomly sampled windows with step learning-rate decay.

    With ``resume`` the weights, optimizer moments, sampler RNG and iteration
    count continue from that checkpoint; ``cfg.max_iters`` is the total
    iteration budget across runs.
    """
    from .skeleton import default_skeleton

    s = s or default_skeleton()
    if not clips:
        raise ConfigError("training needs at least one clip")
    if resume is not None:
        weights, extra, opt_arrays = load_checkpoint(resume)
        model_cfg = weights.config
    else:
        model_cfg = model_cfg or ModelConfig(window=cfg.window, predict_pelvis=cfg.predict_pelvis)
        weights, extra, opt_arrays = init_weights(model_cfg, cfg.seed), {}, {}
    if model_cfg.window != cfg.window:
        raise ConfigError(f"model window {model_cfg.window} != train window {cfg.window}")
    if model_cfg.predict_pelvis != cfg.predict_pelvis:
        raise ConfigError("predict_pelvis differs between model and train config")

    sampler = WindowSampler([prepare_clip(c, s, model_cfg.dtype) for c in clips], cfg.window)
    if len(sampler) == 0:
        raise ConfigError(f"no clip is longer than window + 1 = {cfg.window + 1} frames")

    rng = np.random.default_rng(cfg.seed)
    opt = ad.Adam(weights.tensors(), lr=cfg.lr)
    start = 0
    if resume is not None:
        start = int(extra.get("iteration", 0))
        opt.state.step = int(extra.get("adam_step", 0))
        for i in range(len(opt.params)):
            opt.state.m[i][...] = opt_arrays[f"m{i}"]
            opt.state.v[i][...] = opt_arrays[f"v{i}"]
        if "rng_state" in extra:
            rng.bit_generator.state = extra["rng_state"]

    lw = cfg.effective_weights
    history: list[tuple[int, float, float, float, float]] = []
    flushed = 0

    def save(it: int) -> None:
        nonlocal flushed
        if history_path is not None:
            write_history(history_path, history[flushed:], append=flushed > 0 or resume is not None)
            flushed = len(history)
        if checkpoint is not None:
            meta = {
                "iteration": it,
                "adam_step": opt.state.step,
                "rng_state": rng.bit_generator.state,
                "train_config": cfg.to_dict(),
            }
            save_checkpoint(checkpoint, weights, json.loads(json.dumps(meta)), _opt_arrays(opt))

    t0 = time.perf_counter()
    it = start
    while it < cfg.max_iters:
        idx = rng.integers(0, len(sampler), size=cfg.batch)
        x, tg = sampler.batch(idx)
        opt.zero_grad()
        out = forward(weights, x)
        total, parts = loss(out, tg, s, lw, no_stabilizer=cfg.no_stabilizer)
        ad.backward(total)
        opt.lr = lr_at(it, cfg)
        opt.step()
        it += 1
        history.append((it, parts["total"], parts["ori"], parts["rot"], parts["fk"]))
        if callback is not None:
            callback(it, parts)
        if it % cfg.checkpoint_every == 0:
            log.info("iter %d loss %.5f (%.1fs)", it, parts["total"], time.perf_counter() - t0)
            save(it)
    if it % cfg.checkpoint_every != 0 or it == start:
        save(it)
    return TrainResult(weights, history, it)


def dataset_loss(
    weights: ModelWeights,
    clips: Sequence[MotionClip],
    s: Skeleton,
    lw: LossWeights = LossWeights(),
    *,
    no_stabilizer: bool = False,
    batch: int = 512,
) -> dict[str, float]:
    """Loss averaged over every window of every clip (no sampling noise)."""
    sampler = WindowSampler([prepare_clip(c, s, weights.config.dtype) for c in clips], weights.config.window)
    sums: dict[str, float] = {}
    with ad.no_grad():
        for startb in range(0, len(sampler), batch):
            idx = np.arange(startb, min(startb + batch, len(sampler)))
            x, tg = sampler.batch(idx)
            _, parts = loss(forward(weights, x), tg, s, lw, no_stabilizer=no_stabilizer)
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * idx.size
    return {k: v / len(sampler) for k, v in sums.items()}
