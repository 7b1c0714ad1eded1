"""Streaming inference: windows -> network -> decode -> optional IK, plus evaluation and timing."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import MotionClip, extract_trackers, synth_motion
from .errors import InvalidArgumentError
from .features import TrackerFrame, encode_stream, windows_from_features
from .ik import IkConfig, refine_arms
from .metrics import ErrorAccumulator, EvalReport
from .model import ModelWeights, decode, forward, predict
from . import autodiff as ad
from .skeleton import PoseOutput, Skeleton


@dataclass(frozen=True)
class PipelineConfig:
    """Inference-time switches. ``ik.iters == 0`` or ``use_ik=False`` skips refinement."""

    ik: IkConfig = field(default_factory=IkConfig)
    use_ik: bool = True
    no_stabilizer: bool = False
    batch_size: int = 256


@dataclass
class Inference:
    pose: PoseOutput  # one pose per predicted frame
    frame_index: np.ndarray  # stream frame each pose belongs to


def infer_stream(w: ModelWeights, stream: TrackerFrame, s: Skeleton, cfg: PipelineConfig = PipelineConfig()) -> Inference:
    """Predict every frame from ``window`` onward, each from its own past window only."""
    n = w.config.window
    if len(stream) < n + 1:
        raise InvalidArgumentError(f"stream has {len(stream)} frames, needs at least {n + 1}")
    feats = encode_stream(stream).astype(w.config.dtype)
    wins = windows_from_features(feats, n, 1)
    g6, l6, pelvis = predict(w, wins.features, cfg.batch_size)
    idx = wins.frame_index
    head = TrackerFrame(stream.pos[idx, 0], stream.orient[idx, 0])
    pose = decode(g6, l6, head, s, use_stabilizer=not cfg.no_stabilizer, pelvis=pelvis)
    if cfg.use_ik and cfg.ik.iters > 0:
        pose = refine_arms(pose, s, stream.pos[idx, 1], stream.pos[idx, 2], cfg.ik)
    return Inference(pose, idx)


def evaluate_clips(
    w: ModelWeights,
    clips: Sequence[MotionClip],
    s: Skeleton,
    cfg: PipelineConfig = PipelineConfig(),
    threads: int = 1,
) -> EvalReport:
    """Stride-1 streaming inference on each clip, metrics pooled over all frames."""
    fps = {c.fps for c in clips}
    if len(fps) != 1:
        raise InvalidArgumentError(f"clips must share one frame rate, got {sorted(fps)}")

    def run(clip: MotionClip) -> tuple[PoseOutput, PoseOutput]:
        gt = clip.to_pose()
        inf = infer_stream(w, extract_trackers(gt, s), s, cfg)
        return inf.pose, gt[inf.frame_index]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            pairs = list(pool.map(run, clips))
    else:
        pairs = [run(c) for c in clips]
    acc = ErrorAccumulator(s, fps.pop())
    for pred, gt in pairs:  # fixed order keeps the reduction deterministic
        acc.add(pred, gt)
    return acc.report()


def ground_truth_report(clips: Sequence[MotionClip], s: Skeleton, window: int) -> EvalReport:
    """Ground truth scored against itself over the frames the pipeline predicts."""
    acc = ErrorAccumulator(s, clips[0].fps)
    for c in clips:
        gt = c.to_pose()[window:]
        acc.add(gt, gt)
    return acc.report()


@dataclass
class BenchReport:
    frames: int
    network_ms_mean: float
    network_ms_p95: float
    ik_iter_ms_mean: float
    ik_iter_ms_p95: float
    ik_iters: int

    @property
    def network_fps(self) -> float:
        return 1000.0 / self.network_ms_mean

    def to_text(self) -> str:
        return (
            f"frames               {self.frames}\n"
            f"network ms/frame     mean {self.network_ms_mean:.4f}  p95 {self.network_ms_p95:.4f}\n"
            f"network throughput   {self.network_fps:.1f} fps\n"
            f"IK ms/iteration      mean {self.ik_iter_ms_mean:.4f}  p95 {self.ik_iter_ms_p95:.4f}"
            f"  ({self.ik_iters} iterations per frame)\n"
        )


def bench(w: ModelWeights, s: Skeleton, frames: int = 1000, ik: IkConfig = IkConfig(), seed: int = 0) -> BenchReport:
    """Per-frame network time and per-iteration IK time, measured separately.

    Every frame is processed alone (batch size 1), as in live streaming.
    """
    if frames < 1:
        raise InvalidArgumentError("frames must be positive")
    n = w.config.window
    clip = synth_motion("composite", (frames + n + 1) / 60.0 + 0.1, seed)
    stream = extract_trackers(clip, s)
    wins = windows_from_features(encode_stream(stream).astype(w.config.dtype), n, 1)
    wins_x = wins.features[:frames]
    idx = wins.frame_index[:frames]

    net = np.empty(frames)
    outs = []
    with ad.no_grad():
        forward(w, wins_x[0])  # warm-up
        for i in range(frames):
            t0 = time.perf_counter()
            out = forward(w, wins_x[i])
            net[i] = time.perf_counter() - t0
            outs.append(out)
    g6 = np.concatenate([o.global6d.data for o in outs]).astype(np.float64)
    l6 = np.concatenate([o.local6d.data for o in outs]).astype(np.float64)
    head = TrackerFrame(stream.pos[idx, 0], stream.orient[idx, 0])
    pose = decode(g6, l6, head, s)

    iters = max(ik.iters, 1)
    ikcfg = IkConfig(ik.lr, iters, ik.optimizer)
    per_iter = np.empty(frames)
    for i in range(frames):
        t0 = time.perf_counter()
        refine_arms(pose[i], s, stream.pos[idx[i], 1], stream.pos[idx[i], 2], ikcfg)
        per_iter[i] = (time.perf_counter() - t0) / iters
    ms = 1000.0
    return BenchReport(
        frames,
        float(net.mean() * ms),
        float(np.percentile(net, 95) * ms),
        float(per_iter.mean() * ms),
        float(np.percentile(per_iter, 95) * ms),
        iters,
    )
