"""Motion clips: storage, synthetic generation, resampling and tracker extraction.

Binary container (all little-endian)::

    magic    4s   b"SPMC"
    version  u16  1
    kind     u8   0 = motion clip, 1 = tracker stream
    _pad     u8
    fps      f64
    count    u32  joints per frame (clip) or devices per frame (stream)
    frames   u32
    digest   16s  skeleton fingerprint (zeros if unknown)

followed by ``frames`` records of float64. A clip record is ``root_pos(3),
global_orient(3), local_rot(21*3)``; a stream record is ``pos(3),
orient(3)`` per device. Orientations are axis-angle.

The text variant has one ``# key=value ...`` header line and one frame per
line in the same column order, written with ``repr`` so it round-trips exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .features import TrackerFrame
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle, rot_y
from .skeleton import NUM_JOINTS, PoseOutput, Skeleton, default_skeleton, forward_kinematics

MAGIC = b"SPMC"
VERSION = 1
KIND_CLIP = 0
KIND_STREAM = 1
_HEADER = struct.Struct("<4sHBBdII16s")
NO_DIGEST = bytes(16)

KINDS = ("walk-cycle", "arm-wave", "squat", "head-turn", "composite")


@dataclass
class MotionClip:
    fps: float
    root_pos: np.ndarray  # (T, 3)
    global_orient: np.ndarray  # (T, 3) axis-angle
    local_rot: np.ndarray  # (T, 21, 3) axis-angle
    skeleton_digest: bytes = NO_DIGEST
    kind: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.fps > 0:
            raise InvalidArgumentError(f"fps must be positive, got {self.fps}")
        self.root_pos = np.asarray(self.root_pos, dtype=np.float64)
        self.global_orient = np.asarray(self.global_orient, dtype=np.float64)
        self.local_rot = np.asarray(self.local_rot, dtype=np.float64)
        t = self.root_pos.shape[0]
        if (
            self.root_pos.shape != (t, 3)
            or self.global_orient.shape != (t, 3)
            or self.local_rot.shape != (t, NUM_JOINTS - 1, 3)
        ):
            raise InvalidArgumentError("inconsistent clip array shapes")

    def __len__(self) -> int:
        return self.root_pos.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fps

    def to_pose(self) -> PoseOutput:
        return PoseOutput(
            axis_angle_to_matrix(self.global_orient),
            axis_angle_to_matrix(self.local_rot),
            self.root_pos.copy(),
        )

    @classmethod
    def from_pose(cls, pose: PoseOutput, fps: float, skeleton: Skeleton | None = None, kind: str = ""):
        return cls(
            fps,
            np.array(pose.root_pos, dtype=np.float64),
            matrix_to_axis_angle(pose.global_orient),
            matrix_to_axis_angle(pose.local_rot),
            skeleton.digest() if skeleton is not None else NO_DIGEST,
            kind,
        )

    def record_array(self) -> np.ndarray:
        t = len(self)
        return np.concatenate(
            [self.root_pos, self.global_orient, self.local_rot.reshape(t, -1)], axis=1
        )

    def equals(self, other: "MotionClip") -> bool:
        """Bit-level equality of all stored values."""
        return (
            self.fps == other.fps
            and self.skeleton_digest == other.skeleton_digest
            and self.record_array().tobytes() == other.record_array().tobytes()
        )


# -- file I/O ------------------------------------------------------------------
def _pack(kind: int, fps: float, count: int, digest: bytes, records: np.ndarray) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, kind, 0, float(fps), count, records.shape[0], digest)
    return header + np.ascontiguousarray(records, dtype="<f8").tobytes()


def _unpack(buf: bytes) -> tuple[int, float, int, bytes, np.ndarray]:
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    magic, version, kind, _, fps, count, frames, digest = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    width = {KIND_CLIP: 3 + 3 * count, KIND_STREAM: 6 * count}.get(kind)
    if width is None:
        raise FormatError(f"unknown record kind {kind}")
    body = buf[_HEADER.size :]
    if len(body) != frames * width * 8:
        raise FormatError(f"expected {frames * width * 8} payload bytes, got {len(body)}")
    records = np.frombuffer(body, dtype="<f8").reshape(frames, width).astype(np.float64)
    return kind, fps, count, digest, records


def clip_to_bytes(clip: MotionClip) -> bytes:
    return _pack(KIND_CLIP, clip.fps, NUM_JOINTS, clip.skeleton_digest, clip.record_array())


def clip_from_records(fps: float, digest: bytes, records: np.ndarray) -> MotionClip:
    t = records.shape[0]
    return MotionClip(
        fps, records[:, 0:3], records[:, 3:6], records[:, 6:].reshape(t, NUM_JOINTS - 1, 3), digest
    )


def clip_from_bytes(buf: bytes) -> MotionClip:
    kind, fps, count, digest, records = _unpack(buf)
    if kind != KIND_CLIP or count != NUM_JOINTS:
        raise FormatError(f"not a {NUM_JOINTS}-joint motion clip (kind={kind}, count={count})")
    return clip_from_records(fps, digest, records)


def stream_to_bytes(stream: TrackerFrame, fps: float, digest: bytes = NO_DIGEST) -> bytes:
    t, s = stream.pos.shape[:2]
    rec = np.concatenate([stream.pos, matrix_to_axis_angle(stream.orient)], axis=-1)
    return _pack(KIND_STREAM, fps, s, digest, rec.reshape(t, 6 * s))


def stream_from_bytes(buf: bytes) -> tuple[TrackerFrame, float]:
    kind, fps, count, _, records = _unpack(buf)
    if kind != KIND_STREAM:
        raise FormatError("not a tracker stream file")
    rec = records.reshape(records.shape[0], count, 6)
    return TrackerFrame(rec[..., :3].copy(), axis_angle_to_matrix(rec[..., 3:])), fps


def save_clip(clip: MotionClip, path: str | Path) -> None:
    Path(path).write_bytes(clip_to_bytes(clip))


def load_clip(path: str | Path) -> MotionClip:
    return clip_from_bytes(Path(path).read_bytes())


def save_stream(stream: TrackerFrame, fps: float, path: str | Path) -> None:
    Path(path).write_bytes(stream_to_bytes(stream, fps))


def load_stream(path: str | Path) -> tuple[TrackerFrame, float]:
    return stream_from_bytes(Path(path).read_bytes())


def clip_to_text(clip: MotionClip) -> str:
    lines = [
        f"# kind=clip fps={clip.fps!r} count={NUM_JOINTS} frames={len(clip)} "
        f"digest={clip.skeleton_digest.hex()}"
    ]
    for row in clip.record_array():
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def clip_from_text(text: str) -> MotionClip:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing header line")
    try:
        meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
        fps = float(meta["fps"])
        digest = bytes.fromhex(meta.get("digest", NO_DIGEST.hex()))
        rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad text clip: {exc}") from None
    width = 3 + 3 * NUM_JOINTS
    if meta.get("kind", "clip") != "clip" or any(len(r) != width for r in rows):
        raise FormatError(f"every frame line must hold {width} values")
    if "frames" in meta and int(meta["frames"]) != len(rows):
        raise FormatError(f"header says {meta['frames']} frames, found {len(rows)}")
    return clip_from_records(fps, digest, np.array(rows, dtype=np.float64).reshape(-1, width))


def load_clips(directory: str | Path) -> list[MotionClip]:
    """All ``*.spmc`` clips in a directory, sorted by file name."""
    paths = sorted(Path(directory).glob("*.spmc"))
    return [load_clip(p) for p in paths]


# -- trackers ------------------------------------------------------------------
def tracker_joints(s: Skeleton) -> tuple[int, int, int]:
    return (s.head_index, s.left_hand_index, s.right_hand_index)


def extract_trackers(clip: MotionClip | PoseOutput, s: Skeleton | None = None) -> TrackerFrame:
    """Simulated headset and hand devices: world transforms of head and wrists."""
    s = s or default_skeleton()
    pose = clip.to_pose() if isinstance(clip, MotionClip) else clip
    js = forward_kinematics(s, pose)
    idx = list(tracker_joints(s))
    return TrackerFrame(js.pos[..., idx, :].copy(), js.orient[..., idx, :, :].copy())


# -- resampling ----------------------------------------------------------------
def _slerp_matrix(r0: np.ndarray, r1: np.ndarray, u: np.ndarray) -> np.ndarray:
    rel = matrix_to_axis_angle(np.swapaxes(r0, -1, -2) @ r1)
    u = u.reshape(u.shape + (1,) * (rel.ndim - u.ndim))
    return r0 @ axis_angle_to_matrix(rel * u)


def resample(clip: MotionClip, target_fps: float) -> MotionClip:
    """Resample to ``target_fps``; frame count is ``round(duration * target_fps)``.

    Root positions are interpolated linearly, rotations along the shortest
    geodesic between neighbouring frames.
    """
    if not target_fps > 0:
        raise InvalidArgumentError(f"target fps must be positive, got {target_fps}")
    n = len(clip)
    if n < 2:
        raise InvalidArgumentError("cannot resample a clip with fewer than two frames")
    count = int(round(n / clip.fps * target_fps))
    src = np.arange(count) * (clip.fps / target_fps)
    src = np.clip(src, 0.0, n - 1)
    i0 = np.minimum(np.floor(src).astype(np.int64), n - 2)
    u = src - i0
    i1 = i0 + 1

    root = clip.root_pos[i0] * (1.0 - u)[:, None] + clip.root_pos[i1] * u[:, None]
    exact = u == 0.0
    root[exact] = clip.root_pos[i0[exact]]

    rots = np.concatenate([clip.global_orient[:, None], clip.local_rot], axis=1)
    mats = axis_angle_to_matrix(rots)
    out = matrix_to_axis_angle(_slerp_matrix(mats[i0], mats[i1], u))
    out[exact] = rots[i0[exact]]
    return MotionClip(target_fps, root, out[:, 0], out[:, 1:], clip.skeleton_digest, clip.kind)


# -- dataset split -------------------------------------------------------------
@dataclass
class DatasetSplit:
    train: list[MotionClip]
    test: list[MotionClip]
    seed: int


def split_dataset(clips: Sequence[MotionClip], test_ratio: float = 0.1, seed: int = 0) -> DatasetSplit:
    if not 0.0 <= test_ratio < 1.0:
        raise InvalidArgumentError("test_ratio must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(len(clips))
    n_test = int(round(test_ratio * len(clips)))
    if test_ratio > 0 and len(clips) > 1:
        n_test = min(max(n_test, 1), len(clips) - 1)
    test = [clips[i] for i in sorted(order[:n_test])]
    train = [clips[i] for i in sorted(order[n_test:])]
    return DatasetSplit(train, test, seed)


# -- synthetic motion ------------------------------------------------------------
# joint indices used by the generator
PELVIS, L_HIP, R_HIP, SPINE1, L_KNEE, R_KNEE, SPINE2, L_ANKLE, R_ANKLE, SPINE3 = range(10)
L_FOOT, R_FOOT, NECK, L_COLLAR, R_COLLAR, HEAD = range(10, 16)
L_SHOULDER, R_SHOULDER, L_ELBOW, R_ELBOW, L_WRIST, R_WRIST = range(16, 22)

ARM_DOWN = 1.25  # shoulder roll that brings horizontal arms down along the body


def _eye(t: int) -> np.ndarray:
    return np.broadcast_to(np.eye(3), (t, NUM_JOINTS, 3, 3)).copy()


def _rx(a):
    return axis_angle_to_matrix(np.stack([a, np.zeros_like(a), np.zeros_like(a)], -1))


def _ry(a):
    return axis_angle_to_matrix(np.stack([np.zeros_like(a), a, np.zeros_like(a)], -1))


def _rz(a):
    return axis_angle_to_matrix(np.stack([np.zeros_like(a), np.zeros_like(a), a], -1))


def _pre(rots: np.ndarray, j: int, r: np.ndarray) -> None:
    """Apply ``r`` on the parent side of joint ``j``'s rotation."""
    rots[:, j] = r @ rots[:, j]


def _sines(rng, t, n: int, amp: float, fmax: float = 0.6) -> np.ndarray:
    out = np.zeros_like(t)
    for _ in range(n):
        out += rng.uniform(0.3, 1.0) * amp * np.sin(2 * np.pi * rng.uniform(0.1, fmax) * t + rng.uniform(0, 2 * np.pi))
    return out


def _arms_down(rots, rng, t, sway: float = 0.0) -> None:
    for side, sh, el in ((1.0, L_SHOULDER, L_ELBOW), (-1.0, R_SHOULDER, R_ELBOW)):
        drop = ARM_DOWN + rng.uniform(-0.1, 0.1) + _sines(rng, t, 1, sway)
        _pre(rots, sh, _rz(-side * drop))
        bend = rng.uniform(0.1, 0.35) + np.abs(_sines(rng, t, 1, sway))
        _pre(rots, el, _ry(-side * bend))


def _idle(rots, rng, t, amp: float) -> None:
    for j in (SPINE1, SPINE2, SPINE3, NECK, L_COLLAR, R_COLLAR):
        _pre(rots, j, _rx(_sines(rng, t, 1, amp)) @ _ry(_sines(rng, t, 1, amp)) @ _rz(_sines(rng, t, 1, amp)))


def _walk(rng, t):
    n = t.size
    rots = _eye(n)
    freq = rng.uniform(0.8, 1.1)
    phase = 2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)
    hip_amp = rng.uniform(0.3, 0.5)
    knee_amp = rng.uniform(0.5, 0.9)
    arm_amp = rng.uniform(0.2, 0.45)
    s = np.sin(phase)
    _pre(rots, L_HIP, _rx(-hip_amp * s))
    _pre(rots, R_HIP, _rx(hip_amp * s))
    _pre(rots, L_KNEE, _rx(knee_amp * 0.5 * (1 + np.sin(phase + 1.2))))
    _pre(rots, R_KNEE, _rx(knee_amp * 0.5 * (1 - np.sin(phase + 1.2))))
    _pre(rots, L_ANKLE, _rx(-0.15 * s))
    _pre(rots, R_ANKLE, _rx(0.15 * s))
    _pre(rots, SPINE1, _ry(-0.08 * s))
    _arms_down(rots, rng, t)
    _pre(rots, L_SHOULDER, _rx(arm_amp * s))
    _pre(rots, R_SHOULDER, _rx(-arm_amp * s))
    _pre(rots, L_ELBOW, _ry(-0.15 * (1 + s)))
    _pre(rots, R_ELBOW, _ry(0.15 * (1 - s)))
    _idle(rots, rng, t, 0.03)

    heading = rng.uniform(-np.pi, np.pi) + rng.uniform(-0.4, 0.4) * t + _sines(rng, t, 1, 0.2, 0.2)
    rots[:, PELVIS] = _ry(heading) @ _rz(0.04 * s) @ _ry(0.06 * s)
    speed = freq * rng.uniform(1.0, 1.3)
    dt = np.diff(t, prepend=t[0] - (t[1] - t[0] if t.size > 1 else 0.0))
    step = speed * dt
    root = np.zeros((n, 3))
    root[:, 0] = np.cumsum(np.sin(heading) * step)
    root[:, 2] = np.cumsum(np.cos(heading) * step)
    root[:, 0] += rng.uniform(-2, 2)
    root[:, 2] += rng.uniform(-2, 2)
    root[:, 1] = _standing_height() - 0.025 * (1 - np.cos(2 * phase))
    return rots, root


def _standing_height(s: Skeleton | None = None) -> float:
    s = s or default_skeleton()
    rest = forward_kinematics(s, PoseOutput.rest())
    return float(-rest.pos[[L_FOOT, R_FOOT], 1].min())


def _arm_wave(rng, t):
    n = t.size
    rots = _eye(n)
    _arms_down(rots, rng, t, 0.03)
    w = 2 * np.pi * rng.uniform(0.3, 0.7)
    arms = [(1.0, L_SHOULDER, L_ELBOW), (-1.0, R_SHOULDER, R_ELBOW)]
    which = rng.integers(0, 3)  # left, right, both
    look = np.zeros(n)
    for k, (side, sh, el) in enumerate(arms):
        if which != 2 and which != k:
            continue
        ph = rng.uniform(0, 2 * np.pi)
        lift = rng.uniform(1.0, 2.2) * 0.5 * (1 - np.cos(w * t + ph))
        fwd = rng.uniform(-0.6, 0.3) * 0.5 * (1 - np.cos(w * t + ph))
        _pre(rots, sh, _rz(side * lift) @ _rx(fwd))
        wave = rng.uniform(0.3, 0.7) * np.sin(2.5 * w * t + rng.uniform(0, 2 * np.pi))
        _pre(rots, el, _ry(-side * (0.4 + 0.4 * lift / 2.2 + wave * lift / 2.2)))
        look += side * 0.25 * lift / 2.2
    _pre(rots, NECK, _ry(look))
    _pre(rots, SPINE2, _rz(-0.05 * look))
    _idle(rots, rng, t, 0.03)
    rots[:, PELVIS] = _ry(np.full(n, rng.uniform(-np.pi, np.pi)) + _sines(rng, t, 1, 0.05, 0.3))
    root = np.zeros((n, 3))
    root[:] = [rng.uniform(-2, 2), _standing_height(), rng.uniform(-2, 2)]
    root[:, 0] += _sines(rng, t, 1, 0.02, 0.3)
    root[:, 2] += _sines(rng, t, 1, 0.02, 0.3)
    return rots, root


def _squat(rng, t):
    n = t.size
    rots = _eye(n)
    w = 2 * np.pi * rng.uniform(0.25, 0.5)
    depth = rng.uniform(0.5, 1.0) * 0.5 * (1 - np.cos(w * t + rng.uniform(0, 2 * np.pi)))
    hip = -1.3 * depth
    knee = 2.0 * depth
    for h, k, a in ((L_HIP, L_KNEE, L_ANKLE), (R_HIP, R_KNEE, R_ANKLE)):
        _pre(rots, h, _rx(hip))
        _pre(rots, k, _rx(knee))
        _pre(rots, a, _rx(-(hip + knee)))
    _pre(rots, SPINE1, _rx(0.45 * depth))
    _pre(rots, NECK, _rx(-0.3 * depth))
    _arms_down(rots, rng, t)
    reach = rng.uniform(0.8, 1.4) * depth
    _pre(rots, L_SHOULDER, _rx(-reach))
    _pre(rots, R_SHOULDER, _rx(-reach))
    _idle(rots, rng, t, 0.02)
    heading = rng.uniform(-np.pi, np.pi)
    rots[:, PELVIS] = _ry(np.full(n, heading))

    # keep the feet planted: place the root so the mean foot position stays put
    s = default_skeleton()
    rel = forward_kinematics(s, PoseOutput(rots[:, 0], rots[:, 1:], np.zeros((n, 3)))).pos
    feet = rel[:, [L_FOOT, R_FOOT]].mean(axis=1)
    anchor = np.array([rng.uniform(-2, 2), _foot_height(), rng.uniform(-2, 2)])
    return rots, anchor - feet


def _foot_height() -> float:
    s = default_skeleton()
    rest = forward_kinematics(s, PoseOutput.rest())
    return float(rest.pos[[L_FOOT, R_FOOT], 1].mean() + _standing_height())


def _head_turn(rng, t):
    n = t.size
    rots = _eye(n)
    yaw = rng.uniform(0.4, 1.1) * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    pitch = rng.uniform(0.1, 0.4) * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    rots[:, NECK] = _ry(yaw)
    rots[:, HEAD] = _rx(pitch)
    rots[:, PELVIS] = rot_y(rng.uniform(-np.pi, np.pi))
    root = np.broadcast_to([rng.uniform(-2, 2), _standing_height(), rng.uniform(-2, 2)], (n, 3)).copy()
    return rots, root


def _composite(rng, t):
    rots, root = _walk(rng, t)
    head, _ = _head_turn(rng, t)
    for j in (NECK, HEAD):
        rots[:, j] = rots[:, j] @ head[:, j]
    side, sh, el = [(1.0, L_SHOULDER, L_ELBOW), (-1.0, R_SHOULDER, R_ELBOW)][rng.integers(0, 2)]
    w = 2 * np.pi * rng.uniform(0.3, 0.6)
    lift = rng.uniform(0.5, 1.5) * 0.5 * (1 - np.cos(w * t))
    _pre(rots, sh, _rz(side * lift))
    _pre(rots, el, _ry(-side * 0.5 * lift))
    return rots, root


_GENERATORS = {
    "walk-cycle": _walk,
    "arm-wave": _arm_wave,
    "squat": _squat,
    "head-turn": _head_turn,
    "composite": _composite,
}


def synth_motion(kind: str, duration: float, seed: int = 0, fps: float = 60.0) -> MotionClip:
    """Procedural, band-limited motion of the given kind.

    ``head-turn`` clips move only the neck and head; every other joint keeps its
    rest rotation and the body stays in place.
    """
    if kind not in _GENERATORS:
        raise InvalidArgumentError(f"unknown motion kind {kind!r}; expected one of {KINDS}")
    if not duration > 0:
        raise InvalidArgumentError("duration must be positive")
    n = int(round(duration * fps))
    t = np.arange(n) / fps
    rng = np.random.default_rng(seed)
    rots, root = _GENERATORS[kind](rng, t)
    pose = PoseOutput(rots[:, 0], rots[:, 1:], root)
    return MotionClip.from_pose(pose, fps, default_skeleton(), kind)


def synth_dataset(count: int, duration: float, seed: int = 0, kinds: Sequence[str] = KINDS) -> list[MotionClip]:
    """``count`` clips cycling through ``kinds`` with seeds derived from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [synth_motion(kinds[i % len(kinds)], duration, int(seeds[i])) for i in range(count)]


def rest_clip(frames: int, fps: float = 60.0, root_pos=(0.0, 0.0, 0.0)) -> MotionClip:
    return MotionClip.from_pose(PoseOutput.rest(root_pos, (frames,)), fps, default_skeleton(), "rest")
