"""Per-frame input features and sliding windows over tracker streams."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .rotations import angular_velocity, matrix_to_6d

DEVICES = ("head", "left_hand", "right_hand")
FEATURES_PER_DEVICE = 18


@dataclass
class TrackerFrame:
    """Position and orientation of S devices at one or more timesteps.

    ``pos`` has shape ``(..., S, 3)`` and ``orient`` ``(..., S, 3, 3)``. A whole
    stream is simply a TrackerFrame with a leading time axis.
    """

    pos: np.ndarray
    orient: np.ndarray

    def __len__(self) -> int:
        return self.pos.shape[0]

    def __getitem__(self, idx) -> "TrackerFrame":
        return TrackerFrame(self.pos[idx], self.orient[idx])

    @property
    def num_devices(self) -> int:
        return self.pos.shape[-2]


def encode_frame(cur: TrackerFrame, prev: TrackerFrame) -> np.ndarray:
    """[p, v, 6D orientation, 6D angular velocity] per device, devices concatenated.

    Works on single frames or on aligned stacks of frames.
    """
    if cur.pos.shape != prev.pos.shape:
        raise InvalidArgumentError(f"device layout mismatch: {cur.pos.shape} vs {prev.pos.shape}")
    v = cur.pos - prev.pos
    theta = matrix_to_6d(cur.orient)
    omega = matrix_to_6d(angular_velocity(prev.orient, cur.orient))
    per_device = np.concatenate([cur.pos, v, theta, omega], axis=-1)
    return per_device.reshape(per_device.shape[:-2] + (-1,))


def encode_stream(stream: TrackerFrame) -> np.ndarray:
    """Features for frames 1..T-1 of a stream; row ``k`` belongs to frame ``k + 1``."""
    if len(stream) < 2:
        return np.zeros((0, FEATURES_PER_DEVICE * stream.num_devices))
    return encode_frame(stream[1:], stream[:-1])


@dataclass
class Windows:
    """Stacked windows ``(W, N, 18*S)`` and the stream frame each one predicts."""

    features: np.ndarray
    frame_index: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


def window_targets(length: int, window: int, stride: int = 1) -> np.ndarray:
    """Stream frames that can be predicted: ``window, window + stride, ...``."""
    if length < window + 1:
        return np.zeros(0, dtype=np.int64)
    return np.arange(window, length, stride, dtype=np.int64)


def windows_from_features(feats: np.ndarray, window: int, stride: int = 1) -> Windows:
    """Windows over precomputed :func:`encode_stream` rows."""
    targets = window_targets(feats.shape[0] + 1, window, stride)
    if targets.size == 0:
        return Windows(np.zeros((0, window, feats.shape[-1]), feats.dtype), targets)
    # target frame t uses feature rows t-window .. t-1 (frames t-window+1 .. t)
    idx = targets[:, None] - window + np.arange(window)[None, :]
    return Windows(feats[idx], targets)


def make_windows(stream: TrackerFrame, window: int = 40, stride: int = 1) -> Windows:
    """Overlapping windows whose last row is the frame being predicted.

    A stream shorter than ``window + 1`` frames yields no windows and a
    ``UserWarning``.
    """
    if window < 1 or stride < 1:
        raise InvalidArgumentError("window and stride must be positive")
    if len(stream) < window + 1:
        warnings.warn(
            f"stream of {len(stream)} frames is shorter than window + 1 = {window + 1}",
            stacklevel=2,
        )
    return windows_from_features(encode_stream(stream), window, stride)
