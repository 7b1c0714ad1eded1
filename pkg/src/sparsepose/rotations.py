"""Rotation encodings: axis-angle, 3x3 matrices and the continuous 6D code.

All functions accept arrays with arbitrary leading batch dimensions, so a
``(T, 22, 3)`` block of axis-angle vectors converts to ``(T, 22, 3, 3)``
matrices in one call. Matrices are row-major and the 6D code is the first two
rows, flattened.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import DegenerateRotationError, InvalidArgumentError

# Below this norm a 6D half is treated as zero / parallel.
DEGENERATE_EPS = 1e-12


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [
            np.stack([o, -z, y], axis=-1),
            np.stack([z, o, -x], axis=-1),
            np.stack([-y, x, o], axis=-1),
        ],
        axis=-2,
    )


def axis_angle_to_matrix(a) -> np.ndarray:
    """Rodrigues' formula. Zero vectors map to the identity."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != 3:
        raise InvalidArgumentError(f"axis-angle must end in 3, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("axis-angle contains non-finite values")
    theta = np.linalg.norm(a, axis=-1)
    safe = np.where(theta > 0.0, theta, 1.0)
    k = _skew(a / safe[..., None])
    s = np.sin(theta)[..., None, None]
    c = (1.0 - np.cos(theta))[..., None, None]
    return np.eye(3) + s * k + c * (k @ k)


def _canonical_sign(axis: np.ndarray) -> np.ndarray:
    # +1 where the first non-zero component is positive, -1 otherwise.
    nz = np.abs(axis) > 1e-12
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(axis, first[..., None], axis=-1)[..., 0]
    return np.where(lead < 0.0, -1.0, 1.0)


def matrix_to_axis_angle(m) -> np.ndarray:
    """Inverse of :func:`axis_angle_to_matrix`, angle in [0, pi].

    For angles past pi/2 the axis is read from the symmetric part of the
    matrix, which stays well conditioned up to pi; its sign comes from the
    antisymmetric part. At exactly pi that part vanishes and the axis with a
    non-negative first non-zero component is returned.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"rotation matrix must end in (3, 3), got {m.shape}")
    w = 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )
    sin_t = np.linalg.norm(w, axis=-1)
    cos_t = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin_t, np.clip(cos_t, -1.0, 1.0))

    # small / moderate angles: a = w * theta / sin(theta)
    ratio = np.where(sin_t > 1e-12, theta / np.where(sin_t > 1e-12, sin_t, 1.0), 1.0)
    small = w * ratio[..., None]

    # large angles: (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T
    sym = 0.5 * (m + np.swapaxes(m, -1, -2)) - cos_t[..., None, None] * np.eye(3)
    diag = np.diagonal(sym, axis1=-2, axis2=-1)
    col = np.argmax(diag, axis=-1)
    n = np.take_along_axis(sym, col[..., None, None], axis=-1)[..., 0]
    n = n / np.maximum(np.linalg.norm(n, axis=-1, keepdims=True), 1e-300)
    d = np.sum(n * w, axis=-1)
    sign = np.where(np.abs(d) > 1e-12, np.sign(d), _canonical_sign(n))
    large = n * (sign * theta)[..., None]

    return np.where((cos_t < 0.0)[..., None], large, small)


def matrix_to_6d(m) -> np.ndarray:
    """First two rows, flattened; always a fresh array, never a view of ``m``."""
    m = np.asarray(m)
    return m[..., :2, :].reshape(m.shape[:-2] + (6,)).copy()


def recover_6d(r) -> np.ndarray:
    """Gram-Schmidt a 6D code back into a rotation matrix (rows b1, b2, b3)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise InvalidArgumentError(f"6D code must end in 6, got shape {r.shape}")
    a1, a2 = r[..., :3], r[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= DEGENERATE_EPS):
        raise DegenerateRotationError("first 6D vector is zero")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 <= DEGENERATE_EPS * np.maximum(1.0, np.linalg.norm(a2, axis=-1, keepdims=True))):
        raise DegenerateRotationError("6D vectors are parallel or the second is zero")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-2)


def recover_6d_t(r: ad.Tensor) -> ad.Tensor:
    """Differentiable :func:`recover_6d` for tensors of shape ``(..., 6)``."""
    a1 = r[..., 0:3]
    a2 = r[..., 3:6]
    b1 = ad.normalize(a1)
    b2 = ad.normalize(a2 - ad.sum(b1 * a2, axis=-1, keepdims=True) * b1)
    b3 = ad.cross(b1, b2)
    return ad.stack([b1, b2, b3], axis=-2)


def matrix_to_6d_t(m: ad.Tensor) -> ad.Tensor:
    return m[..., 0:2, :].reshape(m.shape[:-2] + (6,))


def angular_velocity(prev, cur) -> np.ndarray:
    """Relative rotation prev^T cur taking ``prev`` onto ``cur``."""
    return np.swapaxes(np.asarray(prev), -1, -2) @ np.asarray(cur)


def geodesic_angle(a, b) -> np.ndarray:
    """Angle in radians of the rotation a^T b, in [0, pi].

    Equals ``arccos(clamp((trace(a^T b) - 1) / 2))`` but is evaluated with
    atan2 so that near-identical inputs give ~1e-16 rather than ~1e-8.
    """
    rel = np.swapaxes(np.asarray(a), -1, -2) @ np.asarray(b)
    c = 0.5 * (np.trace(rel, axis1=-2, axis2=-1) - 1.0)
    s = 0.5 * np.linalg.norm(
        np.stack(
            [
                rel[..., 2, 1] - rel[..., 1, 2],
                rel[..., 0, 2] - rel[..., 2, 0],
                rel[..., 1, 0] - rel[..., 0, 1],
            ],
            axis=-1,
        ),
        axis=-1,
    )
    return np.arctan2(s, np.clip(c, -1.0, 1.0))


def rot_x(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([angle, 0.0, 0.0]))


def rot_y(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([0.0, angle, 0.0]))


def rot_z(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([0.0, 0.0, angle]))


def is_rotation(m, tol: float = 1e-6) -> bool:
    m = np.asarray(m)
    eye = np.swapaxes(m, -1, -2) @ m
    return bool(
        np.all(np.abs(eye - np.eye(3)) <= tol) and np.all(np.abs(np.linalg.det(m) - 1.0) <= tol)
    )
