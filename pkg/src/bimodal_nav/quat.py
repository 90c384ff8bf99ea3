"""Unit-quaternion helpers.

Convention: q = [w, x, y, z], scalar first, Hamilton product, body-to-inertial
rotation (rotate(q, v_body) -> v_inertial).
"""

from __future__ import annotations

import numpy as np


def normalize(q: np.ndarray) -> np.ndarray:
    """Return q / |q|."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / n


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2 (broadcasts over leading axes)."""
    w1, x1, y1, z1 = np.moveaxis(np.asarray(q1, dtype=float), -1, 0)
    w2, x2, y2, z2 = np.moveaxis(np.asarray(q2, dtype=float), -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q (body -> inertial)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * np.cross(u, uv + w * v)


def rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by q^-1 (inertial -> body)."""
    return rotate(conjugate(q), v)


def to_rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R with columns x_B, y_B, z_B (broadcasts: (..., 3, 3))."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def from_rotation_matrix(R: np.ndarray) -> np.ndarray:
    """Quaternion from proper rotation matrix, vectorized over leading axes.

    Shepperd's method: pick the largest of the four squared components to
    avoid cancellation.
    """
    R = np.asarray(R, dtype=float)
    single = R.ndim == 2
    if single:
        R = R[None]
    m00, m01, m02 = R[..., 0, 0], R[..., 0, 1], R[..., 0, 2]
    m10, m11, m12 = R[..., 1, 0], R[..., 1, 1], R[..., 1, 2]
    m20, m21, m22 = R[..., 2, 0], R[..., 2, 1], R[..., 2, 2]
    tr = m00 + m11 + m22

    qs = np.empty(R.shape[:-2] + (4, 4))
    # candidate 0: w dominant
    s = np.sqrt(np.maximum(tr + 1.0, 0.0)) * 2.0 + 1e-300
    qs[..., 0, :] = np.stack([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s], axis=-1)
    # candidate 1: x dominant
    s = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0)) * 2.0 + 1e-300
    qs[..., 1, :] = np.stack([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s], axis=-1)
    # candidate 2: y dominant
    s = np.sqrt(np.maximum(1.0 - m00 + m11 - m22, 0.0)) * 2.0 + 1e-300
    qs[..., 2, :] = np.stack([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s], axis=-1)
    # candidate 3: z dominant
    s = np.sqrt(np.maximum(1.0 - m00 - m11 + m22, 0.0)) * 2.0 + 1e-300
    qs[..., 3, :] = np.stack([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s], axis=-1)

    choice = np.argmax(np.stack([tr, m00, m11, m22], axis=-1), axis=-1)
    q = np.take_along_axis(qs, choice[..., None, None], axis=-2)[..., 0, :]
    q = normalize(q)
    # canonical sign: w >= 0
    q = np.where(q[..., :1] < 0.0, -q, q)
    return q[0] if single else q


def yaw(q: np.ndarray) -> np.ndarray:
    """Yaw angle (Z-Y-X convention) of the rotation."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def from_yaw(psi: float | np.ndarray) -> np.ndarray:
    """Pure yaw rotation."""
    psi = np.asarray(psi, dtype=float)
    return np.stack(
        [np.cos(psi / 2), np.zeros_like(psi), np.zeros_like(psi), np.sin(psi / 2)], axis=-1
    )


def from_yaw_pitch(psi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rz(psi) * Ry(theta) as a quaternion (zero roll)."""
    return multiply(from_yaw(psi), from_pitch(theta))


def from_pitch(theta: float | np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack(
        [np.cos(theta / 2), np.zeros_like(theta), np.sin(theta / 2), np.zeros_like(theta)], axis=-1
    )


def derivative(q: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
    """q_dot = 0.5 * q * [0, omega_body]."""
    omega_body = np.asarray(omega_body, dtype=float)
    zero = np.zeros(omega_body.shape[:-1] + (1,))
    return 0.5 * multiply(q, np.concatenate([zero, omega_body], axis=-1))


def log_map(q: np.ndarray) -> np.ndarray:
    """Rotation vector of q (axis * angle), for small-angle comparisons."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = np.clip(q[..., 0], -1.0, 1.0)
    vn = np.linalg.norm(q[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(vn, w)
    scale = np.where(vn > 1e-12, angle / np.maximum(vn, 1e-300), 2.0)
    return q[..., 1:] * scale[..., None]
