"""Rotation and rigid-transform utilities.

Conventions used throughout the stack:

- Quaternions are scalar-first ``[w, x, y, z]`` and represent the attitude of
  the base: ``v_world = rotate(q, v_body)``. Canonical form has ``w >= 0``.
- Euler angles are ZYX ``(yaw, pitch, roll)``: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
  The Euler-rate map is singular at pitch = +-pi/2.
- A rigid transform is a ``Transform`` with rotation matrix ``rot`` (3x3) and
  translation ``pos`` (3,), mapping local points into the parent frame.

Quaternion helpers accept stacked inputs with shape ``(..., 4)`` so filter
code can push whole sigma-point sets through them at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == np.cross(v, u)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-vector cross product without np.cross's axis bookkeeping (hot path)."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def cross_last(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis with plain broadcasting (hot path)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast(a0, b0).shape + (3,))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_to_matrix(euler: np.ndarray) -> np.ndarray:
    """Rotation matrix from (yaw, pitch, roll)."""
    yaw, pitch, roll = np.asarray(euler, dtype=float).reshape(3)
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler_zyx(rot: np.ndarray) -> np.ndarray:
    """(yaw, pitch, roll) from a rotation matrix; pitch folded into [-pi/2, pi/2]."""
    rot = np.asarray(rot, dtype=float)
    pitch = np.arctan2(-rot[2, 0], np.hypot(rot[2, 1], rot[2, 2]))
    yaw = np.arctan2(rot[1, 0], rot[0, 0])
    roll = np.arctan2(rot[2, 1], rot[2, 2])
    return np.array([yaw, pitch, roll])


def euler_rate_matrix(euler: np.ndarray) -> np.ndarray:
    """W(e) with omega_world = W(e) @ (yaw_dot, pitch_dot, roll_dot).

    Columns are the world-frame axes of the ZYX elementary rotations:
    e3, Rz@e2, Rz@Ry@e1. det(W) = -cos(pitch), singular at pitch = +-pi/2.
    """
    yaw, pitch, _ = np.asarray(euler, dtype=float).reshape(3)
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    return np.array(
        [
            [0.0, -sy, cy * cp],
            [0.0, cy, sy * cp],
            [1.0, 0.0, -sp],
        ]
    )


def euler_rate_matrix_partials(euler: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(dW/dyaw, dW/dpitch); W has no roll dependence."""
    yaw, pitch, _ = np.asarray(euler, dtype=float).reshape(3)
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    d_yaw = np.array(
        [
            [0.0, -cy, -sy * cp],
            [0.0, -sy, cy * cp],
            [0.0, 0.0, 0.0],
        ]
    )
    d_pitch = np.array(
        [
            [0.0, 0.0, -cy * sp],
            [0.0, 0.0, -sy * sp],
            [0.0, 0.0, -cp],
        ]
    )
    return d_yaw, d_pitch


# --- quaternions (scalar-first, batched over leading axes) ---


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Unit-norm, canonical (w >= 0) quaternion."""
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < _EPS):
        raise ValueError("cannot normalize near-zero quaternion")
    q = q / norm
    flip = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * flip


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    out = np.empty(np.broadcast(w1, w2).shape + (4,))
    out[..., 0] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[..., 1] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    out[..., 2] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    out[..., 3] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    return out


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by quaternions; broadcasts over leading axes."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * cross_last(qv, v)
    return v + w * t + cross_last(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float).reshape(4)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    rot = np.asarray(rot, dtype=float)
    trace = np.trace(rot)
    if trace > 0.0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (rot[2, 1] - rot[1, 2]) / s, (rot[0, 2] - rot[2, 0]) / s, (rot[1, 0] - rot[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(rot[i, i] - rot[j, j] - rot[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
    return quat_normalize(q)


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    """exp map: rotation vector (..., 3) -> quaternion (..., 4)."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(half)/angle, guarded at 0 where the limit is 1/2
    factor = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    w = np.cos(half)
    return np.concatenate([w, factor * phi], axis=-1)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """log map: quaternion (..., 4) -> rotation vector (..., 3), angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    w = q[..., :1]
    sign = np.where(w < 0.0, -1.0, 1.0)
    w = np.abs(w)
    vec = q[..., 1:] * sign
    norm_vec = np.linalg.norm(vec, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(norm_vec, np.clip(w, 0.0, None))
    small = norm_vec < 1e-9
    scale = np.where(small, 2.0 / np.clip(w, _EPS, None), angle / np.where(small, 1.0, norm_vec))
    return scale * vec


def quat_from_euler_zyx(euler: np.ndarray) -> np.ndarray:
    return matrix_to_quat(euler_zyx_to_matrix(euler))


def quat_to_euler_zyx(q: np.ndarray) -> np.ndarray:
    return matrix_to_euler_zyx(quat_to_matrix(q))


@dataclass(frozen=True)
class Transform:
    """Rigid transform mapping local coordinates into the parent frame."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rot, dtype=float).reshape(3, 3)
        pos = np.asarray(self.pos, dtype=float).reshape(3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation block is not orthonormal")
        object.__setattr__(self, "rot", rot)
        object.__setattr__(self, "pos", pos)

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    @staticmethod
    def from_parts(rot: np.ndarray, pos: np.ndarray) -> "Transform":
        return Transform(rot=rot, pos=pos)

    def compose(self, other: "Transform") -> "Transform":
        return Transform(rot=self.rot @ other.rot, pos=self.pos + self.rot @ other.pos)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.pos + self.rot @ np.asarray(point, dtype=float)

    def rotate(self, vector: np.ndarray) -> np.ndarray:
        return self.rot @ np.asarray(vector, dtype=float)

    def inverse(self) -> "Transform":
        return Transform(rot=self.rot.T, pos=-(self.rot.T @ self.pos))
