"""Rigid-body transforms: unit-quaternion poses and the 6-DOF tangent form.

Quaternions are stored w-last (qx, qy, qz, qw), matching the on-disk
trajectory format. Poses are camera-to-world: ``X_world = R @ X_cam + t``.
The relative transform from camera a to camera b is
``inverse(pose_b) @ pose_a`` (maps a-camera coordinates to b-camera
coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UNIT_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform (unit quaternion + translation)."""

    rotation: np.ndarray  # (4,) quaternion, (qx, qy, qz, qw)
    translation: np.ndarray  # (3,) meters

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"quaternion norm {norm!r} deviates from 1 by more than {_UNIT_TOL}")
        object.__setattr__(self, "rotation", _freeze(q))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_quat_trans(cls, quat, trans, renormalize: bool = False) -> "Pose":
        q = np.asarray(quat, dtype=np.float64).reshape(4)
        if renormalize:
            norm = np.linalg.norm(q)
            if norm == 0.0:
                raise ValueError("zero quaternion cannot be normalized")
            # Skip the division when already unit so exact values survive.
            if abs(norm - 1.0) > 1e-12:
                q = q / norm
        return cls(q, np.asarray(trans, dtype=np.float64).reshape(3))

    @property
    def matrix(self) -> np.ndarray:
        return pose_matrix(self)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points from camera to world coordinates."""
        R = quat_to_matrix(self.rotation)
        return points @ R.T + self.translation


@dataclass(frozen=True)
class SixDof:
    """Tangent-space transform: axis-angle rotation plus translation."""

    axis_angle: np.ndarray  # (3,) radians * unit axis
    translation: np.ndarray  # (3,) meters

    def __post_init__(self):
        object.__setattr__(self, "axis_angle", _freeze(np.asarray(self.axis_angle).reshape(3)))
        object.__setattr__(self, "translation", _freeze(np.asarray(self.translation).reshape(3)))

    @classmethod
    def zero(cls) -> "SixDof":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.axis_angle, self.translation])


# -- quaternion algebra -------------------------------------------------------


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns (qx, qy, qz, qw) with qw >= 0."""
    m = np.asarray(R, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        qw = 0.25 * s
        qx = (m[2, 1] - m[1, 2]) / s
        qy = (m[0, 2] - m[2, 0]) / s
        qz = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        qw = (m[2, 1] - m[1, 2]) / s
        qx = 0.25 * s
        qy = (m[0, 1] + m[1, 0]) / s
        qz = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        qw = (m[0, 2] - m[2, 0]) / s
        qx = (m[0, 1] + m[1, 0]) / s
        qy = 0.25 * s
        qz = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        qw = (m[1, 0] - m[0, 1]) / s
        qx = (m[0, 2] + m[2, 0]) / s
        qy = (m[1, 2] + m[2, 1]) / s
        qz = 0.25 * s
    q = np.array([qx, qy, qz, qw])
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_from_axis_angle(axis_angle: np.ndarray) -> np.ndarray:
    v = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        # sin(x/2)/x ~= 1/2 - x^2/48 keeps the map smooth through zero
        half_sinc = 0.5 - angle * angle / 48.0
        xyz = v * half_sinc
        w = np.cos(angle / 2.0)
    else:
        xyz = v / angle * np.sin(angle / 2.0)
        w = np.cos(angle / 2.0)
    q = np.concatenate([xyz, [w]])
    return q / np.linalg.norm(q)


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q[3] < 0:
        q = -q
    vec_norm = np.linalg.norm(q[:3])
    angle = 2.0 * np.arctan2(vec_norm, q[3])
    if vec_norm < 1e-12:
        return q[:3] * 2.0  # first-order inverse of quat_from_axis_angle
    return q[:3] / vec_norm * angle


# -- pose operations ----------------------------------------------------------


def pose_from_6dof(v: SixDof) -> Pose:
    """Exponential-map conversion: Rodrigues rotation, direct translation."""
    return Pose(quat_from_axis_angle(v.axis_angle), v.translation)


def pose_to_6dof(p: Pose) -> SixDof:
    """Log map; rotation angle is returned in [0, pi]."""
    return SixDof(quat_to_axis_angle(p.rotation), p.translation)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Composition a∘b: apply b first, then a."""
    q = quat_multiply(a.rotation, b.rotation)
    q = q / np.linalg.norm(q)
    Ra = quat_to_matrix(a.rotation)
    t = Ra @ b.translation + a.translation
    return Pose(q, t)


def pose_inverse(p: Pose) -> Pose:
    q = quat_conjugate(p.rotation)
    R_inv = quat_to_matrix(q)
    return Pose(q, -(R_inv @ p.translation))


def relative_pose(pose_a: Pose, pose_b: Pose) -> Pose:
    """Transform mapping camera-a coordinates into camera-b coordinates."""
    return pose_compose(pose_inverse(pose_b), pose_a)


def pose_slerp(a: Pose, b: Pose, alpha: float) -> Pose:
    """Interpolate between two poses: quaternion slerp + linear translation."""
    qa, qb = a.rotation, b.rotation
    dot = float(np.dot(qa, qb))
    if dot < 0:
        qb, dot = -qb, -dot
    if dot > 1.0 - 1e-10:
        q = qa + alpha * (qb - qa)
    else:
        omega = np.arccos(np.clip(dot, -1.0, 1.0))
        q = (np.sin((1 - alpha) * omega) * qa + np.sin(alpha * omega) * qb) / np.sin(omega)
    q = q / np.linalg.norm(q)
    t = (1 - alpha) * a.translation + alpha * b.translation
    return Pose(q, t)


def pose_matrix(p: Pose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(p.rotation)
    m[:3, 3] = p.translation
    return m


def pose_from_matrix(m: np.ndarray) -> Pose:
    m = np.asarray(m, dtype=np.float64)
    return Pose(quat_from_matrix(m[:3, :3]), m[:3, 3])
