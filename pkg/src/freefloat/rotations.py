"""Quaternion and roll-pitch-yaw helpers.

Quaternions are scalar-first ``(w, x, y, z)``. RPY is the aerospace Z-Y-X
sequence: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``, returned as
``(roll, pitch, yaw)``.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from ._kernels import quat_mul as _quat_mul_jit


def quat_from_rpy(rpy) -> np.ndarray:
    r = np.asarray(rpy, dtype=float)
    return Rotation.from_euler("ZYX", r[..., ::-1]).as_quat(scalar_first=True)


def rpy_from_quat(q) -> np.ndarray:
    """RPY of one quaternion or a stack of shape (..., 4)."""
    zyx = Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True).as_euler("ZYX")
    return zyx[..., ::-1]


def quat_to_matrix(q) -> np.ndarray:
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True).as_matrix()


def quat_mul(p, q) -> np.ndarray:
    return _quat_mul_jit(np.asarray(p, dtype=float), np.asarray(q, dtype=float))


def quat_exp(rotvec) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (angle * axis)."""
    v = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(v)
    half = 0.5 * angle
    # sin(x)/x series below one ulp of the small-angle regime
    s = 0.5 - angle * angle / 48.0 if angle < 1e-6 else np.sin(half) / angle
    return np.concatenate(([np.cos(half)], s * v))


def rotation_log(r) -> np.ndarray:
    """Rotation vector of a rotation matrix."""
    return Rotation.from_matrix(np.asarray(r, dtype=float)).as_rotvec()


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi
