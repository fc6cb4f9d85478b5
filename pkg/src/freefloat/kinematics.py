"""System state, forward kinematics and link / end-effector Jacobians.

Everything is expressed in the inertial frame. Jacobians are dense over the
full joint vector; columns belonging to other arms (or to joints outboard of
the link) are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .model import RobotModel
from .rotations import quat_from_rpy, rpy_from_quat


def _frozen(a, n=None, name="array") -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    if n is not None and arr.shape != (n,):
        raise DimensionMismatch(f"{name}: expected length {n}, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemState:
    """Base pose and twist plus all joint angles and rates at one instant.

    ``base_twist`` is ``(V0, Omega0)``: base-centroid linear velocity and base
    angular velocity, both in inertial coordinates.
    """

    base_position: np.ndarray
    base_attitude: np.ndarray
    base_twist: np.ndarray
    joint_angles: np.ndarray
    joint_rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_position", _frozen(self.base_position, 3, "base_position"))
        object.__setattr__(self, "base_attitude", _frozen(self.base_attitude, 4, "base_attitude"))
        object.__setattr__(self, "base_twist", _frozen(self.base_twist, 6, "base_twist"))
        object.__setattr__(self, "joint_angles", _frozen(self.joint_angles, name="joint_angles"))
        object.__setattr__(self, "joint_rates", _frozen(self.joint_rates, name="joint_rates"))
        if self.joint_angles.shape != self.joint_rates.shape:
            raise DimensionMismatch("joint_angles and joint_rates differ in length")
        if abs(np.linalg.norm(self.base_attitude) - 1.0) > 1e-10:
            raise ValueError(f"base_attitude must be a unit quaternion, "
                             f"|q| = {np.linalg.norm(self.base_attitude)!r}")

    @classmethod
    def at_rest(cls, model: RobotModel, joint_angles=None, rpy=(0.0, 0.0, 0.0),
                position=(0.0, 0.0, 0.0)) -> "SystemState":
        n = model.n_joints
        theta = np.zeros(n) if joint_angles is None else joint_angles
        return cls(position, quat_from_rpy(rpy), np.zeros(6), theta, np.zeros(n))

    @property
    def n_joints(self) -> int:
        return self.joint_angles.shape[0]

    @property
    def rpy(self) -> np.ndarray:
        return rpy_from_quat(self.base_attitude)

    @property
    def velocity(self) -> np.ndarray:
        """Generalized velocity ``(V0, Omega0, theta_dot)``."""
        return np.concatenate((self.base_twist, self.joint_rates))

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.base_position, self.base_attitude, self.base_twist,
                               self.joint_angles, self.joint_rates))

    @classmethod
    def from_vector(cls, x, n_joints: int) -> "SystemState":
        x = np.asarray(x, dtype=float)
        if x.shape != (13 + 2 * n_joints,):
            raise DimensionMismatch(f"state vector: expected length {13 + 2 * n_joints}, "
                                    f"got {x.shape}")
        return cls(x[0:3], x[3:7], x[7:13], x[13:13 + n_joints], x[13 + n_joints:])

    def replace(self, **changes) -> "SystemState":
        fields = dict(base_position=self.base_position, base_attitude=self.base_attitude,
                      base_twist=self.base_twist, joint_angles=self.joint_angles,
                      joint_rates=self.joint_rates)
        fields.update(changes)
        return SystemState(**fields)

    def with_velocity(self, v) -> "SystemState":
        v = np.asarray(v, dtype=float)
        return self.replace(base_twist=v[:6], joint_rates=v[6:])

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return np.array_equal(self.to_vector(), other.to_vector())

    __hash__ = None


def check_state(model: RobotModel, state: SystemState) -> None:
    if state.n_joints != model.n_joints:
        raise DimensionMismatch(f"state has {state.n_joints} joints, model has "
                                f"{model.n_joints}")


@dataclass(frozen=True, eq=False)
class KinematicsCache:
    """World-frame geometry of every body at one state.

    Link ``k`` is joint ``k``'s child; ``joint_positions[k]`` is that joint's
    point and ``joint_axes[k]`` its unit axis.
    """

    base_position: np.ndarray
    base_rotation: np.ndarray
    link_rotations: np.ndarray
    joint_positions: np.ndarray
    joint_axes: np.ndarray
    link_centroids: np.ndarray
    ee_positions: np.ndarray
    ee_rotations: np.ndarray
    com: np.ndarray
    state_key: bytes

    def matches(self, state: SystemState) -> bool:
        return self.state_key == _state_key(state)


def _state_key(state: SystemState) -> bytes:
    return state.to_vector().tobytes()


def forward_kinematics(model: RobotModel, state: SystemState) -> KinematicsCache:
    check_state(model, state)
    a = model.arrays
    r0, rot, joint, ax, cent = _kernels.forward_kinematics(
        a.parent, a.axis, a.offset, a.mount_rot, a.com,
        state.base_position, state.base_attitude, state.joint_angles)
    last = list(model.last_links)
    ee_rot = rot[last]
    ee_pos = joint[last] + np.einsum("aij,aj->ai", ee_rot, model.tips)
    com = (a.base_mass * state.base_position + a.link_mass @ cent) / model.total_mass
    return KinematicsCache(
        base_position=state.base_position.copy(), base_rotation=r0, link_rotations=rot,
        joint_positions=joint, joint_axes=ax, link_centroids=cent,
        ee_positions=ee_pos, ee_rotations=ee_rot, com=com, state_key=_state_key(state))


def _ensure_cache(model, state, cache):
    if cache is None:
        return forward_kinematics(model, state)
    check_state(model, state)
    if not cache.matches(state):
        raise ValueError("kinematics cache was computed for a different state")
    return cache


def _ancestors(model: RobotModel, k: int):
    parent = model.arrays.parent
    while k >= 0:
        yield k
        k = parent[k]


def link_jacobians(model: RobotModel, state: SystemState, cache: KinematicsCache | None = None):
    """Base-relative Jacobians of every link centroid.

    Returns ``(JT, JR)``, each of shape ``(n_links, 3, n_joints)``, such that
    the link's centroid velocity and angular velocity relative to a
    non-moving base are ``JT[k] @ theta_dot`` and ``JR[k] @ theta_dot``.
    """
    cache = _ensure_cache(model, state, cache)
    n = model.n_joints
    jt = np.zeros((n, 3, n))
    jr = np.zeros((n, 3, n))
    for k in range(n):
        for j in _ancestors(model, k):
            jr[k, :, j] = cache.joint_axes[j]
            jt[k, :, j] = np.cross(cache.joint_axes[j],
                                   cache.link_centroids[k] - cache.joint_positions[j])
    return jt, jr


def end_effector_jacobian(model: RobotModel, state: SystemState,
                          cache: KinematicsCache | None = None, arm: int = 0) -> np.ndarray:
    """6 x n map from joint rates to the base-relative end-effector twist
    (linear rows first) of ``arm``, in inertial coordinates."""
    cache = _ensure_cache(model, state, cache)
    if not 0 <= arm < model.n_arms:
        raise IndexError(f"arm {arm} out of range for {model.n_arms} arms")
    n = model.n_joints
    jac = np.zeros((6, n))
    tip = cache.ee_positions[arm]
    for j in _ancestors(model, model.last_links[arm]):
        a = cache.joint_axes[j]
        jac[0:3, j] = np.cross(a, tip - cache.joint_positions[j])
        jac[3:6, j] = a
    return jac


def body_jacobians(model: RobotModel, state: SystemState,
                   cache: KinematicsCache | None = None) -> np.ndarray:
    """Per-body maps from generalized velocity to inertial centroid twist.

    Shape ``(1 + n_links, 6, 6 + n_joints)``; body 0 is the base.
    """
    cache = _ensure_cache(model, state, cache)
    return _kernels.body_jacobians(model.arrays.parent, cache.base_position,
                                   cache.joint_positions, cache.joint_axes,
                                   cache.link_centroids)
