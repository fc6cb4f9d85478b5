"""Free-floating equations of motion ``H(phi) phi_ddot + C(phi, phi_dot) = [0; tau]``.

``phi_dot`` is the generalized velocity ``(V0, Omega0, theta_dot)``. The base
rows carry no generalized force: nothing acts on the system from outside.
The bias vector comes from a recursive pass over the chains with zero
generalized acceleration, projected through the body Jacobians.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NonFiniteState, SolveFailure
from .kinematics import KinematicsCache, SystemState, _ensure_cache, check_state
from .model import RobotModel

DEFAULT_DT = 1e-3


def _terms(model: RobotModel, state: SystemState, cache: KinematicsCache | None):
    cache = _ensure_cache(model, state, cache)
    a = model.arrays
    jac = _kernels.body_jacobians(a.parent, cache.base_position, cache.joint_positions,
                                  cache.joint_axes, cache.link_centroids)
    masses = np.concatenate(([a.base_mass], a.link_mass))
    inertias = _kernels.world_inertias(a.base_inertia, a.link_inertia,
                                       cache.base_rotation, cache.link_rotations)
    return cache, jac, masses, inertias


def generalized_inertia(model: RobotModel, state: SystemState,
                        cache: KinematicsCache | None = None) -> np.ndarray:
    """The symmetric positive-definite (6 + n) x (6 + n) inertia matrix."""
    _, jac, masses, inertias = _terms(model, state, cache)
    return _kernels.mass_matrix(jac, masses, inertias)


def bias_forces(model: RobotModel, state: SystemState,
                cache: KinematicsCache | None = None) -> np.ndarray:
    """Centrifugal and Coriolis generalized forces at the state's velocity."""
    cache, jac, masses, inertias = _terms(model, state, cache)
    lin, ang, omega = _kernels.bias_accelerations(
        model.arrays.parent, cache.base_position, cache.joint_positions,
        cache.joint_axes, cache.link_centroids, state.base_twist, state.joint_rates)
    return _kernels.bias_forces(jac, masses, inertias, lin, ang, omega)


def kinetic_energy(model: RobotModel, state: SystemState,
                   cache: KinematicsCache | None = None) -> float:
    v = state.velocity
    return 0.5 * float(v @ generalized_inertia(model, state, cache) @ v)


def _check_tau(model, tau):
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau.shape != (model.n_joints,):
        raise DimensionMismatch(f"tau: expected {model.n_joints} joint torques, "
                                f"got {tau.shape[0]}")
    return tau


def forward_dynamics(model: RobotModel, state: SystemState, tau) -> np.ndarray:
    """Generalized acceleration ``(dV0, dOmega0, theta_ddot)`` under joint torques."""
    check_state(model, state)
    tau = _check_tau(model, tau)
    a = model.arrays
    h, c, _, _, _ = _kernels.dynamics_terms(
        a.parent, a.axis, a.offset, a.mount_rot, a.com, a.link_mass, a.link_inertia,
        a.base_mass, a.base_inertia, state.base_position, state.base_attitude,
        state.joint_angles, state.base_twist, state.joint_rates)
    rhs = -c
    rhs[6:] += tau
    try:
        return _kernels.cholesky_solve(h, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"generalized inertia is not positive definite: {exc}") from None


def inverse_dynamics(model: RobotModel, state: SystemState, accel) -> np.ndarray:
    """Generalized forces ``H @ accel + C`` needed for a given acceleration."""
    cache = _ensure_cache(model, state, None)
    return generalized_inertia(model, state, cache) @ np.asarray(accel, float) \
        + bias_forces(model, state, cache)


def state_derivative(model: RobotModel, x, tau) -> np.ndarray:
    """Time derivative of a packed state vector (see ``SystemState.to_vector``)."""
    a = model.arrays
    return _kernels.state_derivative(a.parent, a.axis, a.offset, a.mount_rot, a.com,
                                     a.link_mass, a.link_inertia, a.base_mass,
                                     a.base_inertia, np.asarray(x, float),
                                     np.asarray(tau, float))


def rk4_vector(model: RobotModel, x: np.ndarray, tau: np.ndarray, dt: float,
               t: float | None = None) -> np.ndarray:
    """One classical RK4 step on a packed state; quaternion renormalized."""
    a = model.arrays
    try:
        out = _kernels.rk4_step(a.parent, a.axis, a.offset, a.mount_rot, a.com,
                                a.link_mass, a.link_inertia, a.base_mass, a.base_inertia,
                                x, tau, dt)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"generalized inertia is not positive definite: {exc}",
                           time=t) from None
    except ZeroDivisionError:
        # a runaway state collapsed the attitude quaternion
        raise NonFiniteState("state diverged (degenerate quaternion)", time=t) from None
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("state became non-finite", time=t)
    return out


def step(model: RobotModel, state: SystemState, tau, dt: float = DEFAULT_DT,
         t: float | None = None) -> SystemState:
    """Advance ``state`` by ``dt`` seconds with constant joint torques ``tau``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    check_state(model, state)
    tau = _check_tau(model, tau)
    out = rk4_vector(model, state.to_vector(), tau, float(dt), t)
    return SystemState.from_vector(out, model.n_joints)


def integrate(model: RobotModel, state: SystemState, tau, dt: float, n_steps: int):
    """Constant-torque trajectory; returns packed states of shape (n_steps + 1, 13 + 2n)."""
    check_state(model, state)
    tau = _check_tau(model, tau)
    out = np.empty((n_steps + 1, 13 + 2 * model.n_joints))
    out[0] = state.to_vector()
    for k in range(n_steps):
        out[k + 1] = rk4_vector(model, out[k], tau, dt, t=k * dt)
    return out
