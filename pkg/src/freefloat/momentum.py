"""Linear/angular momentum of the whole system and the base-motion coupling.

Angular momentum is taken about the inertial origin. With the system at
zero momentum the base twist follows from the joint rates alone,
``twist = -inv(H0) @ Hm @ theta_dot``, which is origin independent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import IllConditioned, SingularH0
from .kinematics import (KinematicsCache, SystemState, _ensure_cache,
                         end_effector_jacobian)
from .model import RobotModel

# cond(H0) above this is treated as singular
H0_MAX_CONDITION = 1e13
# cond(M) above this rejects coupling factors
M_MAX_CONDITION = 1e8
DAMPING = 1e-6


@dataclass(frozen=True, eq=False)
class MomentumMatrices:
    """``[P; L] = H0 @ (V0, Omega0) + Hm @ theta_dot`` at one configuration.

    ``H0`` has the block form ``[[w E, -w [r0g x]], [w [rg x], Iw]]`` where
    ``w`` is the total mass, ``rg`` the system centroid and ``r0g`` its offset
    from the base centroid.
    """

    H0: np.ndarray
    Hm: np.ndarray
    stamp: str

    def momentum(self, twist, rates) -> np.ndarray:
        return self.H0 @ np.asarray(twist, float) + self.Hm @ np.asarray(rates, float)


def state_stamp(state: SystemState) -> str:
    return hashlib.sha1(state.to_vector().tobytes()).hexdigest()[:16]


def momentum_matrices(model: RobotModel, state: SystemState,
                      cache: KinematicsCache | None = None) -> MomentumMatrices:
    cache = _ensure_cache(model, state, cache)
    a = model.arrays
    jac = _kernels.body_jacobians(a.parent, cache.base_position, cache.joint_positions,
                                  cache.joint_axes, cache.link_centroids)
    inertias = _kernels.world_inertias(a.base_inertia, a.link_inertia,
                                       cache.base_rotation, cache.link_rotations)
    masses = np.concatenate(([a.base_mass], a.link_mass))
    points = np.vstack((cache.base_position, cache.link_centroids))
    lin = masses[:, None, None] * jac[:, 0:3, :]
    ang = np.einsum("bij,bjk->bik", inertias, jac[:, 3:6, :]) + np.cross(
        points[:, :, None], lin, axisa=1, axisb=1, axisc=1)
    mom = np.concatenate((lin.sum(axis=0), ang.sum(axis=0)), axis=0)
    return MomentumMatrices(H0=mom[:, :6], Hm=mom[:, 6:], stamp=state_stamp(state))


def total_momentum(model: RobotModel, state: SystemState,
                   cache: KinematicsCache | None = None) -> np.ndarray:
    """``(P, L)`` of the whole system, L about the inertial origin."""
    mm = momentum_matrices(model, state, cache)
    return mm.momentum(state.base_twist, state.joint_rates)


def base_motion_map(mm: MomentumMatrices) -> np.ndarray:
    """The 6 x n matrix ``-inv(H0) @ Hm``."""
    cond = np.linalg.cond(mm.H0)
    if not np.isfinite(cond) or cond > H0_MAX_CONDITION:
        raise SingularH0(f"H0 is singular to working precision (cond = {cond:.3g})")
    return -np.linalg.solve(mm.H0, mm.Hm)


def base_twist_from_rates(mm: MomentumMatrices, rates) -> np.ndarray:
    """Base twist ``(V0, Omega0)`` produced by joint rates at zero momentum."""
    cond = np.linalg.cond(mm.H0)
    if not np.isfinite(cond) or cond > H0_MAX_CONDITION:
        raise SingularH0(f"H0 is singular to working precision (cond = {cond:.3g})")
    return -np.linalg.solve(mm.H0, mm.Hm @ np.asarray(rates, dtype=float))


def transport_matrix(r) -> np.ndarray:
    """Maps base twist to the twist of a point offset ``r`` from the base centroid."""
    k = np.eye(6)
    k[0:3, 3:6] = -_kernels.skew(np.asarray(r, dtype=float))
    return k


def damped_pinv(a, damping: float = DAMPING) -> np.ndarray:
    """Damped least-squares pseudo-inverse with ``lambda = damping * ||a||_2``."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    lam = damping * s[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(s > 0, s / (s * s + lam * lam), 0.0)
    return (vt.T * inv) @ u.T


@dataclass(frozen=True, eq=False)
class CouplingFactors:
    """Motion coupling of one arm with the base.

    ``M`` maps the arm's joint rates to the inertial end-effector twist
    (generalized Jacobian); ``N`` maps an end-effector twist to the base twist.
    """

    M: np.ndarray
    N: np.ndarray
    arm: int
    condition: float
    base_map: np.ndarray
    fixed_base_jacobian: np.ndarray


def coupling_factors(model: RobotModel, state: SystemState, arm: int,
                     cache: KinematicsCache | None = None,
                     mm: MomentumMatrices | None = None,
                     max_condition: float = M_MAX_CONDITION) -> CouplingFactors:
    cache = _ensure_cache(model, state, cache)
    if mm is None:
        mm = momentum_matrices(model, state, cache)
    cols = model.arm_slices[arm]
    g = base_motion_map(mm)[:, cols]
    jac = end_effector_jacobian(model, state, cache, arm)[:, cols]
    k = transport_matrix(cache.ee_positions[arm] - cache.base_position)
    m = jac + k @ g
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditioned(f"coupling factor M of arm {arm} is rank deficient "
                             f"(cond = {cond:.3g})", condition=cond)
    n = g @ damped_pinv(m)
    return CouplingFactors(M=m, N=n, arm=arm, condition=cond, base_map=g,
                           fixed_base_jacobian=jac)


def base_force_from_ee_force(cf: CouplingFactors, wrench) -> np.ndarray:
    """Wrench felt by the base for an end-effector wrench ``(f, n)``.

    Uses the damped pseudo-inverse of ``N.T``; power is balanced against the
    part of the end-effector twist reachable by the arm.
    """
    if not np.isfinite(cf.condition) or cf.condition > M_MAX_CONDITION:
        raise IllConditioned("coupling factors are ill conditioned", condition=cf.condition)
    return damped_pinv(cf.N.T) @ np.asarray(wrench, dtype=float)
