"""Mission-arm planning, base-attitude prediction and balance-arm synthesis.

Phase I plans a rest-to-rest quintic for the mission arm and integrates the
base attitude it would cause on a free-floating base. Phase II solves, at
every sample, for the balance-arm rates that cancel the base angular velocity
of the combined system, and integrates them into a joint trajectory. Both arms
are then driven by independent joint PD loops.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BadDuration, BalanceSingularity, SingularH0
from .kinematics import SystemState, check_state
from .model import RobotModel
from .rotations import quat_exp, quat_mul, quat_to_matrix, rpy_from_quat

BALANCE_MAX_CONDITION = 1e6
BALANCE_DAMPING = 1e-6
# relative residual above which a damped balance solve counts as failing to
# null the reaction
BALANCE_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class JointTrajectory:
    """Sampled joint positions, rates and accelerations of one arm.

    Between samples the trajectory is a quintic Hermite interpolant of the
    stored position/rate/acceleration, which reproduces quintic segments
    exactly.
    """

    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        for name in ("t", "position", "velocity", "acceleration"):
            arr = np.array(getattr(self, name), dtype=float)
            if name != "t" and arr.ndim == 1:
                arr = arr[:, None]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.t.shape[0]
        if k < 1 or np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name in ("position", "velocity", "acceleration"):
            if getattr(self, name).shape[0] != k:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} samples, "
                                 f"expected {k}")

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    @property
    def n_joints(self) -> int:
        return self.position.shape[1]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def evaluate(self, t: float):
        """Position and rate at time ``t`` (clamped to the sampled span)."""
        ts = self.t
        if t <= ts[0]:
            return self.position[0].copy(), self.velocity[0].copy()
        if t >= ts[-1]:
            return self.position[-1].copy(), self.velocity[-1].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[i + 1] - ts[i]
        s = (t - ts[i]) / h
        p0, v0, a0 = self.position[i], self.velocity[i] * h, self.acceleration[i] * h * h
        p1, v1, a1 = self.position[i + 1], self.velocity[i + 1] * h, self.acceleration[i + 1] * h * h
        s2, s3, s4, s5 = s * s, s ** 3, s ** 4, s ** 5
        h0 = 1 - 10 * s3 + 15 * s4 - 6 * s5
        h1 = s - 6 * s3 + 8 * s4 - 3 * s5
        h2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
        h3 = 0.5 * (s3 - 2 * s4 + s5)
        h4 = -4 * s3 + 7 * s4 - 3 * s5
        h5 = 10 * s3 - 15 * s4 + 6 * s5
        pos = h0 * p0 + h1 * v0 + h2 * a0 + h3 * a1 + h4 * v1 + h5 * p1
        d0 = -30 * s2 + 60 * s3 - 30 * s4
        d1 = 1 - 18 * s2 + 32 * s3 - 15 * s4
        d2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4)
        d3 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4)
        d4 = -12 * s2 + 28 * s3 - 15 * s4
        vel = (d0 * p0 + d1 * v0 + d2 * a0 + d3 * a1 + d4 * v1 - d0 * p1) / h
        return pos, vel

    def hold_until(self, t_end: float, dt: float) -> "JointTrajectory":
        """Extend by holding the final sample (zero rate) up to ``t_end``."""
        n_extra = int(round((t_end - self.t[-1]) / dt))
        if n_extra <= 0:
            return self
        t_new = self.t[-1] + dt * np.arange(1, n_extra + 1)
        zeros = np.zeros((n_extra, self.n_joints))
        held = np.repeat(self.position[-1:], n_extra, axis=0)
        return JointTrajectory(np.concatenate((self.t, t_new)),
                               np.vstack((self.position, held)),
                               np.vstack((self.velocity, zeros)),
                               np.vstack((self.acceleration, zeros)))


def _n_intervals(duration: float, dt: float) -> int:
    if not (np.isfinite(duration) and duration > 0):
        raise BadDuration(f"duration must be > 0, got {duration}")
    if not (np.isfinite(dt) and dt > 0):
        raise BadDuration(f"dt must be > 0, got {dt}")
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(duration, 1.0):
        raise BadDuration(f"dt = {dt} does not divide duration = {duration}")
    return n


def plan_ptp(start, goal, duration: float, dt: float, t0: float = 0.0) -> JointTrajectory:
    """Rest-to-rest quintic from ``start`` to ``goal`` sampled every ``dt``."""
    n = _n_intervals(duration, dt)
    start = np.asarray(start, dtype=float).reshape(-1)
    delta = np.asarray(goal, dtype=float).reshape(-1) - start
    tau = np.arange(n + 1) / n
    s = tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)
    ds = 30 * tau ** 2 * (1 - 2 * tau + tau ** 2)
    dds = 60 * tau * (1 - 3 * tau + 2 * tau ** 2)
    t = t0 + duration * tau
    return JointTrajectory(t, start + np.outer(s, delta), np.outer(ds / duration, delta),
                           np.outer(dds / duration ** 2, delta))


def plan_via(points, durations, dt: float) -> JointTrajectory:
    """Chain of rest-to-rest quintics through ``points`` (first is the start)."""
    points = [np.asarray(p, dtype=float) for p in points]
    if len(durations) != len(points) - 1:
        raise BadDuration(f"{len(points)} points need {len(points) - 1} durations")
    parts, t0 = [], 0.0
    for a, b, d in zip(points[:-1], points[1:], durations):
        seg = plan_ptp(a, b, d, dt, t0)
        parts.append(seg if not parts else _drop_first(seg))
        t0 = seg.t[-1]
    return JointTrajectory(np.concatenate([p.t for p in parts]),
                           np.vstack([p.position for p in parts]),
                           np.vstack([p.velocity for p in parts]),
                           np.vstack([p.acceleration for p in parts]))


def _drop_first(seg):
    return JointTrajectory(seg.t[1:], seg.position[1:], seg.velocity[1:], seg.acceleration[1:])


@dataclass(frozen=True)
class PDGains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        kp = np.array(self.kp, dtype=float).reshape(-1)
        kd = np.array(self.kd, dtype=float).reshape(-1)
        if kp.shape != kd.shape:
            raise ValueError("kp and kd must have the same length")
        if np.any(~np.isfinite(kp)) or np.any(kp <= 0):
            raise ValueError(f"kp must be > 0, got {kp.tolist()}")
        if np.any(~np.isfinite(kd)) or np.any(kd <= 0):
            raise ValueError(f"kd must be > 0, got {kd.tolist()}")
        kp.setflags(write=False)
        kd.setflags(write=False)
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)

    @classmethod
    def uniform(cls, n: int, kp: float = 400.0, kd: float = 40.0) -> "PDGains":
        return cls(np.full(n, kp), np.full(n, kd))


def pd_torques(gains: PDGains, theta_d, theta_dot_d, theta, theta_dot) -> np.ndarray:
    return gains.kp * (np.asarray(theta_d) - theta) + gains.kd * (np.asarray(theta_dot_d) - theta_dot)


_IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])
_ZERO3 = np.zeros(3)
_ZERO6 = np.zeros(6)


def base_motion_map_body(model: RobotModel, theta) -> np.ndarray:
    """``-inv(H0) @ Hm`` in base-frame coordinates for joint angles ``theta``.

    The map does not depend on base pose once it is expressed in the base
    frame, so it is evaluated with the base at the origin and unrotated.
    """
    a = model.arrays
    theta = np.asarray(theta, dtype=float)
    h, _, _, _, _ = _kernels.dynamics_terms(
        a.parent, a.axis, a.offset, a.mount_rot, a.com, a.link_mass, a.link_inertia,
        a.base_mass, a.base_inertia, _ZERO3, _IDENTITY_Q, theta, _ZERO6,
        np.zeros_like(theta))
    try:
        return -np.linalg.solve(h[:6, :6], h[:6, 6:])
    except np.linalg.LinAlgError:
        raise SingularH0("locked-system inertia is singular") from None


@dataclass(frozen=True, eq=False)
class AttitudePrediction:
    """Base rotation caused by the mission arm alone.

    ``omega`` and ``omega_dot`` are in inertial coordinates; ``omega_body`` in
    base coordinates, which is what the attitude quadrature consumes.
    """

    t: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    omega_body: np.ndarray
    quaternion: np.ndarray

    @property
    def rpy(self) -> np.ndarray:
        return rpy_from_quat(self.quaternion)


def integrate_attitude(q0, t, omega_body) -> np.ndarray:
    """Attitude history from base-frame angular velocity samples.

    Each interval applies the exponential of the trapezoidal rotation vector
    on the right (base-frame rates).
    """
    q = np.empty((len(t), 4))
    q[0] = np.asarray(q0, dtype=float)
    for k in range(len(t) - 1):
        rv = 0.5 * (t[k + 1] - t[k]) * (omega_body[k] + omega_body[k + 1])
        qk = quat_mul(q[k], quat_exp(rv))
        q[k + 1] = qk / np.linalg.norm(qk)
    return q


def _full_angles(base_angles, cols, arm_angles):
    theta = np.array(base_angles, dtype=float)
    theta[cols] = arm_angles
    return theta


def predict_base_motion(model: RobotModel, state: SystemState,
                        mission_traj: JointTrajectory, arm: int | None = None
                        ) -> AttitudePrediction:
    """Integrate the base attitude the mission arm would cause on its own.

    Every other arm stays at its angle in ``state``; the system starts at
    rest so momentum is zero throughout.
    """
    check_state(model, state)
    arm = model.mission_arm if arm is None else arm
    cols = model.arm_slices[arm]
    t = mission_traj.t
    k = len(t)
    jac = np.empty((k, 3, mission_traj.n_joints))
    for i in range(k):
        g = base_motion_map_body(model, _full_angles(state.joint_angles, cols,
                                                      mission_traj.position[i]))
        jac[i] = g[3:6, cols]
    omega_b = np.einsum("kij,kj->ki", jac, mission_traj.velocity)
    jac_dot = np.gradient(jac, t, axis=0) if k > 1 else np.zeros_like(jac)
    omega_b_dot = (np.einsum("kij,kj->ki", jac_dot, mission_traj.velocity)
                   + np.einsum("kij,kj->ki", jac, mission_traj.acceleration))
    quat = integrate_attitude(state.base_attitude, t, omega_b)
    rot = quat_to_matrix(quat).reshape(k, 3, 3)
    return AttitudePrediction(
        t=t.copy(), omega=np.einsum("kij,kj->ki", rot, omega_b),
        omega_dot=np.einsum("kij,kj->ki", rot, omega_b_dot),
        omega_body=omega_b, quaternion=quat)


@dataclass(frozen=True, eq=False)
class BalanceTrajectory(JointTrajectory):
    """Balance-arm trajectory plus per-sample solve diagnostics.

    ``singular`` marks samples solved by damped least squares, ``residual`` is
    ``|Jm θ̇_M + Jb θ̇_B| / |Jm θ̇_M|`` and ``unbalanced`` marks damped samples
    whose residual exceeds ``BALANCE_RESIDUAL_TOL``.
    """

    condition: np.ndarray = field(default=None)
    singular: np.ndarray = field(default=None)
    residual: np.ndarray = field(default=None)

    @property
    def unbalanced(self) -> np.ndarray:
        return self.singular & (self.residual > BALANCE_RESIDUAL_TOL)

    @property
    def flags(self) -> np.ndarray:
        """Bit 0: damped solve; bit 1: reaction not nulled."""
        return self.singular.astype(np.int64) | (self.unbalanced.astype(np.int64) << 1)


def _solve_balance(jb, rhs, max_condition, damping):
    cond = np.linalg.cond(jb)
    if np.isfinite(cond) and cond <= max_condition:
        return np.linalg.solve(jb, rhs), cond, False
    u, s, vt = np.linalg.svd(jb)
    lam = damping * s[0]
    return vt.T @ ((s / (s * s + lam * lam)) * (u.T @ rhs)), cond, True


def synthesize_balance(model: RobotModel, state: SystemState, mission_traj: JointTrajectory,
                       max_condition: float = BALANCE_MAX_CONDITION,
                       damping: float = BALANCE_DAMPING) -> BalanceTrajectory:
    """Balance-arm trajectory that keeps the base angular velocity at zero.

    At each instant the balance rates solve ``Jb @ theta_dot_B = -Jm @ theta_dot_M``
    where ``Jm``, ``Jb`` are the angular rows of ``-inv(H0) @ Hm`` restricted
    to the mission and balance columns. The rates are integrated with RK4
    (mission motion interpolated between samples); accelerations follow from
    differentiating the same identity with finite-difference Jacobian rates.
    Near-singular ``Jb`` falls back to damped least squares and flags the
    sample. When the mission reaction lies in the range of a rank-deficient
    ``Jb`` (e.g. both arms moving in one plane through the base centroid) the
    damped solution still nulls it; a ``BalanceSingularity`` warning is
    emitted only for samples where it does not.
    """
    check_state(model, state)
    mission, balance = model.mission_arm, model.balance_arm
    if balance is None:
        raise ValueError("model has no balance arm")
    if model.arms[balance].dof < 3:
        raise ValueError("balance arm needs at least 3 joints to null base rotation")
    mc, bc = model.arm_slices[mission], model.arm_slices[balance]
    base_theta = np.array(state.joint_angles)

    def jacobians(theta_m, theta_b):
        theta = base_theta.copy()
        theta[mc] = theta_m
        theta[bc] = theta_b
        g = base_motion_map_body(model, theta)
        return g[3:6, mc], g[3:6, bc]

    def rate(theta_m, rate_m, theta_b):
        jm, jb = jacobians(theta_m, theta_b)
        x, cond, damped = _solve_balance(jb, -jm @ rate_m, max_condition, damping)
        return x, jm, jb, cond, damped

    t = mission_traj.t
    k = len(t)
    nb = model.arms[balance].dof
    pos = np.empty((k, nb))
    vel = np.empty((k, nb))
    cond = np.empty(k)
    singular = np.zeros(k, dtype=bool)
    resid = np.empty(k)
    jm_all = np.empty((k, 3, mission_traj.n_joints))
    jb_all = np.empty((k, 3, nb))
    pos[0] = base_theta[bc]
    for i in range(k):
        tm, rm = mission_traj.position[i], mission_traj.velocity[i]
        x, jm, jb, c, damped = rate(tm, rm, pos[i])
        vel[i], jm_all[i], jb_all[i], cond[i], singular[i] = x, jm, jb, c, damped
        scale = max(np.linalg.norm(jm @ rm), np.finfo(float).tiny)
        resid[i] = np.linalg.norm(jm @ rm + jb @ x) / scale
        if i == k - 1:
            break
        h = t[i + 1] - t[i]
        tmid = 0.5 * (t[i] + t[i + 1])
        pm_mid, rm_mid = mission_traj.evaluate(tmid)
        k1 = x
        k2 = rate(pm_mid, rm_mid, pos[i] + 0.5 * h * k1)[0]
        k3 = rate(pm_mid, rm_mid, pos[i] + 0.5 * h * k2)[0]
        k4 = rate(mission_traj.position[i + 1], mission_traj.velocity[i + 1], pos[i] + h * k3)[0]
        pos[i + 1] = pos[i] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    acc = np.empty((k, nb))
    if k > 1:
        jm_dot = np.gradient(jm_all, t, axis=0)
        jb_dot = np.gradient(jb_all, t, axis=0)
        for i in range(k):
            rhs = -(jb_dot[i] @ vel[i] + jm_dot[i] @ mission_traj.velocity[i]
                    + jm_all[i] @ mission_traj.acceleration[i])
            acc[i] = _solve_balance(jb_all[i], rhs, max_condition, damping)[0]
    else:
        acc[:] = 0.0

    plan = BalanceTrajectory(t, pos, vel, acc, condition=cond, singular=singular,
                             residual=resid)
    bad = plan.unbalanced
    if bad.any():
        i = int(np.argmax(bad))
        warnings.warn(BalanceSingularity(
            f"balance arm cannot null the base reaction at {bad.sum()} samples, first at "
            f"t = {t[i]:.6g} s (cond = {cond[i]:.3g}, residual = {resid[i]:.3g})"),
            stacklevel=2)
    return plan
