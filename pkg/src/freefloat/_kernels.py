"""Compiled inner loops.

All kernels take the flattened model arrays produced by
``RobotModel.arrays`` (see ``freefloat.model.ModelArrays``) so that the
per-step cost of the equations of motion stays in the tens of microseconds.

Conventions: quaternions are scalar-first ``(w, x, y, z)`` and map base-frame
vectors into the inertial frame. Body 0 is the base (at its centroid),
body ``k + 1`` is link ``k``. Generalized velocity is
``(V0, Omega0, theta_dot)`` with ``V0`` the base-centroid velocity and
``Omega0`` the base angular velocity, both in inertial coordinates.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def skew(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit(cache=True)
def quat_to_matrix(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    w = q[0] / n
    x = q[1] / n
    y = q[2] / n
    z = q[3] / n
    out = np.empty((3, 3))
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


@njit(cache=True)
def quat_mul(p, q):
    out = np.empty(4)
    out[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3]
    out[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2]
    out[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1]
    out[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]
    return out


@njit(cache=True)
def axis_angle_matrix(axis, angle):
    # Rodrigues; axis must be unit length
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@njit(cache=True)
def forward_kinematics(parent, axis, offset, mount_rot, com, base_pos, quat, theta):
    """World rotations, joint points, joint axes and centroids of every link."""
    nl = parent.shape[0]
    r0 = quat_to_matrix(quat)
    rot = np.empty((nl, 3, 3))
    joint = np.empty((nl, 3))
    ax = np.empty((nl, 3))
    cent = np.empty((nl, 3))
    for k in range(nl):
        p = parent[k]
        if p < 0:
            rp = r0
            origin = base_pos
        else:
            rp = rot[p]
            origin = joint[p]
        joint[k] = origin + rp @ offset[k]
        ax[k] = rp @ axis[k]
        rot[k] = rp @ axis_angle_matrix(axis[k], theta[k]) @ mount_rot[k]
        cent[k] = joint[k] + rot[k] @ com[k]
    return r0, rot, joint, ax, cent


@njit(cache=True)
def body_jacobians(parent, base_pos, joint, ax, cent):
    """Stack of 6 x (6 + n) maps from generalized velocity to body twists.

    Rows 0:3 give centroid linear velocity, rows 3:6 angular velocity, both
    in inertial coordinates.
    """
    nl = parent.shape[0]
    ndof = 6 + nl
    jac = np.zeros((nl + 1, 6, ndof))
    for i in range(6):
        jac[0, i, i] = 1.0
    for k in range(nl):
        b = k + 1
        rel = cent[k] - base_pos
        for i in range(3):
            jac[b, i, i] = 1.0
            jac[b, 3 + i, 3 + i] = 1.0
        jac[b, 0:3, 3:6] = -skew(rel)
        j = k
        while j >= 0:
            col = cross(ax[j], cent[k] - joint[j])
            for i in range(3):
                jac[b, i, 6 + j] = col[i]
                jac[b, 3 + i, 6 + j] = ax[j, i]
            j = parent[j]
    return jac


@njit(cache=True)
def world_inertias(base_inertia, link_inertia, r0, rot):
    nl = rot.shape[0]
    out = np.empty((nl + 1, 3, 3))
    out[0] = r0 @ base_inertia @ r0.T
    for k in range(nl):
        out[k + 1] = rot[k] @ link_inertia[k] @ rot[k].T
    return out


@njit(cache=True)
def mass_matrix(jac, masses, inertias):
    nb = jac.shape[0]
    ndof = jac.shape[2]
    h = np.zeros((ndof, ndof))
    for b in range(nb):
        jt = np.ascontiguousarray(jac[b, 0:3, :])
        jr = np.ascontiguousarray(jac[b, 3:6, :])
        h += masses[b] * (jt.T @ jt) + jr.T @ (inertias[b] @ jr)
    # symmetrize away rounding
    return 0.5 * (h + h.T)


@njit(cache=True)
def bias_accelerations(parent, base_pos, joint, ax, cent, twist, theta_dot):
    """Body accelerations at zero generalized acceleration.

    Returns per-body (linear centroid acceleration, angular acceleration,
    angular velocity).
    """
    nl = parent.shape[0]
    lin = np.zeros((nl + 1, 3))
    ang = np.zeros((nl + 1, 3))
    omega = np.zeros((nl + 1, 3))
    omega[0] = twist[3:6]
    for k in range(nl):
        p = parent[k] + 1
        ref = base_pos if p == 0 else cent[p - 1]
        s = joint[k] - ref
        wp = omega[p]
        acc_joint = lin[p] + cross(ang[p], s) + cross(wp, cross(wp, s))
        w_rel = ax[k] * theta_dot[k]
        omega[k + 1] = wp + w_rel
        ang[k + 1] = ang[p] + cross(wp, w_rel)
        e = cent[k] - joint[k]
        wk = omega[k + 1]
        lin[k + 1] = acc_joint + cross(ang[k + 1], e) + cross(wk, cross(wk, e))
    return lin, ang, omega


@njit(cache=True)
def bias_forces(jac, masses, inertias, lin, ang, omega):
    ndof = jac.shape[2]
    c = np.zeros(ndof)
    nb = jac.shape[0]
    for b in range(nb):
        f = masses[b] * lin[b]
        iw = inertias[b] @ omega[b]
        n = inertias[b] @ ang[b] + cross(omega[b], iw)
        for col in range(ndof):
            acc = 0.0
            for i in range(3):
                acc += jac[b, i, col] * f[i] + jac[b, 3 + i, col] * n[i]
            c[col] += acc
    return c


@njit(cache=True)
def dynamics_terms(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                   base_mass, base_inertia, base_pos, quat, theta, twist, theta_dot):
    """Generalized inertia, bias vector and body Jacobians at one state."""
    r0, rot, joint, ax, cent = forward_kinematics(
        parent, axis, offset, mount_rot, com, base_pos, quat, theta)
    jac = body_jacobians(parent, base_pos, joint, ax, cent)
    nl = parent.shape[0]
    masses = np.empty(nl + 1)
    masses[0] = base_mass
    masses[1:] = link_mass
    inertias = world_inertias(base_inertia, link_inertia, r0, rot)
    h = mass_matrix(jac, masses, inertias)
    lin, ang, omega = bias_accelerations(parent, base_pos, joint, ax, cent, twist, theta_dot)
    c = bias_forces(jac, masses, inertias, lin, ang, omega)
    return h, c, jac, masses, inertias


@njit(cache=True)
def cholesky_solve(h, rhs):
    # raises numpy.linalg.LinAlgError when h is not positive definite
    low = np.linalg.cholesky(h)
    n = rhs.shape[0]
    y = np.empty(n)
    for i in range(n):
        acc = rhs[i]
        for j in range(i):
            acc -= low[i, j] * y[j]
        y[i] = acc / low[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for j in range(i + 1, n):
            acc -= low[j, i] * x[j]
        x[i] = acc / low[i, i]
    return x


@njit(cache=True)
def state_derivative(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                     base_mass, base_inertia, x, tau):
    """d/dt of the packed state ``(R_B, q, V0, Omega0, theta, theta_dot)``."""
    nl = parent.shape[0]
    pos = x[0:3]
    quat = x[3:7]
    twist = x[7:13]
    theta = x[13:13 + nl]
    theta_dot = x[13 + nl:13 + 2 * nl]
    h, c, _, _, _ = dynamics_terms(parent, axis, offset, mount_rot, com, link_mass,
                                   link_inertia, base_mass, base_inertia,
                                   pos, quat, theta, twist, theta_dot)
    rhs = -c
    rhs[6:] += tau
    acc = cholesky_solve(h, rhs)
    dx = np.empty_like(x)
    dx[0:3] = twist[0:3]
    wq = np.zeros(4)
    wq[1:4] = twist[3:6]
    dx[3:7] = 0.5 * quat_mul(wq, quat)
    dx[7:13] = acc[0:6]
    dx[13:13 + nl] = theta_dot
    dx[13 + nl:] = acc[6:]
    return dx


@njit(cache=True)
def rk4_step(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
             base_mass, base_inertia, x, tau, dt):
    k1 = state_derivative(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                          base_mass, base_inertia, x, tau)
    k2 = state_derivative(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                          base_mass, base_inertia, x + 0.5 * dt * k1, tau)
    k3 = state_derivative(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                          base_mass, base_inertia, x + 0.5 * dt * k2, tau)
    k4 = state_derivative(parent, axis, offset, mount_rot, com, link_mass, link_inertia,
                          base_mass, base_inertia, x + dt * k3, tau)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = out[3:7]
    out[3:7] = q / np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return out
