"""Reference computations that share nothing with the package but the model data.

Forward kinematics uses scipy rotation vectors, body velocities are
propagated link by link, and the generalized inertia is recovered from the
kinetic energy by polarization. Slow and explicit on purpose.
"""

import numpy as np
from scipy.spatial.transform import Rotation


def _rot(q):
    return Rotation.from_quat(np.asarray(q), scalar_first=True).as_matrix()


def fk(model, pos, quat, theta):
    """Per-arm lists of (joint point, joint axis, link rotation, centroid) and tips."""
    r0 = _rot(quat)
    arms, tips = [], []
    k = 0
    for arm in model.arms:
        rp, origin = r0, np.asarray(pos, float)
        chain = []
        for j, (joint, link) in enumerate(zip(arm.joints, arm.links)):
            d = origin + rp @ np.array(joint.mount_offset)
            a = rp @ np.array(joint.axis)
            rj = rp @ Rotation.from_rotvec(np.array(joint.axis) * theta[k]).as_matrix()
            if j == 0:
                rj = rj @ np.array(arm.mount_rotation)
            c = d + rj @ np.array(link.com_offset)
            chain.append((d, a, rj, c))
            rp, origin = rj, d
            k += 1
        tips.append(chain[-1][0] + chain[-1][2] @ np.array([arm.links[-1].length, 0, 0]))
        arms.append(chain)
    return r0, arms, np.array(tips)


def body_velocities(model, pos, quat, theta, v):
    """List of (mass, world inertia, centroid, linear velocity, angular velocity)."""
    r0, arms, _ = fk(model, pos, quat, theta)
    v0, w0, qd = np.asarray(v[0:3]), np.asarray(v[3:6]), np.asarray(v[6:])
    bodies = [(model.base.mass, r0 @ np.array(model.base.inertia) @ r0.T,
               np.asarray(pos, float), v0, w0)]
    k = 0
    for arm, chain in zip(model.arms, arms):
        ref, vref, wref = np.asarray(pos, float), v0, w0
        for link, (d, a, rj, c) in zip(arm.links, chain):
            vd = vref + np.cross(wref, d - ref)
            w = wref + a * qd[k]
            vc = vd + np.cross(w, c - d)
            bodies.append((link.mass, rj @ np.array(link.inertia) @ rj.T, c, vc, w))
            ref, vref, wref = c, vc, w
            k += 1
    return bodies


def kinetic_energy(model, pos, quat, theta, v):
    return sum(0.5 * m * vc @ vc + 0.5 * w @ iw @ w
               for m, iw, _, vc, w in body_velocities(model, pos, quat, theta, v))


def momentum(model, pos, quat, theta, v):
    """(P, L) with L about the inertial origin, summed body by body."""
    p = np.zeros(3)
    lo = np.zeros(3)
    for m, iw, c, vc, w in body_velocities(model, pos, quat, theta, v):
        p += m * vc
        lo += iw @ w + m * np.cross(c, vc)
    return np.concatenate((p, lo))


def inertia_matrix(model, pos, quat, theta):
    """Generalized inertia by polarization of the kinetic energy."""
    n = 6 + len(theta)
    e = np.eye(n)
    diag = [kinetic_energy(model, pos, quat, theta, e[i]) for i in range(n)]
    h = np.empty((n, n))
    for i in range(n):
        h[i, i] = 2.0 * diag[i]
        for j in range(i + 1, n):
            t = kinetic_energy(model, pos, quat, theta, e[i] + e[j])
            h[i, j] = h[j, i] = t - diag[i] - diag[j]
    return h


def _left_rotate(quat, rotvec):
    lhs = Rotation.from_rotvec(rotvec)
    return (lhs * Rotation.from_quat(quat, scalar_first=True)).as_quat(scalar_first=True)


def lagrangian_bias(model, pos, quat, theta, v, h=1e-5):
    """Bias forces from d/dt(dT/dv) - dT/dphi plus the rotation quasi-velocity term.

    The base orientation is perturbed on the left (inertial frame), matching
    an inertial-frame angular velocity; for that choice the Hamel correction
    is ``(dT/dOmega) x Omega``.
    """
    v = np.asarray(v, float)
    theta = np.asarray(theta, float)
    pos = np.asarray(pos, float)

    def at(s):
        return (pos + s * v[0:3], _left_rotate(quat, s * v[3:6]), theta + s * v[6:])

    hdot = (inertia_matrix(model, *at(h)) - inertia_matrix(model, *at(-h))) / (2 * h)
    grad = np.zeros_like(v)
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        grad[i] = (kinetic_energy(model, pos + d, quat, theta, v)
                   - kinetic_energy(model, pos - d, quat, theta, v)) / (2 * h)
        grad[3 + i] = (kinetic_energy(model, pos, _left_rotate(quat, d), theta, v)
                       - kinetic_energy(model, pos, _left_rotate(quat, -d), theta, v)) / (2 * h)
    for i in range(len(theta)):
        d = np.zeros_like(theta)
        d[i] = h
        grad[6 + i] = (kinetic_energy(model, pos, quat, theta + d, v)
                       - kinetic_energy(model, pos, quat, theta - d, v)) / (2 * h)
    p_omega = (inertia_matrix(model, pos, quat, theta) @ v)[3:6]
    c = hdot @ v - grad
    c[3:6] += np.cross(p_omega, v[3:6])
    return c
