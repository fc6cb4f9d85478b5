import numpy as np
import pytest
import sympy as sp

from freefloat.dynamics import (bias_forces, forward_dynamics, generalized_inertia, integrate,
                                inverse_dynamics, kinetic_energy, step)
from freefloat.errors import DimensionMismatch, NonFiniteState
from freefloat.kinematics import SystemState, forward_kinematics
from freefloat.momentum import total_momentum

import oracles
from conftest import planar_1r, random_state


def test_inertia_spd_and_mass_block(table1):
    rng = np.random.default_rng(0)
    for _ in range(100):
        h = generalized_inertia(table1, random_state(table1, rng, moving=False))
        assert np.array_equal(h, h.T)
        assert np.linalg.eigvalsh(h).min() > 0
        assert np.allclose(h[0:3, 0:3], 331.0 * np.eye(3), rtol=1e-14)


def test_inertia_matches_polarized_oracle(table1):
    rng = np.random.default_rng(1)
    for _ in range(5):
        s = random_state(table1, rng, moving=False)
        ref = oracles.inertia_matrix(table1, s.base_position, s.base_attitude, s.joint_angles)
        h = generalized_inertia(table1, s)
        assert np.abs(h - ref).max() <= 1e-10 * np.abs(ref).max()


def test_locked_joints_composite_body(table1):
    rng = np.random.default_rng(2)
    s = random_state(table1, rng).replace(joint_rates=np.zeros(6))
    bodies = oracles.body_velocities(table1, s.base_position, s.base_attitude,
                                     s.joint_angles, s.velocity)
    rg = forward_kinematics(table1, s).com
    inertia = np.zeros((3, 3))
    for m, iw, c, _, _ in bodies:
        d = c - rg
        inertia += iw + m * (d @ d * np.eye(3) - np.outer(d, d))
    v0, w = s.base_twist[0:3], s.base_twist[3:6]
    vg = v0 + np.cross(w, rg - s.base_position)
    composite = 0.5 * 331.0 * vg @ vg + 0.5 * w @ inertia @ w
    assert kinetic_energy(table1, s) == pytest.approx(composite, rel=1e-12)


def test_bias_zero_at_rest(table1):
    s = random_state(table1, np.random.default_rng(3), moving=False)
    assert np.all(bias_forces(table1, s) == 0.0)


def test_bias_matches_lagrangian_oracle(table1):
    rng = np.random.default_rng(4)
    for _ in range(3):
        s = random_state(table1, rng)
        ref = oracles.lagrangian_bias(table1, s.base_position, s.base_attitude,
                                      s.joint_angles, s.velocity)
        c = bias_forces(table1, s)
        assert np.linalg.norm(c - ref) <= 1e-7 * np.linalg.norm(ref)


def _planar_bias_symbolic(mb, ib, ml, il, rho, sigma):
    t = sp.symbols("t")
    x, y, phi, th = (sp.Function(n)(t) for n in ("x", "y", "phi", "th"))
    q = [x, y, phi, th]
    joint = sp.Matrix([x + rho * sp.cos(phi), y + rho * sp.sin(phi)])
    cent = joint + sigma * sp.Matrix([sp.cos(phi + th), sp.sin(phi + th)])
    vc = cent.diff(t)
    T = (mb * (x.diff(t) ** 2 + y.diff(t) ** 2) + ib * phi.diff(t) ** 2
         + ml * (vc.T * vc)[0] + il * (phi.diff(t) + th.diff(t)) ** 2) / 2
    qd = [v.diff(t) for v in q]
    exprs = [sp.diff(T.diff(qdi), t) - T.diff(qi) for qi, qdi in zip(q, qd)]
    # drop accelerations: what remains is the velocity-product term
    acc = {v.diff(t, 2): 0 for v in q}
    syms = sp.symbols("x y phi th xd yd phid thd")
    subs = dict(zip(qd + q, syms[4:] + syms[:4]))
    return sp.lambdify(syms, [sp.simplify(e.subs(acc).subs(subs)) for e in exprs])


def test_planar_one_link_bias_closed_form():
    params = dict(mb=20.0, ib=3.0, ml=4.0, il=0.5, rho=0.6, sigma=0.4)
    model = planar_1r(params["mb"], params["ib"], params["ml"], params["il"],
                      params["rho"], params["sigma"])
    f = _planar_bias_symbolic(**params)
    rng = np.random.default_rng(5)
    for _ in range(5):
        pos = np.r_[rng.normal(size=2), 0.0]
        phi, th = rng.uniform(-3, 3, size=2)
        vx, vy, phid, thd = rng.normal(size=4)
        s = SystemState(pos, [np.cos(phi / 2), 0.0, 0.0, np.sin(phi / 2)],
                        [vx, vy, 0.0, 0.0, 0.0, phid], [th], [thd])
        c = bias_forces(model, s)
        expect = np.array(f(pos[0], pos[1], phi, th, vx, vy, phid, thd), dtype=float)
        assert np.allclose(c[[0, 1, 5, 6]], expect, atol=1e-12)
        assert np.allclose(c[[2, 3, 4]], 0.0, atol=1e-12)


def test_energy_consistency_of_bias(table1):
    # along a zero-torque trajectory v.C equals (1/2) v.dH/dt.v
    rng = np.random.default_rng(6)
    s = random_state(table1, rng, scale=0.5)
    h = 1e-6
    fwd = SystemState.from_vector(integrate(table1, s, np.zeros(6), h, 1)[-1], 6)
    bwd = SystemState.from_vector(integrate(table1, s, np.zeros(6), -h, 1)[-1], 6)
    hdot = (generalized_inertia(table1, fwd) - generalized_inertia(table1, bwd)) / (2 * h)
    v = s.velocity
    assert v @ bias_forces(table1, s) == pytest.approx(0.5 * v @ hdot @ v, rel=1e-6)


def test_forward_inverse_round_trip(table1):
    rng = np.random.default_rng(7)
    s = random_state(table1, rng)
    tau = rng.normal(size=6)
    acc = forward_dynamics(table1, s, tau)
    gen = inverse_dynamics(table1, s, acc)
    assert np.allclose(gen[:6], 0.0, atol=1e-10)
    assert np.allclose(gen[6:], tau, atol=1e-10)


def test_rest_without_torque_stays(table1):
    s = SystemState.at_rest(table1, np.full(6, 0.3), rpy=(0.1, 0.2, 0.3))
    assert np.all(forward_dynamics(table1, s, np.zeros(6)) == 0.0)
    nxt = step(table1, s, np.zeros(6), 1e-3)
    assert np.array_equal(nxt.base_position, s.base_position)
    assert np.array_equal(nxt.joint_angles, s.joint_angles)
    assert np.array_equal(nxt.velocity, s.velocity)
    assert np.abs(nxt.base_attitude - s.base_attitude).max() <= 2e-16


def test_heavy_base_matches_fixed_base_dynamics(table1):
    heavy = table1.scaled_base(1e6)
    rng = np.random.default_rng(8)
    for _ in range(5):
        s = random_state(heavy, rng).replace(base_twist=np.zeros(6))
        tau = rng.normal(size=6)
        h = generalized_inertia(heavy, s)[6:, 6:]
        c = bias_forces(heavy, s)[6:]
        fixed = np.linalg.solve(h, tau - c)
        free = forward_dynamics(heavy, s, tau)[6:]
        assert np.linalg.norm(free - fixed) <= 1e-4 * np.linalg.norm(fixed)


def test_momentum_conserved_under_torques(table1):
    rng = np.random.default_rng(9)
    s = SystemState.at_rest(table1, rng.uniform(-1, 1, size=6))
    xs = integrate(table1, s, rng.normal(size=6), 1e-3, 500)
    for x in xs[::50]:
        assert np.abs(total_momentum(table1, SystemState.from_vector(x, 6))).max() < 1e-9


def test_power_balance(table1):
    # d(KE)/dt = theta_dot . tau, checked with a central difference over one step
    rng = np.random.default_rng(10)
    s = random_state(table1, rng, scale=0.3)
    tau = rng.normal(size=6)
    dt = 1e-4
    xs = integrate(table1, s, tau, dt, 2)
    ke = [kinetic_energy(table1, SystemState.from_vector(x, 6)) for x in xs]
    mid = SystemState.from_vector(xs[1], 6)
    rate = (ke[2] - ke[0]) / (2 * dt)
    assert rate == pytest.approx(mid.joint_rates @ tau, rel=1e-6)


def test_bad_inputs(table1):
    s = SystemState.at_rest(table1)
    with pytest.raises(DimensionMismatch):
        forward_dynamics(table1, s, np.zeros(5))
    with pytest.raises(NonFiniteState, match="t = 0.5"):
        step(table1, s, np.full(6, np.inf), 1e-3, t=0.5)
    with pytest.raises(ValueError):
        step(table1, s, np.zeros(6), 0.0)
