import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from freefloat.errors import IllConditioned
from freefloat.kinematics import SystemState, end_effector_jacobian, forward_kinematics
from freefloat.momentum import (base_force_from_ee_force, base_motion_map, base_twist_from_rates,
                                coupling_factors, damped_pinv, momentum_matrices,
                                total_momentum)
from freefloat.rotations import quat_exp, quat_mul

import oracles
from conftest import planar_1r, random_state


def test_at_rest_no_momentum(table1):
    s = random_state(table1, np.random.default_rng(0), moving=False)
    assert np.all(total_momentum(table1, s) == 0.0)


def test_translating_base(table1):
    s = SystemState.at_rest(table1, np.full(6, 0.4)).replace(
        base_twist=np.array([1.0, 0, 0, 0, 0, 0]))
    p = total_momentum(table1, s)[0:3]
    assert np.allclose(p, [331.0, 0.0, 0.0], rtol=1e-14)


def test_h0_blocks(table1):
    s = random_state(table1, np.random.default_rng(1))
    mm = momentum_matrices(table1, s)
    assert np.allclose(mm.H0[0:3, 0:3], 331.0 * np.eye(3), rtol=1e-14)
    # the linear momentum of the composite body is w (V0 + Omega0 x (rg - r0))
    rg = forward_kinematics(table1, s).com
    w = np.array([0.2, -0.5, 0.9])
    assert np.allclose(mm.H0[0:3, 3:6] @ w, 331.0 * np.cross(w, rg - s.base_position))


def test_factorization_matches_per_body_sum(table1):
    rng = np.random.default_rng(2)
    for _ in range(25):
        s = random_state(table1, rng)
        ours = total_momentum(table1, s)
        ref = oracles.momentum(table1, s.base_position, s.base_attitude, s.joint_angles,
                               s.velocity)
        assert np.linalg.norm(ours - ref) <= 1e-10 * np.linalg.norm(ref)


def test_zero_rates_zero_base_twist(table1):
    s = random_state(table1, np.random.default_rng(3), moving=False)
    mm = momentum_matrices(table1, s)
    assert np.all(base_twist_from_rates(mm, np.zeros(6)) == 0.0)


def test_map_conserves_zero_momentum(table1):
    rng = np.random.default_rng(4)
    for _ in range(10):
        s = random_state(table1, rng)
        mm = momentum_matrices(table1, s)
        twist = base_twist_from_rates(mm, s.joint_rates)
        moving = s.replace(base_twist=twist)
        scale = np.linalg.norm(mm.Hm @ s.joint_rates)
        assert np.linalg.norm(total_momentum(table1, moving)) <= 1e-10 * scale


def test_planar_one_link_closed_form():
    mb, ib, ml, il, rho, sigma = 20.0, 3.0, 4.0, 0.5, 0.6, 0.4
    model = planar_1r(mb, ib, ml, il, rho, sigma)
    mu = mb * ml / (mb + ml)
    for theta in (0.0, 0.7, 2.0, -2.9):
        mm = momentum_matrices(model, SystemState.at_rest(model, [theta]))
        omega = base_twist_from_rates(mm, [1.0])[3:6]
        c = np.cos(theta)
        expect = -(il + mu * (sigma ** 2 + rho * sigma * c)) / (
            ib + il + mu * (rho ** 2 + sigma ** 2 + 2 * rho * sigma * c))
        assert omega == pytest.approx([0.0, 0.0, expect], abs=1e-14)


def test_point_symmetric_rates(table1):
    # the two arms map onto each other under a half turn about base z
    theta = np.array([0.3, -0.7, 1.1, 0.3, -0.7, 1.1])
    r = np.array([0.2, 0.5, -0.4])
    s = SystemState.at_rest(table1, theta)
    mm = momentum_matrices(table1, s)
    same = base_twist_from_rates(mm, np.r_[r, r])
    opposite = base_twist_from_rates(mm, np.r_[r, -r])
    for twist, zero_rows in ((same, [0, 1, 3, 4]), (opposite, [2, 5])):
        assert np.abs(twist[zero_rows]).max() < 1e-15
        # the per-body momentum oracle agrees that the map's twist is momentum free
        moving = s.replace(base_twist=twist, joint_rates=np.r_[r, r] if twist is same
                           else np.r_[r, -r])
        ref = oracles.momentum(table1, moving.base_position, moving.base_attitude,
                               moving.joint_angles, moving.velocity)
        assert np.abs(ref).max() < 1e-12
    assert np.abs(same[[2, 5]]).min() > 1e-3
    assert np.abs(opposite[[0, 1, 3, 4]]).min() > 1e-3


def _flow(model, state, h, substeps=4):
    """Pose after time h of the zero-momentum kinematic flow at constant joint rates."""
    pos, quat, theta = state.base_position, state.base_attitude, state.joint_angles
    rates = state.joint_rates
    dt = h / substeps

    def f(pos, quat, theta):
        s = SystemState(pos, quat, np.zeros(6), theta, rates)
        return base_twist_from_rates(momentum_matrices(model, s), rates)

    for _ in range(substeps):
        # RK4 on position/angles, with the rotation advanced on the left
        k1 = f(pos, quat, theta)
        k2 = f(pos + 0.5 * dt * k1[:3], quat_mul(quat_exp(0.5 * dt * k1[3:]), quat),
               theta + 0.5 * dt * rates)
        k3 = f(pos + 0.5 * dt * k2[:3], quat_mul(quat_exp(0.5 * dt * k2[3:]), quat),
               theta + 0.5 * dt * rates)
        k4 = f(pos + dt * k3[:3], quat_mul(quat_exp(dt * k3[3:]), quat), theta + dt * rates)
        k = (k1 + 2 * k2 + 2 * k3 + k4) / 6
        pos = pos + dt * k[:3]
        quat = quat_mul(quat_exp(dt * k[3:]), quat)
        quat = quat / np.linalg.norm(quat)
        theta = theta + dt * rates
    return SystemState(pos, quat, np.zeros(6), theta, rates)


def test_generalized_jacobian_along_free_flow(table1):
    rng = np.random.default_rng(5)
    h = 1e-4
    for _ in range(5):
        s = random_state(table1, rng, moving=False).replace(joint_rates=rng.normal(size=6))
        for arm in range(2):
            cf = coupling_factors(table1, s, arm)
            cols = table1.arm_slices[arm]
            predicted = cf.M @ s.joint_rates[cols]
            # the other arm's rates also move the base, so hold them still here
            only = np.zeros(6)
            only[cols] = s.joint_rates[cols]
            st = s.replace(joint_rates=only)
            fwd, bwd = forward_kinematics(table1, _flow(table1, st, h)), \
                forward_kinematics(table1, _flow(table1, st, -h))
            lin = (fwd.ee_positions[arm] - bwd.ee_positions[arm]) / (2 * h)
            ang = Rotation.from_matrix(fwd.ee_rotations[arm] @ bwd.ee_rotations[arm].T
                                       ).as_rotvec() / (2 * h)
            measured = np.concatenate((lin, ang))
            assert np.linalg.norm(measured - predicted) <= 1e-5 * np.linalg.norm(predicted)


def test_zero_rates_zero_ee_twist(table1):
    s = random_state(table1, np.random.default_rng(6), moving=False)
    cf = coupling_factors(table1, s, 0)
    assert np.all(cf.M @ np.zeros(3) == 0.0)


def test_heavy_base_limit(table1):
    heavy = table1.scaled_base(1e6)
    rng = np.random.default_rng(7)
    for _ in range(10):
        s = random_state(heavy, rng, moving=False)
        for arm in range(2):
            cf = coupling_factors(heavy, s, arm)
            jac = end_effector_jacobian(heavy, s, arm=arm)[:, heavy.arm_slices[arm]]
            assert np.linalg.norm(cf.M - jac) <= 1e-4 * np.linalg.norm(jac)


def test_base_map_of_coupling_is_consistent(table1):
    s = random_state(table1, np.random.default_rng(8), moving=False)
    cf = coupling_factors(table1, s, 0)
    g = base_motion_map(momentum_matrices(table1, s))[:, table1.arm_slices[0]]
    r = np.array([0.4, -0.1, 0.3])
    assert np.allclose(cf.N @ (cf.M @ r), g @ r, atol=1e-12)


def test_zero_wrench_zero_base_wrench(table1):
    cf = coupling_factors(table1, random_state(table1, np.random.default_rng(9)), 0)
    assert np.all(base_force_from_ee_force(cf, np.zeros(6)) == 0.0)


def test_wrench_power_duality(table1):
    rng = np.random.default_rng(10)
    for _ in range(10):
        s = random_state(table1, rng, moving=False)
        cf = coupling_factors(table1, s, int(rng.integers(2)))
        fe = rng.normal(size=6)
        xe = cf.M @ rng.normal(size=3)
        fb = base_force_from_ee_force(cf, fe)
        # power drawn through the base equals the end-effector power on the
        # part of the twist the coupling map can see
        reachable = np.linalg.pinv(cf.N) @ (cf.N @ xe)
        lhs, rhs = fb @ (cf.N @ xe), fe @ reachable
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12)


def test_ill_conditioned_rejected(table1):
    s = SystemState.at_rest(table1, np.full(6, 0.4))
    with pytest.raises(IllConditioned):
        coupling_factors(table1, s, 0, max_condition=1.0)


def test_damped_pinv_limits():
    a = np.diag([3.0, 2.0, 0.0])
    p = damped_pinv(a)
    assert np.allclose(p, np.diag([1 / 3, 1 / 2, 0.0]), atol=1e-12)
    b = np.random.default_rng(11).normal(size=(6, 3))
    assert np.allclose(damped_pinv(b), np.linalg.pinv(b), atol=1e-10)
