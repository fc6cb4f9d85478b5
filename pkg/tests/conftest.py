import numpy as np
import pytest

from freefloat.kinematics import SystemState
from freefloat.model import ArmChain, BaseParams, JointParams, LinkParams, RobotModel, table1_model
from freefloat.rotations import quat_from_rpy

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def table1():
    return table1_model()


def random_state(model, rng, moving=True, scale=1.0):
    """Arbitrary pose, joint angles and (optionally) velocities."""
    n = model.n_joints
    rates = scale * rng.normal(size=n) if moving else np.zeros(n)
    twist = scale * rng.normal(size=6) if moving else np.zeros(6)
    return SystemState(
        base_position=rng.normal(size=3),
        base_attitude=quat_from_rpy(rng.uniform(-1.2, 1.2, size=3)),
        base_twist=twist,
        joint_angles=rng.uniform(-np.pi, np.pi, size=n),
        joint_rates=rates,
    )


def planar_1r(base_mass=20.0, base_izz=3.0, link_mass=4.0, link_izz=0.5,
              rho=0.6, sigma=0.4, length=1.0):
    """Free base with one revolute joint about z, everything in the xy-plane.

    The joint sits ``rho`` from the base centroid along x and the link
    centroid ``sigma`` beyond the joint along the link.
    """
    base = BaseParams(base_mass, (base_izz, base_izz, base_izz), [(rho, 0.0, 0.0)])
    link = LinkParams(link_mass, length, (sigma, 0.0, 0.0), (0.1, link_izz, link_izz))
    arm = ArmChain([JointParams((0.0, 0.0, 1.0), (rho, 0.0, 0.0))], [link], role="mission")
    return RobotModel(base, [arm], name="planar-1r")
