"""Closed-loop runs of a scenario, telemetry logs and run summaries.

A run plans the mission arm, predicts its effect on the base (Phase I) and,
with balance enabled, synthesizes the balance-arm trajectory (Phase II).
The robot is then simulated with every joint PD-tracking its desired path;
torques are held constant over each integrator step. With balance enabled a
second, balance-off run with the identical mission trajectory provides the
reference for the balance effectiveness ratio.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .control import (AttitudePrediction, BalanceTrajectory, PDGains, pd_torques,
                      predict_base_motion, synthesize_balance)
from .dynamics import rk4_vector
from .errors import NonFiniteState, SolveFailure
from .model import RobotModel
from .rotations import quat_to_matrix, rpy_from_quat, wrap_angle
from .scenario import Scenario

_ZERO_Q = np.array([1.0, 0.0, 0.0, 0.0])


def csv_columns(model: RobotModel) -> list[str]:
    return _columns_from_dofs([arm.dof for arm in model.arms])


@dataclass(eq=False)
class SimLog:
    """Per-sample telemetry of one closed-loop run.

    ``L`` is about the inertial origin. ``flags`` bit 0 marks samples where
    the balance solve was damped, bit 1 those where it failed to null the
    base reaction.
    """

    t: np.ndarray
    quaternion: np.ndarray
    position: np.ndarray
    twist: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    tau: np.ndarray
    P: np.ndarray
    L: np.ndarray
    cond_balance: np.ndarray
    flags: np.ndarray
    arm_dofs: tuple[int, ...]
    metadata: dict = field(default_factory=dict)
    theta_desired: np.ndarray | None = None
    theta_dot_desired: np.ndarray | None = None
    prediction: AttitudePrediction | None = None
    reference: "SimLog | None" = None
    balance_plan: BalanceTrajectory | None = None

    @property
    def rpy(self) -> np.ndarray:
        return rpy_from_quat(self.quaternion)

    @property
    def n_rows(self) -> int:
        return self.t.shape[0]

    def table(self) -> np.ndarray:
        """Rows in CSV column order."""
        blocks = [self.t[:, None], self.rpy, self.quaternion, self.position, self.twist]
        start = 0
        for dof in self.arm_dofs:
            s = slice(start, start + dof)
            blocks += [self.theta[:, s], self.theta_dot[:, s], self.tau[:, s]]
            start += dof
        blocks += [self.P, self.L, self.cond_balance[:, None], self.flags[:, None]]
        return np.hstack(blocks)


@dataclass(frozen=True)
class RunSummary:
    """Scalar outcomes of a run; deviations are RPY changes from the start (rad)."""

    max_dev_roll: float
    max_dev_pitch: float
    max_dev_yaw: float
    final_dev_roll: float
    final_dev_pitch: float
    final_dev_yaw: float
    max_abs_P: float
    max_abs_L: float
    max_reaction_torque: float
    max_tracking_error: float
    reference_max_dev: float
    balance_ratio: float

    @property
    def max_deviation(self) -> float:
        return max(self.max_dev_roll, self.max_dev_pitch, self.max_dev_yaw)

    def as_dict(self) -> dict:
        return asdict(self)


def _steps(t_end, dt):
    return int(round(t_end / dt))


def _log_terms(model: RobotModel, x: np.ndarray, balance_cols):
    """Momentum about the origin and balance-solve condition at a packed state."""
    a = model.arrays
    n = model.n_joints
    pos, quat, twist = x[0:3], x[3:7], x[7:13]
    theta, theta_dot = x[13:13 + n], x[13 + n:]
    h, _, _, _, _ = _kernels.dynamics_terms(
        a.parent, a.axis, a.offset, a.mount_rot, a.com, a.link_mass, a.link_inertia,
        a.base_mass, a.base_inertia, pos, quat, theta, twist, theta_dot)
    mom = h[:6] @ np.concatenate((twist, theta_dot))
    p, l_base = mom[:3], mom[3:]
    cond = 0.0
    if balance_cols is not None:
        g = -np.linalg.solve(h[:6, :6], h[:6, 6:])
        cond = float(np.linalg.cond(g[3:6, balance_cols]))
    return p, l_base + np.cross(pos, p), cond


def closed_loop(model: RobotModel, x0: np.ndarray, theta_d: np.ndarray,
                theta_dot_d: np.ndarray, gains: PDGains, dt: float,
                flags: np.ndarray | None = None) -> SimLog:
    """Simulate PD tracking of sampled desired joint paths, one row per sample."""
    k = theta_d.shape[0]
    n = model.n_joints
    balance = model.balance_arm
    bcols = model.arm_slices[balance] if balance is not None else None
    xs = np.empty((k, x0.shape[0]))
    taus = np.empty((k, n))
    p = np.empty((k, 3))
    l = np.empty((k, 3))
    cond = np.empty(k)
    x = np.array(x0, dtype=float)
    for i in range(k):
        t = i * dt
        tau = pd_torques(gains, theta_d[i], theta_dot_d[i], x[13:13 + n], x[13 + n:])
        xs[i], taus[i] = x, tau
        try:
            p[i], l[i], cond[i] = _log_terms(model, x, bcols)
        except np.linalg.LinAlgError as exc:
            raise SolveFailure(f"locked inertia singular: {exc}", time=t) from None
        except ZeroDivisionError:
            raise NonFiniteState("state diverged (degenerate quaternion)", time=t) from None
        if i < k - 1:
            x = rk4_vector(model, x, tau, dt, t)
    return SimLog(
        t=dt * np.arange(k), quaternion=xs[:, 3:7], position=xs[:, 0:3], twist=xs[:, 7:13],
        theta=xs[:, 13:13 + n], theta_dot=xs[:, 13 + n:], tau=taus, P=p, L=l,
        cond_balance=cond,
        flags=np.zeros(k, dtype=np.int64) if flags is None else flags.astype(np.int64),
        arm_dofs=tuple(arm.dof for arm in model.arms), theta_desired=np.array(theta_d),
        theta_dot_desired=np.array(theta_dot_d))


def _desired(scenario: Scenario, mission_traj, balance_traj):
    model = scenario.model
    k = scenario.n_steps + 1
    theta0 = scenario.initial_state.joint_angles
    pos = np.tile(theta0, (k, 1))
    vel = np.zeros((k, model.n_joints))
    for arm, traj in ((model.mission_arm, mission_traj), (model.balance_arm, balance_traj)):
        if traj is None:
            continue
        cols = model.arm_slices[arm]
        pos[:, cols] = traj.position[:k]
        vel[:, cols] = traj.velocity[:k]
    return pos, vel


def reaction_torque(model: RobotModel, log: SimLog) -> np.ndarray:
    """Torque absorbed by the base: ``d/dt`` of its own angular momentum.

    With total momentum conserved this equals minus the rate of the arms'
    angular momentum about the base centroid. Differenced from the log.
    """
    rot = quat_to_matrix(log.quaternion).reshape(-1, 3, 3)
    i0 = np.array(model.base.inertia)
    base_l = np.einsum("kij,jl,kml,km->ki", rot, i0, rot, log.twist[:, 3:6])
    if log.n_rows < 2:
        return np.zeros_like(base_l)
    return np.gradient(base_l, log.t, axis=0)


def rpy_deviation(log: SimLog) -> np.ndarray:
    rpy = log.rpy
    return wrap_angle(rpy - rpy[0])


def summarize(model: RobotModel, log: SimLog, reference: SimLog | None = None,
              desired: np.ndarray | None = None) -> RunSummary:
    dev = np.abs(rpy_deviation(log))
    final = rpy_deviation(log)[-1]
    ref = log if reference is None else reference
    ref_max = float(np.abs(rpy_deviation(ref)).max())
    own_max = float(dev.max())
    ratio = own_max / ref_max if ref_max > 0 else 0.0
    track = 0.0 if desired is None else float(np.abs(log.theta - desired).max())
    return RunSummary(
        max_dev_roll=float(dev[:, 0].max()), max_dev_pitch=float(dev[:, 1].max()),
        max_dev_yaw=float(dev[:, 2].max()),
        final_dev_roll=float(final[0]), final_dev_pitch=float(final[1]),
        final_dev_yaw=float(final[2]),
        max_abs_P=float(np.linalg.norm(log.P, axis=1).max()),
        max_abs_L=float(np.linalg.norm(log.L, axis=1).max()),
        max_reaction_torque=float(np.linalg.norm(reaction_torque(model, log), axis=1).max()),
        max_tracking_error=track, reference_max_dev=ref_max, balance_ratio=ratio)


def run_scenario(scenario: Scenario) -> tuple[SimLog, RunSummary]:
    """Run Phase I (and Phase II when balance is enabled) of a scenario.

    Returns the closed-loop log (with the Phase I prediction, the balance
    plan and, for balance runs, the balance-off reference log attached) and
    its summary.
    """
    model = scenario.model
    state0 = scenario.initial_state
    mission_traj = scenario.mission_trajectory()
    prediction = predict_base_motion(model, state0, mission_traj)
    x0 = state0.to_vector()

    ref_pos, ref_vel = _desired(scenario, mission_traj, None)
    ref_log = closed_loop(model, x0, ref_pos, ref_vel, scenario.gains, scenario.dt)

    if scenario.balance_enabled:
        plan = synthesize_balance(model, state0, mission_traj)
        pos, vel = _desired(scenario, mission_traj, plan)
        flags = plan.flags[:scenario.n_steps + 1]
        log = closed_loop(model, x0, pos, vel, scenario.gains, scenario.dt, flags)
        log.reference = ref_log
        log.balance_plan = plan
        summary = summarize(model, log, ref_log, pos)
    else:
        log = ref_log
        summary = summarize(model, log, None, ref_pos)
    log.prediction = prediction
    log.metadata = {
        "model_hash": model.digest,
        "scenario_hash": scenario.digest,
        "dt": scenario.dt,
        "t_end": scenario.t_end,
        "balance": scenario.balance_enabled,
        "engine_version": __version__,
        "rows": log.n_rows,
    }
    return log, summary


# ---------------------------------------------------------------------------
# files

def _formats(columns):
    return ["%d" if c == "flags" else "%.17g" for c in columns]


def emit_csv(log: SimLog, path, model: RobotModel | None = None) -> None:
    """Write the log with 17 significant digits in the documented column order.

    ``path`` may also be an open text file.
    """
    columns = csv_columns(model) if model is not None else _columns_from_dofs(log.arm_dofs)
    kwargs = dict(fmt=_formats(columns), delimiter=",", header=",".join(columns), comments="")
    if hasattr(path, "write"):
        np.savetxt(path, log.table(), **kwargs)
        return
    with open(path, "w", newline="") as fh:
        np.savetxt(fh, log.table(), **kwargs)


def _columns_from_dofs(arm_dofs):
    cols = ["t", "roll", "pitch", "yaw", "qw", "qx", "qy", "qz", "x", "y", "z",
            "v0x", "v0y", "v0z", "w0x", "w0y", "w0z"]
    for i, dof in enumerate(arm_dofs, start=1):
        for kind in ("theta", "dtheta", "tau"):
            cols += [f"arm{i}_{kind}{j}" for j in range(1, dof + 1)]
    return cols + ["Px", "Py", "Pz", "Lx", "Ly", "Lz", "cond_balance", "flags"]


def read_csv(path) -> SimLog:
    """Parse a log written by ``emit_csv``."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    col = {name: i for i, name in enumerate(header)}
    dofs = []
    i = 1
    while f"arm{i}_theta1" in col:
        dofs.append(sum(1 for c in header if c.startswith(f"arm{i}_theta")))
        i += 1
    if header != _columns_from_dofs(dofs):
        raise ValueError(f"{path}: header does not match the log schema")

    def take(names):
        return data[:, [col[c] for c in names]]

    def arm_block(kind):
        return np.hstack([take([f"arm{a}_{kind}{j}" for j in range(1, d + 1)])
                          for a, d in enumerate(dofs, start=1)])

    return SimLog(
        t=data[:, col["t"]], quaternion=take(["qw", "qx", "qy", "qz"]),
        position=take(["x", "y", "z"]),
        twist=take(["v0x", "v0y", "v0z", "w0x", "w0y", "w0z"]),
        theta=arm_block("theta"), theta_dot=arm_block("dtheta"), tau=arm_block("tau"),
        P=take(["Px", "Py", "Pz"]), L=take(["Lx", "Ly", "Lz"]),
        cond_balance=data[:, col["cond_balance"]],
        flags=data[:, col["flags"]].astype(np.int64), arm_dofs=tuple(dofs))


SUMMARY_COLUMNS = list(RunSummary.__dataclass_fields__)


def write_summary_csv(summary: RunSummary, path, label: str = "run") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", *SUMMARY_COLUMNS])
        w.writerow([label, *(format(getattr(summary, c), ".17g") for c in SUMMARY_COLUMNS)])


def write_prediction_csv(pred: AttitudePrediction, path) -> None:
    cols = ["t", "roll", "pitch", "yaw", "qw", "qx", "qy", "qz",
            "w0x", "w0y", "w0z", "dw0x", "dw0y", "dw0z"]
    table = np.hstack([pred.t[:, None], pred.rpy, pred.quaternion, pred.omega, pred.omega_dot])
    with open(path, "w", newline="") as fh:
        np.savetxt(fh, table, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")


def write_run(log: SimLog, summary: RunSummary, out_dir, model: RobotModel) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "log.csv", out / "summary.csv", out / "meta.json"]
    emit_csv(log, written[0], model)
    write_summary_csv(summary, written[1], "balance" if log.metadata.get("balance") else "nobalance")
    written[2].write_text(json.dumps(log.metadata, indent=2, sort_keys=True) + "\n")
    if log.prediction is not None:
        written.append(out / "prediction.csv")
        write_prediction_csv(log.prediction, written[-1])
    if log.reference is not None:
        written.append(out / "reference.csv")
        emit_csv(log.reference, written[-1], model)
    return written
