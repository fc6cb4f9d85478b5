"""Scenario and state files.

Scenario files are TOML::

    model = "table1.model"          # relative to the scenario file

    [mission]
    target = [0.6, -0.9, 1.4]       # mission-arm joint goal (rad)
    duration = 4.0                  # maneuver time (s)
    via = [[...]]                   # optional intermediate joint goals

    [control]
    kp = [400.0, ...]               # one per joint, all arms, or a single number
    kd = [40.0, ...]

    [sim]
    dt = 0.001
    t_end = 5.0
    balance = true

    [initial]
    base_attitude_rpy = [0.0, 0.0, 0.0]
    joint_angles = [...]            # all joints, all arms

State files (used by ``freefloat coupling``) hold ``base_position``,
``base_attitude_rpy``, ``base_twist``, ``joint_angles`` and ``joint_rates``;
everything but ``joint_angles`` defaults to zero.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import tomli_w

from .control import JointTrajectory, PDGains, plan_ptp, plan_via
from .errors import ParseError, ValidationError
from .kinematics import SystemState
from .model import RobotModel, _num, _req, _vector, dumps_model, load_model, parse_toml
from .rotations import quat_from_rpy

DATA_DIR = Path(__file__).parent / "data"


def resolve_path(path, base_dir: Path | None = None) -> Path:
    """Locate a file directly, relative to ``base_dir``, or among the bundled data."""
    p = Path(path)
    candidates = [p]
    if base_dir is not None and not p.is_absolute():
        candidates.append(base_dir / p)
    candidates.append(DATA_DIR / p.name)
    for c in candidates:
        if c.is_file():
            return c
    return p


@dataclass(frozen=True, eq=False)
class Scenario:
    model: RobotModel
    initial_state: SystemState
    mission_target: tuple[float, ...]
    mission_duration: float
    gains: PDGains
    dt: float
    t_end: float
    balance_enabled: bool
    mission_via: tuple[tuple[float, ...], ...] = ()
    model_ref: str = ""
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mission_target", tuple(float(v) for v in self.mission_target))
        object.__setattr__(self, "mission_via",
                           tuple(tuple(float(v) for v in p) for p in self.mission_via))
        self._validate()

    def _validate(self):
        m = self.model
        if self.initial_state.n_joints != m.n_joints:
            raise ValidationError(f"initial.joint_angles: expected {m.n_joints} angles, "
                                  f"got {self.initial_state.n_joints}")
        if np.any(self.initial_state.velocity != 0):
            raise ValidationError("initial: the system must start at rest")
        dof = m.arms[m.mission_arm].dof
        if len(self.mission_target) != dof:
            raise ValidationError(f"mission.target: expected {dof} angles, "
                                  f"got {len(self.mission_target)}")
        for i, p in enumerate(self.mission_via):
            if len(p) != dof:
                raise ValidationError(f"mission.via[{i}]: expected {dof} angles")
        if self.gains.kp.shape != (m.n_joints,):
            raise ValidationError(f"control.kp: expected {m.n_joints} gains, "
                                  f"got {self.gains.kp.shape[0]}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"sim.dt: must be > 0, got {self.dt}")
        if not (np.isfinite(self.mission_duration) and self.mission_duration > 0):
            raise ValidationError(f"mission.duration: must be > 0, got {self.mission_duration}")
        if self.t_end < self.mission_duration:
            raise ValidationError(f"sim.t_end: {self.t_end} is shorter than the maneuver "
                                  f"({self.mission_duration} s)")
        for label, value in (("sim.t_end", self.t_end),
                             ("mission.duration", self.segment_duration)):
            n = round(value / self.dt)
            if abs(n * self.dt - value) > 1e-9 * max(value, 1.0):
                raise ValidationError(f"{label}: {value} is not a multiple of sim.dt = {self.dt}")
        if self.balance_enabled and m.balance_arm is None:
            raise ValidationError("sim.balance: model has no arm with role 'balance'")

    @property
    def segment_duration(self) -> float:
        return self.mission_duration / (len(self.mission_via) + 1)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def mission_start(self) -> np.ndarray:
        return np.array(self.initial_state.joint_angles[self.model.arm_slices[self.model.mission_arm]])

    def mission_trajectory(self) -> JointTrajectory:
        """Planned mission-arm motion, held at the goal until ``t_end``."""
        start = self.mission_start()
        if self.mission_via:
            points = [start, *map(np.array, self.mission_via), np.array(self.mission_target)]
            traj = plan_via(points, [self.segment_duration] * (len(points) - 1), self.dt)
        else:
            traj = plan_ptp(start, self.mission_target, self.mission_duration, self.dt)
        return traj.hold_until(self.t_end, self.dt)

    def with_overrides(self, dt=None, t_end=None, balance=None) -> "Scenario":
        changes = {}
        if dt is not None:
            changes["dt"] = float(dt)
        if t_end is not None:
            changes["t_end"] = float(t_end)
        if balance is not None:
            changes["balance_enabled"] = bool(balance)
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        rpy = self.initial_state.rpy
        doc = {
            "model": self.model_ref or "model",
            "mission": {"target": list(self.mission_target), "duration": self.mission_duration},
            "control": {"kp": self.gains.kp.tolist(), "kd": self.gains.kd.tolist()},
            "sim": {"dt": self.dt, "t_end": self.t_end, "balance": self.balance_enabled},
            "initial": {"base_attitude_rpy": [float(v) for v in rpy],
                        "joint_angles": self.initial_state.joint_angles.tolist()},
        }
        if self.mission_via:
            doc["mission"]["via"] = [list(p) for p in self.mission_via]
        return doc

    @property
    def digest(self) -> str:
        text = tomli_w.dumps(self.to_dict()) + dumps_model(self.model)
        return hashlib.sha256(text.encode()).hexdigest()


def _gains(value, n, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(n, float(value))
    if not isinstance(value, list):
        raise ParseError(f"{where}: expected a number or list of {n} numbers")
    return np.array(_vector(value, where, len(value)))


def scenario_from_dict(doc: dict, base_dir: Path | None = None,
                       source: str = "<scenario>") -> Scenario:
    model_ref = _req(doc, "model", source)
    if not isinstance(model_ref, str):
        raise ParseError("model: expected a path string")
    model = load_model(resolve_path(model_ref, base_dir))
    n = model.n_joints
    mission = _req(doc, "mission", source)
    target = _req(mission, "target", "mission")
    if not isinstance(target, list):
        raise ParseError("mission.target: expected a list of angles")
    target = _vector(target, "mission.target", len(target))
    duration = _num(_req(mission, "duration", "mission"), "mission.duration")
    via_raw = mission.get("via", [])
    if not isinstance(via_raw, list):
        raise ParseError("mission.via: expected a list of joint vectors")
    via = tuple(_vector(p, f"mission.via[{i}]", len(target)) for i, p in enumerate(via_raw))
    control = _req(doc, "control", source)
    kp = _gains(_req(control, "kp", "control"), n, "control.kp")
    kd = _gains(_req(control, "kd", "control"), n, "control.kd")
    for label, g in (("control.kp", kp), ("control.kd", kd)):
        if g.shape[0] != n:
            raise ValidationError(f"{label}: expected {n} gains (one per joint), "
                                  f"got {g.shape[0]}")
    try:
        gains = PDGains(kp, kd)
    except ValueError as exc:
        raise ValidationError(f"control: {exc}") from None
    sim = _req(doc, "sim", source)
    dt = _num(_req(sim, "dt", "sim"), "sim.dt")
    t_end = _num(_req(sim, "t_end", "sim"), "sim.t_end")
    balance = sim.get("balance", True)
    if not isinstance(balance, bool):
        raise ParseError("sim.balance: expected true or false")
    initial = doc.get("initial", {})
    rpy = _vector(initial.get("base_attitude_rpy", [0.0, 0.0, 0.0]), "initial.base_attitude_rpy")
    angles_raw = initial.get("joint_angles", [0.0] * n)
    if not isinstance(angles_raw, list):
        raise ParseError("initial.joint_angles: expected a list")
    angles = _vector(angles_raw, "initial.joint_angles", len(angles_raw))
    if len(angles) != n:
        raise ValidationError(f"initial.joint_angles: expected {n} angles, got {len(angles)}")
    state = SystemState.at_rest(model, angles, rpy)
    return Scenario(model=model, initial_state=state, mission_target=target,
                    mission_duration=duration, gains=gains, dt=dt, t_end=t_end,
                    balance_enabled=balance, mission_via=via, model_ref=model_ref,
                    name=str(doc.get("name", "")))


def loads_scenario(text: str, base_dir: Path | None = None,
                   source: str = "<string>") -> Scenario:
    return scenario_from_dict(parse_toml(text, source), base_dir, source)


def load_scenario(path) -> Scenario:
    path = resolve_path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    sc = loads_scenario(text, path.parent, str(path))
    return sc if sc.name else replace(sc, name=path.stem)


def load_state(path, model: RobotModel) -> SystemState:
    path = resolve_path(path)
    try:
        doc = parse_toml(path.read_text(), str(path))
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    n = model.n_joints
    angles = _req(doc, "joint_angles", str(path))
    if not isinstance(angles, list) or len(angles) != n:
        raise ValidationError(f"joint_angles: expected {n} angles")
    rates = doc.get("joint_rates", [0.0] * n)
    if not isinstance(rates, list) or len(rates) != n:
        raise ValidationError(f"joint_rates: expected {n} rates")
    return SystemState(
        base_position=_vector(doc.get("base_position", [0.0, 0.0, 0.0]), "base_position"),
        base_attitude=quat_from_rpy(_vector(doc.get("base_attitude_rpy", [0.0, 0.0, 0.0]),
                                            "base_attitude_rpy")),
        base_twist=_vector(doc.get("base_twist", [0.0] * 6), "base_twist", 6),
        joint_angles=_vector(angles, "joint_angles", n),
        joint_rates=_vector(rates, "joint_rates", n),
    )
