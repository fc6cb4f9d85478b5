"""Robot description: base, serial arms, validation and model files.

Model files are TOML documents::

    [base]
    mass = 300.0
    inertia = [50.0, 50.0, 50.0]           # principal values or full 3x3
    mounts = [[0.0, 0.5, 0.0], [0.0, -0.5, 0.0]]

    [[arm]]
    role = "mission"                       # mission | balance | passive
    mount_rotation = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]

    [[arm.joint]]
    axis = [0.0, 0.0, 1.0]                 # unit vector, parent-frame coordinates
    offset = [0.0, 0.5, 0.0]               # joint position in the parent frame

    [[arm.link]]
    mass = 5.0
    length = 0.5
    com = [0.25, 0.0, 0.0]
    inertia = [0.4187, 0.4187, 0.16]

SI units throughout. The parent frame of joint 1 is the base frame and its
offset is the arm's mount point. ``mount_rotation`` (optional, identity by
default) is the fixed orientation of link 1's zero-angle frame relative to
the base; joint ``j > 1`` lives in the frame of link ``j - 1``. Each link
points along its local x-axis; the end-effector sits at ``(length, 0, 0)``
in the last link's frame.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, ValidationError

ROLES = ("mission", "balance", "passive")

Vec3 = tuple[float, float, float]
Mat3 = tuple[Vec3, Vec3, Vec3]

_IDENTITY: Mat3 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def _vec3(values) -> Vec3:
    arr = np.asarray(values, dtype=float).reshape(3)
    return tuple(float(v) for v in arr)


def _mat3(values) -> Mat3:
    arr = np.asarray(values, dtype=float)
    if arr.shape == (3,):
        arr = np.diag(arr)
    arr = arr.reshape(3, 3)
    return tuple(tuple(float(v) for v in row) for row in arr)


@dataclass(frozen=True)
class LinkParams:
    mass: float
    length: float
    com_offset: Vec3
    inertia: Mat3

    def __post_init__(self):
        object.__setattr__(self, "com_offset", _vec3(self.com_offset))
        object.__setattr__(self, "inertia", _mat3(self.inertia))
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "length", float(self.length))


@dataclass(frozen=True)
class JointParams:
    axis: Vec3
    mount_offset: Vec3

    def __post_init__(self):
        object.__setattr__(self, "axis", _vec3(self.axis))
        object.__setattr__(self, "mount_offset", _vec3(self.mount_offset))


@dataclass(frozen=True)
class BaseParams:
    mass: float
    inertia: Mat3
    arm_mounts: tuple[Vec3, ...]

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "inertia", _mat3(self.inertia))
        object.__setattr__(self, "arm_mounts", tuple(_vec3(m) for m in self.arm_mounts))


@dataclass(frozen=True)
class ArmChain:
    """One serial arm: joints and links in base-to-tip order."""

    joints: tuple[JointParams, ...]
    links: tuple[LinkParams, ...]
    role: str = "passive"
    mount_rotation: Mat3 = _IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "mount_rotation", _mat3(self.mount_rotation))

    @property
    def dof(self) -> int:
        return len(self.joints)


class ModelArrays(NamedTuple):
    """Flattened model in the argument order the compiled kernels expect."""

    parent: np.ndarray
    axis: np.ndarray
    offset: np.ndarray
    mount_rot: np.ndarray
    com: np.ndarray
    link_mass: np.ndarray
    link_inertia: np.ndarray
    base_mass: float
    base_inertia: np.ndarray


def check_inertia(inertia, where: str, rtol: float = 1e-12) -> None:
    """Raise ValidationError unless ``inertia`` is a physical inertia tensor."""
    arr = np.asarray(inertia, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: inertia has non-finite entries")
    scale = max(np.abs(arr).max(), 1e-300)
    if np.abs(arr - arr.T).max() > rtol * scale:
        raise ValidationError(f"{where}: inertia is not symmetric")
    lam = np.linalg.eigvalsh(0.5 * (arr + arr.T))
    tol = rtol * scale
    if lam.min() < -tol:
        raise ValidationError(f"{where}: inertia is not positive semidefinite "
                              f"(eigenvalues {lam.tolist()})")
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        if lam[i] > lam[j] + lam[k] + tol:
            raise ValidationError(
                f"{where}: inertia eigenvalues {lam.tolist()} violate the triangle "
                f"inequality")


def _check_vec(v, where: str):
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{where}: non-finite entries")


@dataclass(frozen=True)
class RobotModel:
    """Immutable, validated description of a free-floating multi-arm robot."""

    base: BaseParams
    arms: tuple[ArmChain, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        self._validate()

    def _validate(self) -> None:
        b = self.base
        if not (np.isfinite(b.mass) and b.mass > 0):
            raise ValidationError(f"base.mass: must be > 0, got {b.mass}")
        check_inertia(b.inertia, "base.inertia")
        if not self.arms:
            raise ValidationError("arm: model needs at least one arm")
        if len(b.arm_mounts) != len(self.arms):
            raise ValidationError(f"base.mounts: {len(b.arm_mounts)} mounts for "
                                  f"{len(self.arms)} arms")
        roles = [a.role for a in self.arms]
        for i, arm in enumerate(self.arms):
            where = f"arm[{i}]"
            if arm.role not in ROLES:
                raise ValidationError(f"{where}.role: {arm.role!r} not in {ROLES}")
            if arm.dof < 1:
                raise ValidationError(f"{where}: arm needs at least one joint")
            if len(arm.links) != len(arm.joints):
                raise ValidationError(f"{where}: {len(arm.joints)} joints but "
                                      f"{len(arm.links)} links")
            rot = np.array(arm.mount_rotation)
            if (np.abs(rot @ rot.T - np.eye(3)).max() > 1e-12
                    or np.linalg.det(rot) < 0):
                raise ValidationError(f"{where}.mount_rotation: not a proper rotation")
            for j, (joint, link) in enumerate(zip(arm.joints, arm.links)):
                jw = f"{where}.joint[{j}]"
                lw = f"{where}.link[{j}]"
                axis = np.array(joint.axis)
                _check_vec(axis, f"{jw}.axis")
                _check_vec(np.array(joint.mount_offset), f"{jw}.offset")
                if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
                    raise ValidationError(f"{jw}.axis: must be unit length, "
                                          f"|axis| = {np.linalg.norm(axis)!r}")
                if not (np.isfinite(link.mass) and link.mass > 0):
                    raise ValidationError(f"{lw}.mass: must be > 0, got {link.mass}")
                if not (np.isfinite(link.length) and link.length >= 0):
                    raise ValidationError(f"{lw}.length: must be >= 0, got {link.length}")
                _check_vec(np.array(link.com_offset), f"{lw}.com")
                check_inertia(link.inertia, f"{lw}.inertia")
            if arm.joints[0].mount_offset != b.arm_mounts[i]:
                raise ValidationError(f"{where}.joint[0].offset: must equal "
                                      f"base.mounts[{i}] {b.arm_mounts[i]}")
        if roles.count("mission") != 1:
            raise ValidationError(f"arm.role: exactly one mission arm required, "
                                  f"got {roles.count('mission')}")
        if roles.count("balance") > 1:
            raise ValidationError("arm.role: at most one balance arm allowed")

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def n_joints(self) -> int:
        return sum(a.dof for a in self.arms)

    @property
    def dof(self) -> int:
        """System DOF: 6 for the base plus one per joint."""
        return 6 + self.n_joints

    @property
    def arm_roles(self) -> tuple[str, ...]:
        return tuple(a.role for a in self.arms)

    @property
    def total_mass(self) -> float:
        return self.base.mass + sum(l.mass for a in self.arms for l in a.links)

    @cached_property
    def arm_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for arm in self.arms:
            out.append(slice(start, start + arm.dof))
            start += arm.dof
        return tuple(out)

    def arm_index(self, role: str) -> int | None:
        for i, arm in enumerate(self.arms):
            if arm.role == role:
                return i
        return None

    @property
    def mission_arm(self) -> int:
        return self.arm_index("mission")

    @property
    def balance_arm(self) -> int | None:
        return self.arm_index("balance")

    @cached_property
    def arrays(self) -> ModelArrays:
        parent, axis, offset, mrot, com, mass, inertia = [], [], [], [], [], [], []
        k = 0
        for arm in self.arms:
            for j, (joint, link) in enumerate(zip(arm.joints, arm.links)):
                parent.append(-1 if j == 0 else k - 1)
                axis.append(joint.axis)
                offset.append(joint.mount_offset)
                mrot.append(arm.mount_rotation if j == 0 else _IDENTITY)
                com.append(link.com_offset)
                mass.append(link.mass)
                inertia.append(link.inertia)
                k += 1
        arrs = ModelArrays(
            parent=np.array(parent, dtype=np.int64),
            axis=np.array(axis, dtype=float),
            offset=np.array(offset, dtype=float),
            mount_rot=np.array(mrot, dtype=float),
            com=np.array(com, dtype=float),
            link_mass=np.array(mass, dtype=float),
            link_inertia=np.array(inertia, dtype=float),
            base_mass=float(self.base.mass),
            base_inertia=np.array(self.base.inertia, dtype=float),
        )
        for a in arrs:
            if isinstance(a, np.ndarray):
                a.setflags(write=False)
        return arrs

    @cached_property
    def tips(self) -> np.ndarray:
        """End-effector position in each arm's last-link frame, shape (n_arms, 3)."""
        return np.array([[a.links[-1].length, 0.0, 0.0] for a in self.arms])

    @cached_property
    def last_links(self) -> tuple[int, ...]:
        return tuple(s.stop - 1 for s in self.arm_slices)

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(dumps_model(self).encode()).hexdigest()

    def scaled_base(self, factor: float) -> "RobotModel":
        """Copy with base mass and inertia multiplied by ``factor``."""
        b = self.base
        base = BaseParams(b.mass * factor, np.array(b.inertia) * factor, b.arm_mounts)
        return RobotModel(base, self.arms, self.name)


# Reference two-arm robot parameters, as listed. Inertias in kg m^2.
TABLE1 = {
    "base": {"mass": 300.0, "length": 1.0, "inertia": (50.0, 50.0, 50.0)},
    "links": [
        {"mass": 5.0, "length": 0.5, "inertia": (0.4187, 0.4187, 0.16)},
        {"mass": 5.0, "length": 0.5, "inertia": (0.004, 0.1062, 0.4187)},
        {"mass": 5.5, "length": 0.5, "inertia": (0.0044, 0.1168, 0.4606)},
    ],
    "link_radius": 0.04,
}


def _table1_centroidal(link: dict) -> tuple[float, float, float]:
    ixx, iyy, izz = link["inertia"]
    if izz > ixx + iyy:
        # listed about the proximal joint, not the centroid
        izz = izz - link["mass"] * (0.5 * link["length"]) ** 2
    return (ixx, iyy, izz)


def table1_model() -> RobotModel:
    """The reference two-arm robot (300 kg base, two 3R arms).

    Cubic 300 kg base with two identical 3R arms mounted on opposite faces
    (+/-0.5 m along base y). Joint 1 rotates about base z, joints 2-3 about
    the local y-axis; links point outward along the mount axis at zero angle.
    """
    t = TABLE1
    half = 0.5 * t["base"]["length"]
    mounts = ((0.0, half, 0.0), (0.0, -half, 0.0))
    # link x-axis along +y (mission) / -y (balance)
    rotations = (
        ((0.0, -1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
        ((0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    )
    arms = []
    for mount, rot, role in zip(mounts, rotations, ("mission", "balance")):
        joints, links = [], []
        for j, row in enumerate(t["links"]):
            axis = (0.0, 0.0, 1.0) if j == 0 else (0.0, 1.0, 0.0)
            offset = mount if j == 0 else (t["links"][j - 1]["length"], 0.0, 0.0)
            joints.append(JointParams(axis, offset))
            links.append(LinkParams(
                mass=row["mass"], length=row["length"],
                com_offset=(0.5 * row["length"], 0.0, 0.0),
                inertia=_table1_centroidal(row),
            ))
        arms.append(ArmChain(tuple(joints), tuple(links), role, rot))
    base = BaseParams(t["base"]["mass"], t["base"]["inertia"], mounts)
    return RobotModel(base, tuple(arms), name="table1")


# ---------------------------------------------------------------------------
# model files

def _inertia_out(m: Mat3):
    arr = np.array(m)
    if np.count_nonzero(arr - np.diag(np.diag(arr))) == 0:
        return [float(v) for v in np.diag(arr)]
    return [list(r) for r in m]


def model_to_dict(model: RobotModel) -> dict:
    doc = {}
    if model.name:
        doc["name"] = model.name
    doc["base"] = {
        "mass": model.base.mass,
        "inertia": _inertia_out(model.base.inertia),
        "mounts": [list(m) for m in model.base.arm_mounts],
    }
    doc["arm"] = []
    for arm in model.arms:
        entry = {"role": arm.role}
        if arm.mount_rotation != _IDENTITY:
            entry["mount_rotation"] = [list(r) for r in arm.mount_rotation]
        entry["joint"] = [{"axis": list(j.axis), "offset": list(j.mount_offset)}
                          for j in arm.joints]
        entry["link"] = [{"mass": l.mass, "length": l.length, "com": list(l.com_offset),
                          "inertia": _inertia_out(l.inertia)} for l in arm.links]
        doc["arm"].append(entry)
    return doc


def dumps_model(model: RobotModel) -> str:
    return tomli_w.dumps(model_to_dict(model))


def write_model(model: RobotModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def _req(table: dict, key: str, where: str):
    if not isinstance(table, dict):
        raise ParseError(f"{where}: expected a table")
    if key not in table:
        raise ParseError(f"{where}.{key}: missing required field")
    return table[key]


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _vector(value, where: str, n: int = 3) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise ParseError(f"{where}: expected a list of {n} numbers, got {value!r}")
    return tuple(_num(v, f"{where}[{i}]") for i, v in enumerate(value))


def _matrix(value, where: str) -> Mat3:
    if isinstance(value, list) and len(value) == 3 and all(isinstance(v, list) for v in value):
        return tuple(_vector(r, f"{where}[{i}]") for i, r in enumerate(value))
    diag = _vector(value, where)
    return _mat3(diag)


def parse_toml(text: str, source: str = "<string>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None


def model_from_dict(doc: dict, source: str = "<model>") -> RobotModel:
    base_t = _req(doc, "base", source)
    mounts_raw = _req(base_t, "mounts", "base")
    if not isinstance(mounts_raw, list):
        raise ParseError("base.mounts: expected a list of 3-vectors")
    base = BaseParams(
        mass=_num(_req(base_t, "mass", "base"), "base.mass"),
        inertia=_matrix(_req(base_t, "inertia", "base"), "base.inertia"),
        arm_mounts=tuple(_vector(m, f"base.mounts[{i}]") for i, m in enumerate(mounts_raw)),
    )
    arms_raw = _req(doc, "arm", source)
    if not isinstance(arms_raw, list):
        raise ParseError("arm: expected an array of tables ([[arm]])")
    arms = []
    for i, a in enumerate(arms_raw):
        where = f"arm[{i}]"
        joints_raw = _req(a, "joint", where)
        links_raw = _req(a, "link", where)
        if not isinstance(joints_raw, list) or not isinstance(links_raw, list):
            raise ParseError(f"{where}: joint and link must be arrays of tables")
        joints = tuple(
            JointParams(_vector(_req(j, "axis", f"{where}.joint[{k}]"), f"{where}.joint[{k}].axis"),
                        _vector(_req(j, "offset", f"{where}.joint[{k}]"),
                                f"{where}.joint[{k}].offset"))
            for k, j in enumerate(joints_raw))
        links = []
        for k, l in enumerate(links_raw):
            lw = f"{where}.link[{k}]"
            links.append(LinkParams(
                mass=_num(_req(l, "mass", lw), f"{lw}.mass"),
                length=_num(_req(l, "length", lw), f"{lw}.length"),
                com_offset=_vector(_req(l, "com", lw), f"{lw}.com"),
                inertia=_matrix(_req(l, "inertia", lw), f"{lw}.inertia"),
            ))
        role = a.get("role", "passive")
        if not isinstance(role, str):
            raise ParseError(f"{where}.role: expected a string")
        rot = a.get("mount_rotation")
        rot = _IDENTITY if rot is None else _matrix(rot, f"{where}.mount_rotation")
        arms.append(ArmChain(joints, tuple(links), role, rot))
    name = doc.get("name", "")
    return RobotModel(base, tuple(arms), name=str(name))


def loads_model(text: str, source: str = "<string>") -> RobotModel:
    return model_from_dict(parse_toml(text, source), source)


def load_model(path) -> RobotModel:
    """Read and validate a model file.

    Raises
    ------
    ParseError
        Malformed TOML (message carries line/column) or a missing/mistyped field.
    ValidationError
        A physical invariant is violated; the message names the field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return loads_model(text, str(path))
