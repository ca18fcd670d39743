"""Robot description: kinematic tree, inertials, limits, actuators, coupling.

The model is loaded from a versioned YAML file (see ``configs/robot_default.yaml``
for the documented schema) and is immutable afterwards, so a single instance
can be shared by any number of concurrently stepped simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

JOINTS_PER_LEG = ("HR", "HAA", "HFE", "KFE", "FFE", "FAA")
NUM_JOINTS = 12
NUM_BODIES = 13  # torso + 6 links per leg
TOTAL_MASS_KG = 16.0
MASS_TOLERANCE_KG = 0.1


class ModelError(Exception):
    """Base error for model loading."""


class ModelParseError(ModelError):
    """The file could not be read or is not structurally valid."""


class ModelValidationError(ModelError):
    """One or more invariants are violated; ``violations`` lists them."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("model validation failed:\n  " + "\n  ".join(violations))


@dataclass(frozen=True)
class ActuatorSpec:
    """One drive-unit type; values come straight from the datasheet table."""

    name: str
    gear_ratio: float
    peak_torque: float
    sustained_torque: float
    max_speed_48v: float
    rotor_inertia: float


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: np.ndarray            # unit 3-vector, parent frame
    origin: np.ndarray          # joint position in parent frame, m
    limit_lo: float             # rad
    limit_hi: float             # rad
    velocity_limit: float       # rad/s, actuator output side
    armature: float             # kg m^2, reflected rotor inertia
    coulomb_friction: float     # Nm
    viscous_friction: float     # Nm s/rad
    actuator: str               # actuator type name


@dataclass(frozen=True)
class FootGeometry:
    """Rectangular sole with four corner contact points, in the foot frame."""

    sole_size: np.ndarray    # (2,) x-length, y-width
    sole_center: np.ndarray  # (3,)

    def corner_points(self) -> np.ndarray:
        hx, hy = 0.5 * self.sole_size
        cx, cy, cz = self.sole_center
        return np.array(
            [
                [cx + hx, cy + hy, cz],
                [cx + hx, cy - hy, cz],
                [cx - hx, cy + hy, cz],
                [cx - hx, cy - hy, cz],
            ]
        )


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    com: np.ndarray           # (3,) in link frame
    inertia: np.ndarray       # (3,3) about the com, link frame
    parent_joint: str | None  # None for the base
    geometry: FootGeometry | None = None


@dataclass(frozen=True)
class TransmissionCoupling:
    """Linear actuator-to-joint map for one (KFE, FFE) pair: q_joint = T @ q_act."""

    joints: tuple[str, str]
    matrix: np.ndarray  # (2,2)


@dataclass(frozen=True)
class RobotModel:
    name: str
    base: LinkSpec
    links: tuple[LinkSpec, ...]          # 12 leg links, left leg then right
    joints: tuple[JointSpec, ...]        # 12, order HR..FAA per leg
    actuators: dict[str, ActuatorSpec]   # joint name -> actuator
    actuator_types: dict[str, ActuatorSpec]
    couplings: tuple[TransmissionCoupling, ...]
    nominal_pose: np.ndarray             # (12,) rad
    standing_height: float
    torso_top_offset: float
    foot_link_names: tuple[str, str] = ("left_foot", "right_foot")
    _arrays: "ModelArrays | None" = field(default=None, compare=False, repr=False)

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def num_bodies(self) -> int:
        return len(self.links) + 1

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"unknown joint {name!r}")

    def joint(self, name: str) -> JointSpec:
        return self.joints[self.joint_index(name)]

    def total_mass(self) -> float:
        return self.base.mass + sum(l.mass for l in self.links)

    def arrays(self) -> "ModelArrays":
        """Dense array form consumed by the simulation kernels (cached)."""
        if self._arrays is None:
            object.__setattr__(self, "_arrays", compile_arrays(self))
        return self._arrays


@dataclass(frozen=True)
class ModelArrays:
    """Plain ndarray view of the model for the numba kernels.

    Body 0 is the torso; joint j drives body j+1. All arrays are read-only.
    """

    parent: np.ndarray        # (13,) int64; -1 for the base
    joint_axis: np.ndarray    # (12,3)
    joint_origin: np.ndarray  # (12,3) in parent frame
    mass: np.ndarray          # (13,)
    com: np.ndarray           # (13,3)
    inertia_com: np.ndarray   # (13,3,3) about the com
    mcom: np.ndarray          # (13,3) mass * com (first moment)
    inertia_origin: np.ndarray  # (13,3,3) about the body origin
    armature: np.ndarray      # (12,)
    coulomb: np.ndarray       # (12,)
    viscous: np.ndarray       # (12,)
    limit_lo: np.ndarray      # (12,)
    limit_hi: np.ndarray      # (12,)
    velocity_limit: np.ndarray  # (12,)
    peak_torque: np.ndarray   # (12,) actuator-space clamp per joint's drive
    coupling_pairs: np.ndarray  # (2,2) int64 joint indices (KFE, FFE) per leg
    coupling_T: np.ndarray      # (2,2)
    coupling_Tinv: np.ndarray   # (2,2)
    foot_body: np.ndarray     # (2,) int64 body indices
    foot_corners: np.ndarray  # (4,3) foot-frame corner points
    foot_center: np.ndarray   # (3,) sole center, foot frame
    q_nominal: np.ndarray     # (12,)


def reflected_armature(spec: ActuatorSpec) -> float:
    """Joint-space inertia contributed by the rotor: rotor inertia x ratio^2."""
    return spec.rotor_inertia * spec.gear_ratio**2


def actuator_for_joint(model: RobotModel, joint: str) -> ActuatorSpec:
    if joint not in model.actuators:
        raise KeyError(f"unknown joint {joint!r}")
    return model.actuators[joint]


def couple_positions(c: TransmissionCoupling, q_act: np.ndarray) -> np.ndarray:
    """Actuator positions to joint positions: q_joint = T @ q_act."""
    return c.matrix @ np.asarray(q_act, dtype=float)


def uncouple_positions(c: TransmissionCoupling, q_joint: np.ndarray) -> np.ndarray:
    """Joint positions back to actuator positions (T is invertible)."""
    return np.linalg.solve(c.matrix, np.asarray(q_joint, dtype=float))


def couple_torques(c: TransmissionCoupling, tau_joint: np.ndarray) -> np.ndarray:
    """Joint torques to actuator torques: tau_act = T^T @ tau_joint.

    This is the virtual-work companion of ``couple_positions``, so
    tau_act . qdot_act == tau_joint . qdot_joint for any motion.
    """
    return c.matrix.T @ np.asarray(tau_joint, dtype=float)


def uncouple_torques(c: TransmissionCoupling, tau_act: np.ndarray) -> np.ndarray:
    """Actuator torques to joint torques: tau_joint = T^-T @ tau_act."""
    return np.linalg.solve(c.matrix.T, np.asarray(tau_act, dtype=float))


def interval_coverage(span: tuple[float, float], reference: tuple[float, float]) -> float:
    """Fraction of ``reference`` covered by ``span`` (intersection / reference length)."""
    lo = max(span[0], reference[0])
    hi = min(span[1], reference[1])
    return max(0.0, hi - lo) / (reference[1] - reference[0])


def _as_vec(x, n, path, errors) -> np.ndarray:
    try:
        v = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{path}: expected a {n}-vector of numbers, got {x!r}")
        return np.zeros(n)
    if v.shape != (n,):
        errors.append(f"{path}: expected shape ({n},), got {v.shape}")
        return np.zeros(n)
    return v


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=a.dtype)
    a.flags.writeable = False
    return a


def load_model(path: str | Path) -> RobotModel:
    """Load and validate a robot description file.

    Raises ModelParseError for unreadable/ill-formed files and
    ModelValidationError (listing every violated constraint with its field
    path) when the description breaks a model invariant.
    """
    path = Path(path)
    if not path.exists():
        raise ModelParseError(f"model file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ModelParseError(f"could not parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ModelParseError(f"{path}: top level must be a mapping")
    return model_from_dict(raw)


def model_from_dict(raw: dict) -> RobotModel:
    """Build a RobotModel from an already-parsed description dict."""
    fmt = raw.get("format")
    if fmt != "stridesim/robot-v1":
        raise ModelParseError(f"format: unsupported value {fmt!r} (expected stridesim/robot-v1)")

    errors: list[str] = []

    # Actuator table.
    actuator_types: dict[str, ActuatorSpec] = {}
    for name, a in (raw.get("actuators") or {}).items():
        spec = ActuatorSpec(
            name=str(name),
            gear_ratio=float(a.get("gear_ratio", 0.0)),
            peak_torque=float(a.get("peak_torque", 0.0)),
            sustained_torque=float(a.get("sustained_torque", 0.0)),
            max_speed_48v=float(a.get("max_speed_48v", 0.0)),
            rotor_inertia=float(a.get("rotor_inertia", 0.0)),
        )
        p = f"actuators.{name}"
        if spec.gear_ratio <= 0:
            errors.append(f"{p}.gear_ratio: must be > 0")
        if spec.rotor_inertia < 0:
            errors.append(f"{p}.rotor_inertia: must be >= 0")
        if not spec.sustained_torque < spec.peak_torque:
            errors.append(f"{p}.sustained_torque: must be < peak_torque")
        actuator_types[spec.name] = spec

    # Base link.
    braw = raw.get("base") or {}
    base = _parse_link(braw, "base", parent_joint=None, errors=errors)

    # Legs: the chain is instantiated for the left side as written and for the
    # right side with joint-origin and com y-components mirrored.
    chain = (raw.get("leg") or {}).get("chain") or []
    if len(chain) != 6:
        errors.append(f"leg.chain: expected 6 links, got {len(chain)}")
    links: list[LinkSpec] = []
    joints: list[JointSpec] = []
    joint_actuators: dict[str, ActuatorSpec] = {}
    feet_raw = raw.get("feet") or {}
    foot_link = feet_raw.get("link", "foot")
    geometry = FootGeometry(
        sole_size=_readonly(_as_vec(feet_raw.get("sole_size", [0.1, 0.06]), 2, "feet.sole_size", errors)),
        sole_center=_readonly(_as_vec(feet_raw.get("sole_center", [0, 0, 0]), 3, "feet.sole_center", errors)),
    )
    for side, mirror in (("left", 1.0), ("right", -1.0)):
        for ci, entry in enumerate(chain):
            p = f"leg.chain[{ci}]"
            jraw = entry.get("joint") or {}
            jname = jraw.get("name", f"j{ci}")
            if ci < len(JOINTS_PER_LEG) and jname != JOINTS_PER_LEG[ci]:
                errors.append(f"{p}.joint.name: expected {JOINTS_PER_LEG[ci]!r} at this position, got {jname!r}")
            act_name = str(jraw.get("actuator", ""))
            if act_name not in actuator_types:
                errors.append(f"{p}.joint.actuator: unknown actuator type {act_name!r}")
                act = ActuatorSpec(act_name, 1.0, 1.0, 0.5, 1.0, 0.0)
            else:
                act = actuator_types[act_name]
            limits = jraw.get("limits_deg", [0.0, 0.0])
            lim = _as_vec(limits, 2, f"{p}.joint.limits_deg", errors)
            lo, hi = math.radians(lim[0]), math.radians(lim[1])
            if not lo < hi:
                errors.append(f"{p}.joint.limits_deg: empty interval {limits}")
            axis = _as_vec(jraw.get("axis", [0, 0, 1]), 3, f"{p}.joint.axis", errors)
            norm = np.linalg.norm(axis)
            if abs(norm - 1.0) > 1e-6:
                errors.append(f"{p}.joint.axis: must be a unit vector (|axis|={norm:.6g})")
            else:
                axis = axis / norm
            origin = _as_vec(jraw.get("origin", [0, 0, 0]), 3, f"{p}.joint.origin", errors).copy()
            origin[1] *= mirror
            full_jname = f"{side}_{jname}"
            joint = JointSpec(
                name=full_jname,
                axis=_readonly(axis),
                origin=_readonly(origin),
                limit_lo=lo,
                limit_hi=hi,
                velocity_limit=act.max_speed_48v,
                armature=reflected_armature(act),
                coulomb_friction=float(jraw.get("coulomb_friction", 0.0)),
                viscous_friction=float(jraw.get("viscous_friction", 0.0)),
                actuator=act_name,
            )
            joints.append(joint)
            joint_actuators[full_jname] = act

            lname = entry.get("link", f"link{ci}")
            link = _parse_link(entry, p, parent_joint=full_jname, errors=errors, mirror=mirror, name=f"{side}_{lname}")
            if lname == foot_link:
                link = LinkSpec(link.name, link.mass, link.com, link.inertia, link.parent_joint, geometry)
            links.append(link)

    # Coupling.
    craw = raw.get("coupling") or {}
    T = np.asarray(craw.get("matrix", [[1.0, 0.0], [0.0, 1.0]]), dtype=float)
    if T.shape != (2, 2):
        errors.append(f"coupling.matrix: expected 2x2, got {T.shape}")
        T = np.eye(2)
    if abs(np.linalg.det(T)) < 1e-12:
        errors.append("coupling.matrix: must be invertible (det != 0)")
    cj = craw.get("joints", ["KFE", "FFE"])
    couplings = tuple(
        TransmissionCoupling(joints=(f"{side}_{cj[0]}", f"{side}_{cj[1]}"), matrix=_readonly(T.copy()))
        for side in ("left", "right")
    )

    pose_raw = raw.get("nominal_pose") or {}
    nominal = np.zeros(len(joints))
    for i, j in enumerate(joints):
        short = j.name.split("_", 1)[1]
        nominal[i] = float(pose_raw.get(short, 0.0))
        if not (j.limit_lo <= nominal[i] <= j.limit_hi):
            errors.append(f"nominal_pose.{short}: {nominal[i]:.4g} outside joint limits")

    model = RobotModel(
        name=str(raw.get("name", "robot")),
        base=base,
        links=tuple(links),
        joints=tuple(joints),
        actuators=joint_actuators,
        actuator_types=actuator_types,
        couplings=couplings,
        nominal_pose=_readonly(nominal),
        standing_height=float(raw.get("standing_height", 0.0)),
        torso_top_offset=float(raw.get("torso_top_offset", 0.0)),
        foot_link_names=(f"left_{foot_link}", f"right_{foot_link}"),
    )

    errors.extend(_validate(model))
    if errors:
        raise ModelValidationError(errors)
    return model


def _parse_link(entry: dict, path: str, parent_joint, errors, mirror=1.0, name=None) -> LinkSpec:
    mass = float(entry.get("mass", 0.0))
    if not mass > 0:
        errors.append(f"{path}.mass: must be > 0 (got {mass})")
    com = _as_vec(entry.get("com", [0, 0, 0]), 3, f"{path}.com", errors).copy()
    com[1] *= mirror
    if "inertia_diag" in entry:
        d = _as_vec(entry["inertia_diag"], 3, f"{path}.inertia_diag", errors)
        inertia = np.diag(d)
    else:
        inertia = np.asarray(entry.get("inertia", np.eye(3) * 1e-4), dtype=float)
    if inertia.shape != (3, 3):
        errors.append(f"{path}.inertia: expected 3x3, got {inertia.shape}")
        inertia = np.eye(3) * 1e-4
    if np.max(np.abs(inertia - inertia.T)) > 1e-12:
        errors.append(f"{path}.inertia: must be symmetric")
    else:
        try:
            np.linalg.cholesky(inertia)
        except np.linalg.LinAlgError:
            errors.append(f"{path}.inertia: must be positive definite")
    return LinkSpec(
        name=name or str(entry.get("name", entry.get("link", path))),
        mass=mass,
        com=_readonly(com),
        inertia=_readonly(inertia),
        parent_joint=parent_joint,
    )


def _validate(model: RobotModel) -> list[str]:
    errors = []
    if len(model.joints) != NUM_JOINTS:
        errors.append(f"joints: expected exactly {NUM_JOINTS} actuated joints, got {len(model.joints)}")
    names = [j.name for j in model.joints]
    if len(set(names)) != len(names):
        errors.append("joints: names must be unique")
    total = model.total_mass()
    if abs(total - TOTAL_MASS_KG) > MASS_TOLERANCE_KG:
        errors.append(f"links: total mass {total:.3f} kg outside {TOTAL_MASS_KG} +- {MASS_TOLERANCE_KG} kg")
    for fname in model.foot_link_names:
        foot = next((l for l in model.links if l.name == fname), None)
        if foot is None:
            errors.append(f"links: missing foot link {fname!r}")
        else:
            if foot.geometry is None:
                errors.append(f"links.{fname}.geometry: feet need contact geometry")
            if not foot.mass < model.base.mass:
                errors.append(f"links.{fname}.mass: foot mass must be < torso mass")
    for j in model.joints:
        if j.armature < 0:
            errors.append(f"joints.{j.name}.armature: must be >= 0")
    for c in model.couplings:
        if abs(np.linalg.det(c.matrix)) < 1e-12:
            errors.append(f"coupling.{c.joints}: matrix not invertible")
    return errors


def compile_arrays(model: RobotModel) -> ModelArrays:
    """Flatten the model into contiguous arrays for the simulation kernels."""
    n = model.num_joints
    parent = np.full(NUM_BODIES, -1, dtype=np.int64)
    joint_axis = np.zeros((n, 3))
    joint_origin = np.zeros((n, 3))
    mass = np.zeros(NUM_BODIES)
    com = np.zeros((NUM_BODIES, 3))
    inertia_com = np.zeros((NUM_BODIES, 3, 3))

    mass[0] = model.base.mass
    com[0] = model.base.com
    inertia_com[0] = model.base.inertia

    # Body j+1 is driven by joint j; each leg chains off the torso.
    for j, (joint, link) in enumerate(zip(model.joints, model.links)):
        b = j + 1
        within_leg = j % len(JOINTS_PER_LEG)
        parent[b] = 0 if within_leg == 0 else b - 1
        joint_axis[j] = joint.axis
        joint_origin[j] = joint.origin
        mass[b] = link.mass
        com[b] = link.com
        inertia_com[b] = link.inertia

    armature = np.array([j.armature for j in model.joints])
    coulomb = np.array([j.coulomb_friction for j in model.joints])
    viscous = np.array([j.viscous_friction for j in model.joints])
    limit_lo = np.array([j.limit_lo for j in model.joints])
    limit_hi = np.array([j.limit_hi for j in model.joints])
    velocity_limit = np.array([j.velocity_limit for j in model.joints])
    peak = np.array([model.actuators[j.name].peak_torque for j in model.joints])

    pairs = np.zeros((len(model.couplings), 2), dtype=np.int64)
    for k, c in enumerate(model.couplings):
        pairs[k, 0] = model.joint_index(c.joints[0])
        pairs[k, 1] = model.joint_index(c.joints[1])
    T = model.couplings[0].matrix

    foot_body = np.array(
        [model.links.index(next(l for l in model.links if l.name == f)) + 1 for f in model.foot_link_names],
        dtype=np.int64,
    )
    foot_geom = next(l for l in model.links if l.name == model.foot_link_names[0]).geometry

    mcom = mass[:, None] * com
    inertia_origin = np.empty_like(inertia_com)
    for b in range(NUM_BODIES):
        c = com[b]
        inertia_origin[b] = inertia_com[b] + mass[b] * (np.dot(c, c) * np.eye(3) - np.outer(c, c))

    return ModelArrays(
        parent=_readonly(parent),
        joint_axis=_readonly(joint_axis),
        joint_origin=_readonly(joint_origin),
        mass=_readonly(mass),
        com=_readonly(com),
        inertia_com=_readonly(inertia_com),
        mcom=_readonly(mcom),
        inertia_origin=_readonly(inertia_origin),
        armature=_readonly(armature),
        coulomb=_readonly(coulomb),
        viscous=_readonly(viscous),
        limit_lo=_readonly(limit_lo),
        limit_hi=_readonly(limit_hi),
        velocity_limit=_readonly(velocity_limit),
        peak_torque=_readonly(peak),
        coupling_pairs=_readonly(pairs),
        coupling_T=_readonly(np.ascontiguousarray(T)),
        coupling_Tinv=_readonly(np.linalg.inv(T)),
        foot_body=_readonly(foot_body),
        foot_corners=_readonly(foot_geom.corner_points()),
        foot_center=_readonly(np.asarray(foot_geom.sole_center)),
        q_nominal=_readonly(model.nominal_pose.copy()),
    )


def default_model_path() -> Path:
    """Path of the shipped robot description."""
    here = Path(__file__).resolve()
    for up in here.parents:
        candidate = up / "configs" / "robot_default.yaml"
        if candidate.exists():
            return candidate
    raise FileNotFoundError("configs/robot_default.yaml not found relative to package")


def load_default_model() -> RobotModel:
    return load_model(default_model_path())
