"""Articulated rigid-body dynamics for one robot: mass matrix with armature,
bias forces, penalty contact with Coulomb friction, semi-implicit stepping.

State is kept in plain float64 arrays; the base twist is stored in base
coordinates internally (world-frame accessors are provided). All heavy lifting
happens in the shared numba kernels, so simulations stepped through this
module and through the vectorized environment are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from . import kinematics, terrain as terrain_mod
from .model import RobotModel
from .terrain import TerrainField

DEFAULT_GRAVITY = 9.81
SUB_DT = 1.0 / 800.0      # physics sub-step
DECIMATION = 16           # sub-steps per policy step (50 Hz policy)


class DivergenceError(RuntimeError):
    """A state quantity went non-finite during stepping."""

    def __init__(self, quantity: str, value):
        self.quantity = quantity
        self.value = value
        super().__init__(f"simulation diverged: {quantity} = {value}")


@dataclass
class ContactParams:
    """Penalty-contact and joint-limit gains (shared by all environments)."""

    k_n: float = 5.0e4     # normal spring, N/m per contact point
    d_n: float = 200.0     # normal damping, Ns/m (capped by the spring term);
    #                        500 sustains a micro-chatter limit cycle at rest
    k_t: float = 5.0e3     # tangential anchor spring, N/m
    d_t: float = 30.0      # tangential damping, Ns/m; larger values are
    #                        unstable at dt=1/800 on the light feet and the
    #                        resulting micro-oscillation ratchets the anchors
    k_lim: float = 100.0   # joint-limit penalty spring, Nm/rad
    d_lim: float = 2.0     # joint-limit damping, Nms/rad


@dataclass
class SimState:
    """Physical state of one robot plus persistent contact bookkeeping.

    `u` is the generalized velocity [omega_base (base frame), v_base (base
    frame), qdot]; use `base_lin_vel_world` / `base_ang_vel` for the
    conventional quantities. Time is tracked as an integer sub-step count so
    policy periods are exact.
    """

    base_pos: np.ndarray
    base_quat: np.ndarray
    u: np.ndarray
    q: np.ndarray
    t_sub: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((8, 3)))
    anchor_active: np.ndarray = field(default_factory=lambda: np.zeros(8, dtype=np.uint8))
    air_time: np.ndarray = field(default_factory=lambda: np.zeros(2))
    was_contact: np.ndarray = field(default_factory=lambda: np.ones(2, dtype=np.uint8))
    limit_violations: int = 0

    @property
    def time(self) -> float:
        return self.t_sub[0] / 800.0

    @property
    def qd(self) -> np.ndarray:
        return self.u[6:]

    @property
    def rotation(self) -> np.ndarray:
        return kinematics.quat_to_rot(self.base_quat)

    @property
    def base_ang_vel(self) -> np.ndarray:
        """Base angular velocity, base frame."""
        return self.u[0:3]

    @property
    def base_lin_vel_world(self) -> np.ndarray:
        return self.rotation @ self.u[3:6]

    @property
    def base_lin_vel_base(self) -> np.ndarray:
        return self.u[3:6]

    @property
    def projected_gravity(self) -> np.ndarray:
        """Unit world down-direction expressed in the base frame."""
        return self.rotation.T @ np.array([0.0, 0.0, -1.0])

    def copy(self) -> "SimState":
        return SimState(
            base_pos=self.base_pos.copy(),
            base_quat=self.base_quat.copy(),
            u=self.u.copy(),
            q=self.q.copy(),
            t_sub=self.t_sub.copy(),
            anchors=self.anchors.copy(),
            anchor_active=self.anchor_active.copy(),
            air_time=self.air_time.copy(),
            was_contact=self.was_contact.copy(),
            limit_violations=self.limit_violations,
        )


@dataclass(frozen=True)
class ContactPoint:
    point: np.ndarray        # world position, m
    normal: np.ndarray       # world unit normal
    penetration: float       # m, > 0 inside the ground
    normal_force: float      # N
    tangential_force: np.ndarray  # (2,) in the tangent basis


@dataclass(frozen=True)
class ContactReport:
    points: tuple[tuple[ContactPoint, ...], tuple[ContactPoint, ...]]  # per foot
    normal_force: np.ndarray   # (2,) per-foot aggregate, N
    in_contact: np.ndarray     # (2,) bool, aggregate force > 1 N

    def all_points(self) -> list[ContactPoint]:
        return [p for foot in self.points for p in foot]


def standing_pose_height(model: RobotModel, q=None, terrain: TerrainField | None = None, xy=(0.0, 0.0)) -> float:
    """Base height that rests the lowest sole corner exactly on the terrain."""
    if q is None:
        q = model.nominal_pose
    if terrain is None:
        terrain = terrain_mod.flat()
    a = model.arrays()
    R_w, p_w, _ = kinematics.fk(model, np.array([xy[0], xy[1], 0.0]), np.array([1.0, 0, 0, 0]), np.zeros(18), q)
    clearance = np.inf
    for fb in a.foot_body:
        for corner in a.foot_corners:
            pt = p_w[fb] + R_w[fb] @ corner
            clearance = min(clearance, pt[2] - terrain.height(pt[0], pt[1]))
    return -clearance


def default_state(model: RobotModel, q=None, terrain: TerrainField | None = None, xy=(0.0, 0.0), settle: float = 0.0) -> SimState:
    """Standing state at rest; `settle` lifts the base by that many meters."""
    if q is None:
        q = model.nominal_pose
    z = standing_pose_height(model, q, terrain, xy) + settle
    return SimState(
        base_pos=np.array([xy[0], xy[1], z]),
        base_quat=np.array([1.0, 0.0, 0.0, 0.0]),
        u=np.zeros(K.NV),
        q=np.asarray(q, dtype=float).copy(),
    )


def mass_matrix(model: RobotModel, state: SimState, include_armature: bool = True) -> np.ndarray:
    """18x18 composite-rigid-body mass matrix, actuated diagonal incremented by
    each joint's reflected armature."""
    a = model.arrays()
    M = np.empty((K.NV, K.NV))
    armature = a.armature if include_armature else np.zeros(K.NJ)
    K.mass_matrix_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        a.mass, _hC(a), _IoC(a), armature,
        state.base_quat, state.q, M,
    )
    return M


def nonlinear_effects(model: RobotModel, state: SimState, gravity: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Bias generalized forces h(q, u): Coriolis, centrifugal, and gravity."""
    a = model.arrays()
    h = np.empty(K.NV)
    K.bias_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        a.mass, _hC(a), _IoC(a),
        state.base_pos, state.base_quat, state.u, state.q, gravity, h,
    )
    return h


def point_force_wrench(model: RobotModel, state: SimState, body_name: str, point_local, force_world) -> tuple[str, np.ndarray]:
    """World wrench at the body origin equivalent to a force at a body point."""
    b = kinematics.body_index(model, body_name)
    R_w, p_w, _ = kinematics.fk(model, state.base_pos, state.base_quat, state.u, state.q)
    arm = R_w[b] @ np.asarray(point_local, float)
    f = np.asarray(force_world, float)
    return body_name, np.concatenate([np.cross(arm, f), f])


def _ext_array(model: RobotModel, external_wrenches) -> tuple[np.ndarray, int]:
    ext = np.zeros((K.NB, 6))
    if not external_wrenches:
        return ext, 0
    for name, w in dict(external_wrenches).items():
        ext[kinematics.body_index(model, name)] += np.asarray(w, float)
    return ext, 1


def step(
    model: RobotModel,
    state: SimState,
    joint_torques: np.ndarray,
    external_wrenches=None,
    terrain: TerrainField | None = None,
    dt: float = SUB_DT,
    params: ContactParams | None = None,
    gravity: float = DEFAULT_GRAVITY,
    base_locked: bool = False,
    fric_damping: np.ndarray | None = None,
) -> SimState:
    """Advance one physics sub-step with the given (already saturated) torques.

    `fric_damping` is the linearized slope of any velocity-dependent torque in
    `joint_torques` (from actuation.apply); the integrator treats it
    implicitly so stiff friction models stay stable. Returns a new state;
    raises DivergenceError if the state goes non-finite.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must be in (0, 0.01], got {dt}")
    if terrain is None:
        terrain = terrain_mod.flat()
    if params is None:
        params = ContactParams()
    a = model.arrays()
    ext, has_ext = _ext_array(model, external_wrenches)
    new = state.copy()
    corner_force_w = np.empty((2, 4, 3))
    corner_pen = np.empty((2, 4))
    foot_fn = np.empty(2)
    foot_slip = np.empty(2)
    tau = np.ascontiguousarray(joint_torques, dtype=float)
    if tau.shape != (K.NJ,):
        raise ValueError(f"joint_torques must have shape ({K.NJ},)")
    fd = np.zeros(K.NJ) if fric_damping is None else np.ascontiguousarray(fric_damping, dtype=float)
    ok, clamps = K.substep_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        a.mass, _hC(a), _IoC(a), a.armature,
        a.limit_lo, a.limit_hi,
        new.base_pos, new.base_quat, new.u, new.q, new.t_sub,
        tau, fd, ext, has_ext,
        terrain.kind_id, terrain.params, terrain.friction, terrain.restitution,
        params.k_n, params.d_n, params.k_t, params.d_t, params.k_lim, params.d_lim,
        a.foot_body, a.foot_corners, a.foot_center,
        new.anchors, new.anchor_active,
        dt, gravity, 1 if base_locked else 0,
        corner_force_w, corner_pen, foot_fn, foot_slip,
    )
    new.limit_violations += int(clamps)
    if not ok:
        bad = new.u if not np.all(np.isfinite(new.u)) else new.base_pos
        raise DivergenceError("generalized velocity" if bad is new.u else "base position", bad.copy())
    return new


def accel_details(
    model: RobotModel,
    state: SimState,
    joint_torques: np.ndarray,
    external_wrenches=None,
    terrain: TerrainField | None = None,
    params: ContactParams | None = None,
    gravity: float = DEFAULT_GRAVITY,
    base_locked: bool = False,
):
    """Forward dynamics without integration.

    Returns (udot, M, h, tau_gen) where tau_gen already contains actuation,
    joint-limit penalties, contact, and external wrenches, so
    M @ udot + h == tau_gen up to solver precision.
    """
    if terrain is None:
        terrain = terrain_mod.flat()
    if params is None:
        params = ContactParams()
    a = model.arrays()
    ext, has_ext = _ext_array(model, external_wrenches)
    M = np.empty((K.NV, K.NV))
    h = np.empty(K.NV)
    tau_gen = np.empty(K.NV)
    udot = np.zeros(K.NV)
    ok = K.accel_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        a.mass, _hC(a), _IoC(a), a.armature,
        a.limit_lo, a.limit_hi,
        state.base_pos, state.base_quat, state.u, state.q,
        np.ascontiguousarray(joint_torques, dtype=float), ext, has_ext,
        terrain.kind_id, terrain.params, terrain.friction, terrain.restitution,
        params.k_n, params.d_n, params.k_t, params.d_t, params.k_lim, params.d_lim,
        a.foot_body, a.foot_corners, a.foot_center,
        state.anchors.copy(), state.anchor_active.copy(),
        gravity, 1 if base_locked else 0,
        M, h, tau_gen, udot,
    )
    if not ok:
        raise DivergenceError("mass matrix factorization", state.q.copy())
    return udot, M, h, tau_gen


def contact_state(model: RobotModel, state: SimState, terrain: TerrainField | None = None, params: ContactParams | None = None) -> ContactReport:
    """Contact points and forces per foot at the current state (read-only)."""
    if terrain is None:
        terrain = terrain_mod.flat()
    if params is None:
        params = ContactParams()
    a = model.arrays()
    corner_force_w = np.empty((2, 4, 3))
    corner_pen = np.empty((2, 4))
    foot_fn = np.empty(2)
    foot_slip = np.empty(2)
    K.contact_eval_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        state.base_pos, state.base_quat, state.u, state.q,
        terrain.kind_id, terrain.params, terrain.friction, terrain.restitution,
        params.k_n, params.d_n, params.k_t, params.d_t,
        a.foot_body, a.foot_corners, a.foot_center,
        state.anchors.copy(), state.anchor_active.copy(),
        corner_force_w, corner_pen, foot_fn, foot_slip,
    )
    R_w, p_w, _ = kinematics.fk(model, state.base_pos, state.base_quat, state.u, state.q)
    feet: list[tuple[ContactPoint, ...]] = []
    for side in range(2):
        fb = a.foot_body[side]
        pts = []
        for ci in range(4):
            pen = corner_pen[side, ci]
            f = corner_force_w[side, ci]
            if pen <= 0.0 or not np.any(f != 0.0):
                continue
            pt_w = p_w[fb] + R_w[fb] @ a.foot_corners[ci]
            n = terrain.normal(pt_w[0], pt_w[1])
            fn = float(f @ n)
            ft_vec = f - fn * n
            t1 = np.cross([0.0, 0.0, 1.0], n)
            if np.linalg.norm(t1) < 1e-9:
                t1 = np.array([1.0, 0.0, 0.0])
            else:
                t1 /= np.linalg.norm(t1)
            t2 = np.cross(n, t1)
            pts.append(
                ContactPoint(
                    point=pt_w,
                    normal=n,
                    penetration=float(pen),
                    normal_force=fn,
                    tangential_force=np.array([ft_vec @ t1, ft_vec @ t2]),
                )
            )
        feet.append(tuple(pts))
    return ContactReport(
        points=(feet[0], feet[1]),
        normal_force=foot_fn.copy(),
        in_contact=foot_fn > 1.0,
    )


def _hC(a) -> np.ndarray:
    return a.mcom


def _IoC(a) -> np.ndarray:
    return a.inertia_origin


def body_origin_inertia(mass, com, inertia_com) -> np.ndarray:
    """Rotational inertia about each body's frame origin (parallel axis)."""
    n = len(mass)
    out = np.empty((n, 3, 3))
    for b in range(n):
        c = com[b]
        out[b] = inertia_com[b] + mass[b] * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
    return out
