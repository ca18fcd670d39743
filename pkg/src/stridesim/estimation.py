"""Contact-aided base velocity estimation and the generalized-momentum
observer for per-foot contact wrenches, both running at the physics rate.

The velocity estimator is a complementary filter: IMU acceleration
integration corrected by stance-leg kinematics whenever a foot is load
bearing. The momentum observer integrates the generalized momentum balance;
its residual converges to the external generalized forces (contact, pushes)
with first-order dynamics at the gain rate, without any force sensing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import kinematics as kin
from .model import RobotModel

GRAVITY_VEC = np.array([0.0, 0.0, -9.81])


@dataclass
class EstimatorState:
    """Complementary-filter state: fused base velocity in world coordinates."""

    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: float = 0.98          # IMU weight in the correction step
    last_update: float = 0.0

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.velocity.copy(), self.alpha, self.last_update)


def kinematic_base_velocity(model: RobotModel, state: dyn.SimState, contact_flags) -> np.ndarray | None:
    """Base velocity implied by zero world velocity of the stance-foot centers.

    Uses only quantities a real robot measures: gyro rate, joint positions and
    velocities. Returns None when no foot is flagged in contact.
    """
    flags = np.asarray(contact_flags, dtype=bool)
    if not flags.any():
        return None
    a = model.arrays()
    R_w, p_w, _ = kin.fk(model, state.base_pos, state.base_quat, state.u, state.q)
    omega_w = R_w[0] @ state.u[0:3]
    qd = state.u[6:]
    estimates = []
    for side in range(2):
        if not flags[side]:
            continue
        fb = int(a.foot_body[side])
        foot_pt = p_w[fb] + R_w[fb] @ a.foot_center
        J = kin.point_jacobian(model, R_w, p_w, fb, a.foot_center)
        v_joints = J[:, 6:] @ qd  # world foot velocity with the base held still
        estimates.append(-np.cross(omega_w, foot_pt - state.base_pos) - v_joints)
    return np.mean(estimates, axis=0)


def fuse(est: EstimatorState, kin_velocity, imu_accel, rotation, dt: float) -> EstimatorState:
    """One predict(+correct) step of the complementary filter.

    `imu_accel` is the accelerometer specific force in the base frame;
    prediction integrates the gravity-compensated world acceleration, and the
    correction blends toward the kinematic velocity when one is available.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    out = est.copy()
    a_world = rotation @ np.asarray(imu_accel, dtype=float) + GRAVITY_VEC
    out.velocity = out.velocity + a_world * dt
    if kin_velocity is not None:
        out.velocity = est.alpha * out.velocity + (1.0 - est.alpha) * np.asarray(kin_velocity, dtype=float)
    out.last_update += dt
    return out


@dataclass
class ObserverState:
    """Generalized-momentum observer internals (18 rows, or 12 when pinned)."""

    r: np.ndarray                 # residual, generalized-force units
    integral: np.ndarray
    p0: np.ndarray
    gain: np.ndarray              # K, 1/s, elementwise > 0
    prev_M: np.ndarray | None = None
    prev_h: np.ndarray | None = None

    @classmethod
    def fresh(cls, gain: float | np.ndarray = 50.0, dim: int = 18) -> "ObserverState":
        g = np.broadcast_to(np.asarray(gain, dtype=float), (dim,)).copy()
        if np.any(g <= 0):
            raise ValueError("observer gain must be > 0")
        return cls(r=np.zeros(dim), integral=np.zeros(dim), p0=np.zeros(dim), gain=g)


def observer_update(
    obs: ObserverState,
    model: RobotModel,
    state: dyn.SimState,
    tau_applied: np.ndarray,
    dt: float,
    gravity: float = 9.81,
    base_locked: bool = False,
    fric_damp: np.ndarray | None = None,
    qd_prev: np.ndarray | None = None,
) -> ObserverState:
    """Advance the momentum observer by one physics step.

    `tau_applied` is the joint torque vector the actuation actually commanded
    over the elapsed step (PD + friction). When the integrator treated a
    velocity-dependent torque slope implicitly, pass its coefficients as
    `fric_damp` with the pre-step joint velocities so the effective applied
    torque tau - C (qd_now - qd_prev) is accounted; the residual then tracks
    only the external generalized forces.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    sl = slice(6, 18) if base_locked else slice(0, 18)
    M = dyn.mass_matrix(model, state)[sl, sl]
    h = dyn.nonlinear_effects(model, state, gravity)[sl]
    u = state.u[sl]
    dim = M.shape[0]
    tau_gen = np.zeros(dim)
    tau_gen[dim - 12 :] = tau_applied
    if fric_damp is not None and qd_prev is not None:
        tau_gen[dim - 12 :] -= fric_damp * (state.u[6:] - qd_prev)

    p = M @ u
    if obs.prev_M is None:
        out = ObserverState(
            r=np.zeros(dim), integral=np.zeros(dim), p0=p, gain=obs.gain.copy(),
            prev_M=M, prev_h=h,
        )
        return out
    out = ObserverState(
        r=obs.r, integral=obs.integral.copy(), p0=obs.p0, gain=obs.gain,
        prev_M=M, prev_h=h,
    )
    # exact discrete momentum balance: p_k - p_{k-1} =
    #   dt (tau - h)|_{k-1} + (M_k - M_{k-1}) u_k + dt tau_ext
    out.integral = obs.integral + dt * (tau_gen - obs.prev_h + obs.r) + (M - obs.prev_M) @ u
    out.r = out.gain * (p - obs.p0 - out.integral)
    return out


def foot_contact_wrench(
    obs: ObserverState,
    model: RobotModel,
    state: dyn.SimState,
    min_normal_force: float = 5.0,
    reg: float = 1e-6,
):
    """Distribute the observer residual onto the feet.

    Least-squares solve of J_stack^T w = r for the stacked per-foot wrenches
    w = [torque, force] (world frame, at the foot origin). Feet whose
    estimated vertical force is below `min_normal_force` report zero.
    Returns (wrenches (2, 6), flagged) where `flagged` marks a
    rank-deficient, regularized solve.
    """
    a = model.arrays()
    R_w, p_w, _ = kin.fk(model, state.base_pos, state.base_quat, state.u, state.q)
    Js = [kin.body_jacobian(model, R_w, p_w, int(fb)) for fb in a.foot_body]
    A = np.hstack([J.T for J in Js])  # (18, 12)
    if obs.r.shape[0] == 12:  # pinned-base observer: joint rows only
        A = A[6:, :]
    AtA = A.T @ A
    s = np.linalg.svd(AtA, compute_uv=False)
    flagged = bool(s[-1] < 1e-9 * s[0])
    w = np.linalg.solve(AtA + reg * np.eye(12), A.T @ obs.r)
    wrenches = w.reshape(2, 6)
    for side in range(2):
        if wrenches[side, 5] < min_normal_force:  # world vertical force
            wrenches[side] = 0.0
    return wrenches, flagged


class StateEstimator:
    """Bundles the velocity filter and momentum observer for a running env.

    Attach to a single-environment ``LocomotionEnv`` via ``attach``; the
    estimator then advances at the physics sub-step rate through the env's
    sub-step hook. Contact flags come from the observer's own normal-force
    estimate by default (`contact_source="observer"`), or from simulator
    ground truth for debugging.
    """

    def __init__(self, model: RobotModel, alpha: float = 0.98, gain: float = 50.0,
                 contact_source: str = "observer"):
        if contact_source not in ("observer", "truth"):
            raise ValueError(f"unknown contact source {contact_source!r}")
        self.model = model
        self.contact_source = contact_source
        self.est = EstimatorState(alpha=alpha)
        self.obs = ObserverState.fresh(gain)
        self.wrenches = np.zeros((2, 6))
        self.flagged = False
        self._prev_vw: np.ndarray | None = None
        self._qd_prev: np.ndarray | None = None
        self._last_flags = np.zeros(2, dtype=bool)

    def attach(self, env) -> None:
        if env.num_envs != 1:
            raise ValueError("estimation runs against a single environment")
        env.substep_hook = self._hook
        st = env.state(0)
        self.est.velocity = st.rotation @ st.u[3:6]
        self._prev_vw = self.est.velocity.copy()

    def _hook(self, env, tau_total, foot_fn, fric_damp=None) -> None:
        st = env.state(0)
        dt = dyn.SUB_DT
        self.obs = observer_update(
            self.obs, self.model, st, tau_total, dt, env.cfg.gravity,
            fric_damp=fric_damp, qd_prev=self._qd_prev,
        )
        self._qd_prev = st.u[6:].copy()
        self.wrenches, self.flagged = foot_contact_wrench(self.obs, self.model, st)
        if self.contact_source == "observer":
            flags = self.wrenches[:, 5] >= 5.0
        else:
            flags = foot_fn > 1.0
        self._last_flags = flags
        v_w = st.rotation @ st.u[3:6]
        if self._prev_vw is None:
            self._prev_vw = v_w.copy()
        a_world = (v_w - self._prev_vw) / dt
        imu_accel = st.rotation.T @ (a_world - GRAVITY_VEC)
        kin_v = kinematic_base_velocity(self.model, st, flags)
        self.est = fuse(self.est, kin_v, imu_accel, st.rotation, dt)
        self._prev_vw = v_w
        # expose the fused estimate to the env (base frame) for the
        # estimator-fed observation ablation
        env.external_velocity[0] = st.rotation.T @ self.est.velocity

    @property
    def velocity(self) -> np.ndarray:
        return self.est.velocity

    @property
    def foot_normal_forces(self) -> np.ndarray:
        return self.wrenches[:, 5].copy()
