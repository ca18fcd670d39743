"""Action-to-torque pipeline: PD law in actuator coordinates, transmission
coupling, per-drive saturation, joint friction, optional command latency.

With latency disabled the pipeline is a pure function of (command, state); the
same compiled routine backs the vectorized environment, so both paths produce
bit-identical torques.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dynamics import SimState
from .model import ActuatorSpec, JointSpec, RobotModel, actuator_for_joint

SIGN_SMOOTHING = 0.01  # rad/s, tanh width of the Coulomb term

MIN_LATENCY = 0.0005  # s, communication-latency bounds when enabled
MAX_LATENCY = 0.002


@dataclass
class PDGains:
    kp: np.ndarray  # (12,) Nm/rad
    kd: np.ndarray  # (12,) Nm s/rad

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        # kp == 0 is allowed so the passive pipeline stays expressible
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("require kp >= 0 and kd >= 0")


@dataclass
class ActuatorCommand:
    """Desired joint positions (the policy action after mapping)."""

    q_d: np.ndarray

    def __post_init__(self):
        self.q_d = np.asarray(self.q_d, dtype=float)
        if not np.all(np.isfinite(self.q_d)):
            raise ValueError("command must be finite")


@dataclass
class LatencyModel:
    """Constant command delay, quantized to physics sub-steps."""

    delay: float  # s

    def __post_init__(self):
        if not MIN_LATENCY <= self.delay <= MAX_LATENCY:
            raise ValueError(f"delay must be within [{MIN_LATENCY}, {MAX_LATENCY}] s")

    def delay_steps(self, dt: float) -> int:
        return max(1, round(self.delay / dt))


class LatencyQueue:
    """FIFO of commands at sub-step resolution: output(t) = input(t - delay)."""

    def __init__(self, delay_steps: int, initial_cmd: np.ndarray):
        self.buf = np.tile(np.asarray(initial_cmd, dtype=float), (max(1, delay_steps), 1))
        self.head = 0
        self.delay_steps = delay_steps

    def exchange(self, cmd: np.ndarray) -> np.ndarray:
        if self.delay_steps <= 0:
            return cmd
        out = self.buf[self.head].copy()
        self.buf[self.head] = cmd
        self.head = (self.head + 1) % self.delay_steps
        return out


DEFAULT_KP = {"HR": 30.0, "HAA": 30.0, "HFE": 30.0, "KFE": 60.0, "FFE": 80.0, "FAA": 20.0}
DEFAULT_KD = {"HR": 1.0, "HAA": 1.0, "HFE": 1.0, "KFE": 2.0, "FFE": 2.0, "FAA": 0.5}


def default_gains(model: RobotModel, kp: dict | None = None, kd: dict | None = None) -> PDGains:
    """Reference PD gains; not subject to randomization.

    Knee and ankle-pitch run stiffer than the hips: a PD-held stand is an
    inverted pendulum about the ankles (gravity stiffness ~ weight x com
    height ~ 97 Nm/rad) and the knee-ankle transmission coupling softens the
    combined mode, so both drives need margin above it or the robot cannot
    stand passively.
    """
    kp = {**DEFAULT_KP, **(kp or {})}
    kd = {**DEFAULT_KD, **(kd or {})}
    kpv = np.empty(12)
    kdv = np.empty(12)
    for i, j in enumerate(model.joints):
        short = j.name.split("_", 1)[1]
        kpv[i] = kp[short]
        kdv[i] = kd[short]
    return PDGains(kpv, kdv)


def pd_torque(gains: PDGains, cmd: ActuatorCommand | np.ndarray, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Plain PD law before any saturation: Kp (q_d - q) - Kd qdot."""
    q_d = cmd.q_d if isinstance(cmd, ActuatorCommand) else np.asarray(cmd, dtype=float)
    return gains.kp * (q_d - q) - gains.kd * np.asarray(qd, dtype=float)


def saturate(model: RobotModel, joint: str, tau: float, qd: float | None = None,
             speed_derating: bool = False) -> float:
    """Clamp a torque to the joint's actuator peak.

    With `speed_derating`, the available torque falls linearly from the peak
    at zero speed to zero at the drive's max speed (same-direction motion).
    """
    spec = actuator_for_joint(model, joint)
    peak = spec.peak_torque
    if speed_derating and qd is not None:
        frac = max(0.0, 1.0 - abs(qd) / spec.max_speed_48v)
        if tau * qd > 0.0:
            peak = peak * frac
    return float(np.clip(tau, -peak, peak))


def friction_torque(spec: JointSpec, qd) -> np.ndarray | float:
    """Passive joint friction: smooth Coulomb plus viscous drag (odd in qd)."""
    qd = np.asarray(qd, dtype=float)
    out = -(spec.coulomb_friction * np.tanh(qd / SIGN_SMOOTHING) + spec.viscous_friction * qd)
    return float(out) if out.ndim == 0 else out


def apply(
    model: RobotModel,
    gains: PDGains,
    cmd: ActuatorCommand | np.ndarray,
    state: SimState,
    latency: LatencyQueue | None = None,
    return_pd: bool = False,
    return_damping: bool = False,
):
    """Joint-space torques ready for the dynamics, one physics sub-step.

    The (KFE, FFE) pairs run their PD loop in actuator coordinates (command
    and feedback mapped through T^-1), each drive saturates at its own peak,
    and the result maps back to joint space; uncoupled joints pass through
    identically. Joint friction is added last. With `latency`, the command
    used is the one enqueued `delay` seconds ago.
    """
    q_d = cmd.q_d if isinstance(cmd, ActuatorCommand) else np.asarray(cmd, dtype=float)
    if not np.all(np.isfinite(q_d)):
        raise ValueError("command must be finite")
    if latency is not None:
        q_d = latency.exchange(q_d)
    a = model.arrays()
    tau_pd = np.empty(K.NJ)
    tau_total = np.empty(K.NJ)
    fric_damp = np.empty(K.NJ)
    K._actuation(
        state.q, state.u[6:], np.ascontiguousarray(q_d, dtype=float),
        gains.kp, gains.kd, a.peak_torque, a.limit_lo, a.limit_hi,
        a.coulomb, a.viscous, a.coupling_pairs, a.coupling_T, a.coupling_Tinv,
        tau_pd, tau_total, fric_damp,
    )
    if return_pd:
        return tau_total, tau_pd
    if return_damping:
        return tau_total, fric_damp
    return tau_total
