"""Walking and hopping reward terms with per-term logging.

Four groups for walking: tracking (exponential kernel on the velocity error),
smoothing (vertical/roll-pitch rates, torque, action rate), regularization
(pose, uprightness, soft actuator limits), and gait quality (feet air time,
slip, contact-force cap). Hopping swaps the vertical-velocity penalty for a
positive-part reward, drops the pitch-hip/knee pose regularization, and in
single-leg mode penalizes swing-leg contact.

Every function broadcasts over a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

HIP_KNEE_IDX = (0, 1, 2, 3, 6, 7, 8, 9)       # HR, HAA, HFE, KFE both legs
HIP_ROLL_YAW_IDX = (0, 1, 6, 7)               # HR, HAA both legs (hopping keeps these)

MODES = ("walk", "hop_double", "hop_left", "hop_right")


def _rowsum(x) -> np.ndarray:
    """Fixed left-to-right sum over the last axis.

    numpy's pairwise reduction can differ in the last ulp between batch
    sizes; rewards must be bit-identical for any batch layout.
    """
    x = np.asarray(x, dtype=float)
    out = x[..., 0].copy()
    for j in range(1, x.shape[-1]):
        out = out + x[..., j]
    return out


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "walk"
    # tracking
    w_track_lin: float = 1.0
    w_track_ang: float = 0.5
    tracking_sigma: float = 0.25
    raw_l2_tracking: bool = False   # ablation: -||err||^2 instead of the kernel
    # smoothing (the terms are negative; weights are positive magnitudes)
    w_lin_vel_z: float = 2.0
    w_ang_vel_xy: float = 0.05
    w_torque: float = 2.0e-5
    w_action_rate: float = 0.01
    # regularization
    w_pose: float = 0.1
    w_upright: float = 5.0
    w_soft_limit: float = 10.0
    soft_limit_fraction: float = 0.9
    # gait
    w_air_time: float = 5.0
    air_time_target: float = 0.3        # s
    w_slip: float = 0.25
    w_contact_force: float = 1.0e-5
    contact_force_threshold: float = 350.0  # N
    # hopping
    w_vz_up: float = 1.0
    w_swing_contact: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.contact_force_threshold > 0:
            raise ValueError("contact_force_threshold must be > 0")
        if not 0.0 < self.soft_limit_fraction <= 1.0:
            raise ValueError("soft_limit_fraction must be in (0, 1]")


@dataclass
class RewardBreakdown:
    terms: dict[str, np.ndarray]
    total: np.ndarray


def tracking_terms(v_xy_body, cmd_xy, omega_z, cmd_z, sigma: float = 0.25, raw_l2: bool = False):
    """Velocity-tracking rewards from the squared command error.

    Default form is exp(-err^2 / sigma^2), maximized exactly at zero error;
    `raw_l2` switches to the plain negated squared error.
    """
    err_lin = _rowsum((np.asarray(v_xy_body) - np.asarray(cmd_xy)) ** 2)
    err_ang = (np.asarray(omega_z) - np.asarray(cmd_z)) ** 2
    if raw_l2:
        return -err_lin, -err_ang
    return np.exp(-err_lin / sigma**2), np.exp(-err_ang / sigma**2)


def smoothing_terms(v_z, omega_xy, torque_sq, action, prev_action):
    """Penalties (all <= 0): vertical rate, roll/pitch rate, torque, action rate."""
    pen_vz = -np.asarray(v_z) ** 2
    pen_wxy = -_rowsum(np.asarray(omega_xy) ** 2)
    pen_tau = -np.asarray(torque_sq)
    pen_rate = -_rowsum((np.asarray(action) - np.asarray(prev_action)) ** 2)
    return pen_vz, pen_wxy, pen_tau, pen_rate


def regularization_terms(q, q_nominal, g_proj_xy, q_d, limit_lo, limit_hi,
                         fraction: float = 0.9, pose_idx=HIP_KNEE_IDX):
    """Pose (selected joints vs nominal), uprightness, and soft actuator limits."""
    q = np.asarray(q)
    dq = q[..., list(pose_idx)] - np.asarray(q_nominal)[..., list(pose_idx)]
    pen_pose = -_rowsum(dq**2)
    pen_upright = -_rowsum(np.asarray(g_proj_xy) ** 2)
    mid = 0.5 * (limit_lo + limit_hi)
    half = 0.5 * (limit_hi - limit_lo)
    over = np.maximum(0.0, np.abs(np.asarray(q_d) - mid) - fraction * half)
    pen_soft = -_rowsum(over**2)
    return pen_pose, pen_upright, pen_soft


def gait_terms(air_time_credit, slip_sq, force_excess_sq):
    """Gait-quality terms from the per-step contact bookkeeping.

    `air_time_credit` is the sum over touchdown events of (air time - target),
    credited at touchdown; `slip_sq` the loaded-foot horizontal speed^2;
    `force_excess_sq` the squared normal-force excess over the cap.
    """
    return np.asarray(air_time_credit), -np.asarray(slip_sq), -np.asarray(force_excess_sq)


@dataclass
class StepSignals:
    """Per-step physical quantities the reward consumes (batched)."""

    v_xy_body: np.ndarray
    v_z_world: np.ndarray
    omega_xy: np.ndarray
    omega_z: np.ndarray
    g_proj_xy: np.ndarray
    q: np.ndarray
    q_d: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray
    torque_sq: np.ndarray
    air_time_credit: np.ndarray
    slip_sq: np.ndarray
    force_excess_sq: np.ndarray
    contact_fraction: np.ndarray  # (..., 2) per foot
    command: np.ndarray           # (..., 3)


def hopping_total(cfg: RewardConfig, model, sig: StepSignals) -> np.ndarray:
    """Total hopping reward (walking structure with the A-series swaps)."""
    if cfg.mode == "walk":
        raise ValueError("hopping_total requires a hopping mode config")
    return compute_reward(cfg, model, sig).total


def compute_reward(cfg: RewardConfig, model, sig: StepSignals) -> RewardBreakdown:
    """Weighted total and per-term breakdown; total == sum of weighted terms."""
    a = model.arrays()
    r_lin, r_ang = tracking_terms(
        sig.v_xy_body, sig.command[..., 0:2], sig.omega_z, sig.command[..., 2],
        cfg.tracking_sigma, cfg.raw_l2_tracking,
    )
    hop = cfg.mode != "walk"
    pen_vz, pen_wxy, pen_tau, pen_rate = smoothing_terms(
        sig.v_z_world, sig.omega_xy, sig.torque_sq, sig.action, sig.prev_action
    )
    pose_idx = HIP_ROLL_YAW_IDX if hop else HIP_KNEE_IDX
    pen_pose, pen_upright, pen_soft = regularization_terms(
        sig.q, a.q_nominal, sig.g_proj_xy, sig.q_d, a.limit_lo, a.limit_hi,
        cfg.soft_limit_fraction, pose_idx,
    )
    air, slip, force = gait_terms(sig.air_time_credit, sig.slip_sq, sig.force_excess_sq)

    terms = {
        "track_lin": cfg.w_track_lin * r_lin,
        "track_ang": cfg.w_track_ang * r_ang,
        "ang_vel_xy": cfg.w_ang_vel_xy * pen_wxy,
        "torque": cfg.w_torque * pen_tau,
        "action_rate": cfg.w_action_rate * pen_rate,
        "pose": cfg.w_pose * pen_pose,
        "upright": cfg.w_upright * pen_upright,
        "soft_limit": cfg.w_soft_limit * pen_soft,
        "air_time": cfg.w_air_time * air,
        "slip": cfg.w_slip * slip,
        "contact_force": cfg.w_contact_force * force,
    }
    if hop:
        terms["vz_up"] = cfg.w_vz_up * np.maximum(0.0, sig.v_z_world)
        if cfg.mode in ("hop_left", "hop_right"):
            swing = 1 if cfg.mode == "hop_left" else 0  # the non-hopping foot
            terms["swing_contact"] = cfg.w_swing_contact * -sig.contact_fraction[..., swing]
    else:
        terms["lin_vel_z"] = cfg.w_lin_vel_z * pen_vz

    total = None
    for v in terms.values():
        total = v.copy() if total is None else total + v
    return RewardBreakdown(terms=terms, total=total)
