"""Table-driven domain randomization, observation noise, and push events.

The randomization schema is deliberately closed: exactly the seven dynamics
terms and eight noise terms below exist, sampled uniformly per episode (noise
per step). Actuation properties that are accurately known by construction
(PD gains, torque limits, a "motor strength" ratio) are not randomized and
have no config hook.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

# observation layout (48): omega, gravity, linvel, command, qpos, qvel, action
OBS_DIM = 48
SEG_OMEGA = slice(0, 3)
SEG_GRAVITY = slice(3, 6)
SEG_LINVEL = slice(6, 9)
SEG_COMMAND = slice(9, 12)
SEG_QPOS = slice(12, 24)
SEG_QVEL = slice(24, 36)
SEG_ACTION = slice(36, 48)

# per-leg joint order: HR, HAA, HFE, KFE, FFE, FAA
_HIP_IDX = (0, 1, 2, 6, 7, 8)
_KFE_IDX = (3, 9)
_FFE_IDX = (4, 10)
_FAA_IDX = (5, 11)


@dataclass(frozen=True)
class PushConfig:
    enabled: bool = True
    interval: tuple[float, float] = (5.0, 10.0)   # s between events
    magnitude: float = 0.5                        # m/s cap on |dv|
    mode: str = "impulse"                         # impulse | force

    def __post_init__(self):
        if self.mode not in ("impulse", "force"):
            raise ValueError(f"unknown push mode {self.mode!r}")


@dataclass(frozen=True)
class RandomizationConfig:
    """Uniform sampling ranges; defaults are the identified hardware ranges."""

    friction: tuple[float, float] = (0.2, 1.25)
    restitution: tuple[float, float] = (0.0, 0.1)
    base_mass_delta: tuple[float, float] = (-1.0, 1.0)       # kg, additive
    linkage_mass_scale: tuple[float, float] = (0.9, 1.1)     # multiplicative
    joint_friction_scale: tuple[float, float] = (0.9, 1.1)   # multiplicative
    armature_scale: tuple[float, float] = (1.0, 1.05)        # multiplicative
    default_joint_pos: tuple[float, float] = (-0.05, 0.05)   # rad, additive

    # additive observation noise half-widths, uniform, resampled per step
    noise_lin_vel: float = 0.1       # m/s
    noise_ang_vel: float = 0.2       # rad/s
    noise_gravity: float = 0.05      # on the unit projected-gravity vector
    noise_hip_pos: float = 0.03      # rad
    noise_kfe_pos: float = 0.05
    noise_ffe_pos: float = 0.08
    noise_faa_pos: float = 0.03
    noise_joint_vel: float = 1.5     # rad/s

    push: PushConfig = field(default_factory=PushConfig)

    def __post_init__(self):
        for name in DYNAMICS_TERMS:
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name}: require low <= high, got ({lo}, {hi})")

    def disabled(self) -> "RandomizationConfig":
        """All ranges collapsed to their nominal value and noise zeroed."""
        return RandomizationConfig(
            friction=(0.8, 0.8),
            restitution=(0.0, 0.0),
            base_mass_delta=(0.0, 0.0),
            linkage_mass_scale=(1.0, 1.0),
            joint_friction_scale=(1.0, 1.0),
            armature_scale=(1.0, 1.0),
            default_joint_pos=(0.0, 0.0),
            noise_lin_vel=0.0,
            noise_ang_vel=0.0,
            noise_gravity=0.0,
            noise_hip_pos=0.0,
            noise_kfe_pos=0.0,
            noise_ffe_pos=0.0,
            noise_faa_pos=0.0,
            noise_joint_vel=0.0,
            push=PushConfig(enabled=False),
        )


DYNAMICS_TERMS = (
    "friction",
    "restitution",
    "base_mass_delta",
    "linkage_mass_scale",
    "joint_friction_scale",
    "armature_scale",
    "default_joint_pos",
)
NOISE_TERMS = (
    "noise_lin_vel",
    "noise_ang_vel",
    "noise_gravity",
    "noise_hip_pos",
    "noise_kfe_pos",
    "noise_ffe_pos",
    "noise_faa_pos",
    "noise_joint_vel",
)


@dataclass(frozen=True)
class EpisodeDynamics:
    """One episode's concrete dynamics sample."""

    friction: float
    restitution: float
    base_mass_delta: float
    linkage_mass_scale: np.ndarray      # (12,) per leg link
    joint_friction_scale: np.ndarray    # (12,)
    armature_scale: np.ndarray          # (12,)
    default_joint_pos: np.ndarray       # (12,) rad offsets


def sample_dynamics(cfg: RandomizationConfig, rng: np.random.Generator) -> EpisodeDynamics:
    """Draw one episode's dynamics parameters, i.i.d. uniform per term."""
    return EpisodeDynamics(
        friction=rng.uniform(*cfg.friction),
        restitution=rng.uniform(*cfg.restitution),
        base_mass_delta=rng.uniform(*cfg.base_mass_delta),
        linkage_mass_scale=rng.uniform(*cfg.linkage_mass_scale, size=12),
        joint_friction_scale=rng.uniform(*cfg.joint_friction_scale, size=12),
        armature_scale=rng.uniform(*cfg.armature_scale, size=12),
        default_joint_pos=rng.uniform(*cfg.default_joint_pos, size=12),
    )


def noise_template(cfg: RandomizationConfig) -> np.ndarray:
    """Half-width per observation entry; command/action stay exactly zero."""
    t = np.zeros(OBS_DIM)
    t[SEG_OMEGA] = cfg.noise_ang_vel
    t[SEG_GRAVITY] = cfg.noise_gravity
    t[SEG_LINVEL] = cfg.noise_lin_vel
    q = np.zeros(12)
    q[list(_HIP_IDX)] = cfg.noise_hip_pos
    q[list(_KFE_IDX)] = cfg.noise_kfe_pos
    q[list(_FFE_IDX)] = cfg.noise_ffe_pos
    q[list(_FAA_IDX)] = cfg.noise_faa_pos
    t[SEG_QPOS] = q
    t[SEG_QVEL] = cfg.noise_joint_vel
    return t


def apply_noise(cfg: RandomizationConfig, clean_obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Additive uniform noise on the unscaled observation, fresh each call."""
    template = noise_template(cfg)
    return clean_obs + rng.uniform(-1.0, 1.0, size=clean_obs.shape) * template


def schedule_pushes(cfg: PushConfig, rng: np.random.Generator, episode_length: float):
    """Push events for one episode: (time, world-frame velocity delta) pairs."""
    if not cfg.enabled:
        return []
    events = []
    t = rng.uniform(*cfg.interval)
    while t < episode_length:
        heading = rng.uniform(0.0, 2.0 * np.pi)
        mag = rng.uniform(0.0, cfg.magnitude)
        events.append((t, np.array([mag * np.cos(heading), mag * np.sin(heading), 0.0])))
        t += rng.uniform(*cfg.interval)
    return events


def randomized_body_arrays(base_arrays, ep: EpisodeDynamics):
    """Per-episode body property arrays for the simulation kernels.

    Link inertias scale with their mass factor (fixed geometry); the base-mass
    delta is a lump at the torso com, so the com-frame inertia is unchanged.
    Returns (mass, mcom, inertia_origin, armature, coulomb, viscous).
    """
    a = base_arrays
    mass = a.mass.copy()
    mass[0] += ep.base_mass_delta
    mass[1:] *= ep.linkage_mass_scale
    inertia_com = a.inertia_com.copy()
    inertia_com[1:] *= ep.linkage_mass_scale[:, None, None]
    mcom = mass[:, None] * a.com
    inertia_origin = np.empty_like(inertia_com)
    for b in range(len(mass)):
        c = a.com[b]
        inertia_origin[b] = inertia_com[b] + mass[b] * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
    return (
        mass,
        mcom,
        inertia_origin,
        a.armature * ep.armature_scale,
        a.coulomb * ep.joint_friction_scale,
        a.viscous * ep.joint_friction_scale,
    )
