"""The locomotion MDP: observation assembly, command sampling, 50 Hz control
over physics sub-steps, termination, terrain selection, and a vectorized
multi-environment batch.

Each environment owns an independent RNG stream spawned from the root seed,
so results are reproducible for any batch size and worker count, and a batch
of size 1 behaves bit-identically to a single environment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import randomization as rnd
from . import rewards as rew
from . import terrain as ter
from .actuation import PDGains, default_gains
from .dynamics import ContactParams, DEFAULT_GRAVITY, SUB_DT, DECIMATION, SimState, standing_pose_height
from .model import RobotModel
from .randomization import (
    OBS_DIM,
    SEG_ACTION,
    SEG_COMMAND,
    SEG_GRAVITY,
    SEG_LINVEL,
    SEG_OMEGA,
    SEG_QPOS,
    SEG_QVEL,
    RandomizationConfig,
)

MAX_PUSHES = 32
TERMINATION_CAUSES = ("fall", "timeout", "divergence")


@dataclass(frozen=True)
class Command:
    """Planar velocity command in the base frame."""

    v_x: float
    v_y: float
    omega_z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_x, self.v_y, self.omega_z])


@dataclass(frozen=True)
class EpisodeResult:
    length: int
    cause: str  # fall | timeout | divergence
    reward_total: float
    reward_terms: dict[str, float]

    def __post_init__(self):
        if self.cause not in TERMINATION_CAUSES:
            raise ValueError(f"unknown termination cause {self.cause!r}")


@dataclass
class EnvConfig:
    num_envs: int = 1
    seed: int = 0
    episode_length_s: float = 20.0
    terrain_kinds: dict[str, float] = field(default_factory=lambda: {"flat": 1.0})
    slope_angle_deg: float = 10.0
    stair_riser: float = 0.04
    stair_run: float = 0.30
    terrain_start_x: float = 1.0
    command_ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"v_x": (-1.0, 1.0), "v_y": (-0.5, 0.5), "omega_z": (-1.0, 1.0)}
    )
    zero_command_prob: float = 0.1
    command_resample_prob: float = 0.002  # per policy step
    action_scale: float = 0.5             # q_d = q_default + scale * action
    action_clip: float = 6.0
    obs_scales: dict[str, float] = field(
        default_factory=lambda: {
            "ang_vel": 0.25, "gravity": 1.0, "lin_vel": 2.0,
            "cmd_lin": 2.0, "cmd_ang": 0.25, "qpos": 1.0, "qvel": 0.05, "action": 1.0,
        }
    )
    latency_s: float | None = None        # command latency, sub-step quantized
    tilt_limit_deg: float = 60.0
    min_base_height: float = 0.35
    gravity: float = DEFAULT_GRAVITY
    velocity_obs_source: str = "truth"    # truth | estimator (ablation hook)


def sample_command(rng: np.random.Generator, ranges=None, zero_prob: float = 0.1) -> Command:
    """Uniform in the command box; with `zero_prob`, the standing command."""
    ranges = ranges or {"v_x": (-1.0, 1.0), "v_y": (-0.5, 0.5), "omega_z": (-1.0, 1.0)}
    v = np.array([
        rng.uniform(*ranges["v_x"]),
        rng.uniform(*ranges["v_y"]),
        rng.uniform(*ranges["omega_z"]),
    ])
    if rng.uniform() < zero_prob:
        v[:] = 0.0
    return Command(v[0], v[1], v[2])


def generate_terrain(kind: str, rng: np.random.Generator, cfg: EnvConfig | None = None) -> ter.TerrainField:
    cfg = cfg or EnvConfig()
    if kind == "stairs":
        return ter.stairs(cfg.stair_riser, cfg.stair_run, cfg.terrain_start_x)
    if kind == "slope":
        return ter.slope(cfg.slope_angle_deg, cfg.terrain_start_x)
    return ter.generate_terrain(kind, rng)


def _scale_vector(cfg: EnvConfig) -> np.ndarray:
    s = np.ones(OBS_DIM)
    sc = cfg.obs_scales
    s[SEG_OMEGA] = sc["ang_vel"]
    s[SEG_GRAVITY] = sc["gravity"]
    s[SEG_LINVEL] = sc["lin_vel"]
    s[SEG_COMMAND] = [sc["cmd_lin"], sc["cmd_lin"], sc["cmd_ang"]]
    s[SEG_QPOS] = sc["qpos"]
    s[SEG_QVEL] = sc["qvel"]
    s[SEG_ACTION] = sc["action"]
    return s


class LocomotionEnv:
    """Vectorized locomotion environment over one shared robot model.

    All physical state lives in (N, ...) arrays stepped by one compiled
    kernel call per policy step; per-env divergence is isolated and triggers
    an auto-reset of only that environment.
    """

    def __init__(
        self,
        model: RobotModel,
        cfg: EnvConfig | None = None,
        rand_cfg: RandomizationConfig | None = None,
        reward_cfg: rew.RewardConfig | None = None,
        gains: PDGains | None = None,
        contact: ContactParams | None = None,
    ):
        self.model = model
        self.cfg = cfg or EnvConfig()
        self.rand_cfg = rand_cfg if rand_cfg is not None else RandomizationConfig()
        self.reward_cfg = reward_cfg or rew.RewardConfig()
        self.gains = gains or default_gains(model)
        self.contact = contact or ContactParams()
        self.arrays = model.arrays()

        n = self.cfg.num_envs
        self.num_envs = n
        root = np.random.SeedSequence(self.cfg.seed)
        self.rngs = [np.random.default_rng(s) for s in root.spawn(n)]

        a = self.arrays
        self.base_pos = np.zeros((n, 3))
        self.base_quat = np.zeros((n, 4))
        self.u = np.zeros((n, K.NV))
        self.q = np.zeros((n, K.NJ))
        self.t_sub = np.zeros(n, dtype=np.int64)
        self.anchors = np.zeros((n, 8, 3))
        self.anchor_active = np.zeros((n, 8), dtype=np.uint8)
        self.air_time = np.zeros((n, 2))
        self.was_contact = np.ones((n, 2), dtype=np.uint8)

        # per-episode randomized model copies
        self.mass = np.tile(a.mass, (n, 1))
        self.mcom = np.tile(a.mcom, (n, 1, 1))
        self.inertia_origin = np.tile(a.inertia_origin, (n, 1, 1, 1))
        self.armature = np.tile(a.armature, (n, 1))
        self.coulomb = np.tile(a.coulomb, (n, 1))
        self.viscous = np.tile(a.viscous, (n, 1))
        self.q_default = np.tile(a.q_nominal, (n, 1))
        self.mu = np.full(n, 0.8)
        self.restitution = np.zeros(n)

        self.ttype = np.zeros(n, dtype=np.int64)
        self.tparams = np.zeros((n, 16))
        self.commands = np.zeros((n, 3))
        self.prev_action = np.zeros((n, K.NJ))
        self.episode_step = np.zeros(n, dtype=np.int64)
        self.episode_return = np.zeros(n)
        self.episode_terms: dict[str, np.ndarray] = {}

        self.push_sub = np.zeros((n, MAX_PUSHES), dtype=np.int64)
        self.push_dv = np.zeros((n, MAX_PUSHES, 3))
        self.push_n = np.zeros(n, dtype=np.int64)
        self.push_i = np.zeros(n, dtype=np.int64)

        lat_steps = 0
        if self.cfg.latency_s is not None:
            lat_steps = max(1, round(self.cfg.latency_s / SUB_DT))
        self.lat_steps = np.full(n, lat_steps, dtype=np.int64)
        self.lat_buf = np.tile(a.q_nominal, (n, max(1, lat_steps), 1))
        self.lat_head = np.zeros(n, dtype=np.int64)

        self.ext_wrench = np.zeros((n, K.NB, 6))
        self.has_ext = 0
        self.agg = np.zeros((n, K.NAGG))
        self.cmd_qd = np.tile(a.q_nominal, (n, 1))

        self._scales = _scale_vector(self.cfg)
        self._noise_template = rnd.noise_template(self.rand_cfg)
        # written by an attached estimator when velocity_obs_source="estimator"
        self.external_velocity = np.zeros((n, 3))
        self.max_episode_steps = int(round(self.cfg.episode_length_s / (SUB_DT * DECIMATION)))
        self.substep_hook = None  # single-env estimation/telemetry hook

        self._kind_names = list(self.cfg.terrain_kinds)
        probs = np.array([self.cfg.terrain_kinds[k] for k in self._kind_names], dtype=float)
        self._kind_probs = probs / probs.sum()

    # -- episode management ---------------------------------------------------

    def _reset_env(self, i: int):
        rng = self.rngs[i]
        ep = rnd.sample_dynamics(self.rand_cfg, rng)
        (self.mass[i], self.mcom[i], self.inertia_origin[i],
         self.armature[i], self.coulomb[i], self.viscous[i]) = rnd.randomized_body_arrays(self.arrays, ep)
        self.mu[i] = ep.friction
        self.restitution[i] = ep.restitution
        self.q_default[i] = np.clip(
            self.arrays.q_nominal + ep.default_joint_pos, self.arrays.limit_lo, self.arrays.limit_hi
        )

        kind = self._kind_names[rng.choice(len(self._kind_names), p=self._kind_probs)]
        field = generate_terrain(kind, rng, self.cfg)
        self.ttype[i] = field.kind_id
        self.tparams[i] = field.params

        cmd = sample_command(rng, self.cfg.command_ranges, self.cfg.zero_command_prob)
        self.commands[i] = cmd.as_array()

        events = rnd.schedule_pushes(self.rand_cfg.push, rng, self.cfg.episode_length_s)
        self.push_n[i] = min(len(events), MAX_PUSHES)
        self.push_i[i] = 0
        for k, (t, dv) in enumerate(events[:MAX_PUSHES]):
            self.push_sub[i, k] = int(round(t / SUB_DT))
            self.push_dv[i, k] = dv

        q0 = self.q_default[i]
        z0 = standing_pose_height(self.model, q0, field, xy=(0.0, 0.0))
        self.base_pos[i] = [0.0, 0.0, z0]
        self.base_quat[i] = [1.0, 0.0, 0.0, 0.0]
        self.u[i] = 0.0
        self.q[i] = q0
        self.t_sub[i] = 0
        self.anchors[i] = 0.0
        self.anchor_active[i] = 0
        self.air_time[i] = 0.0
        self.was_contact[i] = 1
        self.prev_action[i] = 0.0
        self.episode_step[i] = 0
        self.episode_return[i] = 0.0
        self.lat_buf[i] = q0
        self.lat_head[i] = 0
        self.cmd_qd[i] = q0

    def reset(self) -> np.ndarray:
        for i in range(self.num_envs):
            self._reset_env(i)
        return self._observe()

    # -- observation ----------------------------------------------------------

    def _rotations(self) -> np.ndarray:
        w, x, y, z = self.base_quat.T
        R = np.empty((self.num_envs, 3, 3))
        R[:, 0, 0] = 1 - 2 * (y * y + z * z)
        R[:, 0, 1] = 2 * (x * y - w * z)
        R[:, 0, 2] = 2 * (x * z + w * y)
        R[:, 1, 0] = 2 * (x * y + w * z)
        R[:, 1, 1] = 1 - 2 * (x * x + z * z)
        R[:, 1, 2] = 2 * (y * z - w * x)
        R[:, 2, 0] = 2 * (x * z - w * y)
        R[:, 2, 1] = 2 * (y * z + w * x)
        R[:, 2, 2] = 1 - 2 * (x * x + y * y)
        return R

    def _clean_obs(self) -> np.ndarray:
        """Unscaled, noise-free observation from the immediate state only."""
        R = self._rotations()
        obs = np.zeros((self.num_envs, OBS_DIM))
        obs[:, SEG_OMEGA] = self.u[:, 0:3]
        obs[:, SEG_GRAVITY] = -R[:, 2, :]  # world down in base coords
        if self.cfg.velocity_obs_source == "estimator":
            obs[:, SEG_LINVEL] = self.external_velocity
        else:
            obs[:, SEG_LINVEL] = self.u[:, 3:6]
        obs[:, SEG_COMMAND] = self.commands
        obs[:, SEG_QPOS] = self.q - self.q_default
        obs[:, SEG_QVEL] = self.u[:, 6:]
        obs[:, SEG_ACTION] = self.prev_action
        return obs

    def _observe(self) -> np.ndarray:
        obs = self._clean_obs()
        for i in range(self.num_envs):
            noise = self.rngs[i].uniform(-1.0, 1.0, size=OBS_DIM) * self._noise_template
            obs[i] += noise
        return obs * self._scales

    def observation_from_state(self, i: int = 0) -> np.ndarray:
        """Noise-free scaled observation rebuilt from the current state alone."""
        return self._clean_obs()[i] * self._scales

    # -- stepping ---------------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance every environment one policy step (DECIMATION sub-steps).

        Returns (obs, rewards, dones, info); done environments are reset in
        place and report their final observation through the info dict.
        """
        actions = np.asarray(actions, dtype=float)
        if actions.ndim == 1:
            actions = actions[None, :]
        if actions.shape != (self.num_envs, K.NJ):
            raise ValueError(f"actions must have shape ({self.num_envs}, {K.NJ})")
        if not np.all(np.isfinite(actions)):
            bad = ~np.isfinite(actions).all(axis=1)
            actions = actions.copy()
            actions[bad] = 0.0
        else:
            bad = np.zeros(self.num_envs, dtype=bool)

        # optional mid-episode command resampling, per env
        for i in range(self.num_envs):
            if self.rngs[i].uniform() < self.cfg.command_resample_prob:
                cmd = sample_command(self.rngs[i], self.cfg.command_ranges, self.cfg.zero_command_prob)
                self.commands[i] = cmd.as_array()

        actions = np.clip(actions, -self.cfg.action_clip, self.cfg.action_clip)
        self.cmd_qd = self.q_default + self.cfg.action_scale * actions

        a = self.arrays
        cp = self.contact
        if self.substep_hook is not None:
            self._step_python_path()
        else:
            K.env_step_batch(
                a.parent, a.joint_axis, a.joint_origin,
                self.mass, self.mcom, self.inertia_origin, self.armature,
                a.limit_lo, a.limit_hi, self.gains.kp, self.gains.kd, a.peak_torque,
                self.coulomb, self.viscous,
                a.coupling_pairs, a.coupling_T, a.coupling_Tinv,
                self.base_pos, self.base_quat, self.u, self.q, self.t_sub,
                self.cmd_qd, self.lat_buf, self.lat_head, self.lat_steps,
                self.push_sub, self.push_dv, self.push_n, self.push_i,
                self.ext_wrench, self.has_ext,
                self.ttype, self.tparams, self.mu, self.restitution,
                cp.k_n, cp.d_n, cp.k_t, cp.d_t, cp.k_lim, cp.d_lim,
                1.0, self.reward_cfg.contact_force_threshold, self.reward_cfg.air_time_target,
                a.foot_body, a.foot_corners, a.foot_center,
                self.anchors, self.anchor_active, self.air_time, self.was_contact,
                DECIMATION, SUB_DT, self.cfg.gravity, 0,
                self.agg,
            )

        self.episode_step += 1
        R = self._rotations()
        # fixed-order elementwise product: bit-identical for any batch size
        vb = self.u[:, 3:6]
        v_world = np.empty_like(vb)
        for i in range(3):
            v_world[:, i] = R[:, i, 0] * vb[:, 0] + R[:, i, 1] * vb[:, 1] + R[:, i, 2] * vb[:, 2]

        sig = rew.StepSignals(
            v_xy_body=self.u[:, 3:5],
            v_z_world=v_world[:, 2],
            omega_xy=self.u[:, 0:2],
            omega_z=self.u[:, 2],
            g_proj_xy=-R[:, 2, 0:2],
            q=self.q,
            q_d=self.cmd_qd,
            action=actions,
            prev_action=self.prev_action,
            torque_sq=self.agg[:, K.AGG_TAU_SQ],
            air_time_credit=self.agg[:, K.AGG_AIR_CREDIT],
            slip_sq=self.agg[:, K.AGG_SLIP],
            force_excess_sq=self.agg[:, K.AGG_FORCE_EXCESS],
            contact_fraction=self.agg[:, (K.AGG_CONTACT_FRAC_L, K.AGG_CONTACT_FRAC_R)],
            command=self.commands,
        )
        breakdown = rew.compute_reward(self.reward_cfg, self.model, sig)
        rewards = breakdown.total
        self.episode_return += rewards
        for name, v in breakdown.terms.items():
            acc = self.episode_terms.setdefault(name, np.zeros(self.num_envs))
            acc += v

        # termination
        terrain_h = np.empty(self.num_envs)
        K.terrain_height_batch(self.ttype, self.tparams, self.base_pos[:, 0], self.base_pos[:, 1], terrain_h)
        tilt_cos = R[:, 2, 2]
        diverged = self.agg[:, K.AGG_DIVERGED] > 0.5
        diverged |= bad
        fall = (tilt_cos < np.cos(np.radians(self.cfg.tilt_limit_deg))) | (
            (self.base_pos[:, 2] - terrain_h) < self.cfg.min_base_height
        )
        timeout = self.episode_step >= self.max_episode_steps
        done = fall | timeout | diverged

        self.prev_action = actions.copy()

        info = {
            "time_outs": timeout & ~fall & ~diverged,
            "divergence": diverged,
            "foot_contact": self.agg[:, (K.AGG_CONTACT_L, K.AGG_CONTACT_R)] > 0.5,
            "foot_forces": self.agg[:, (K.AGG_FN_L, K.AGG_FN_R)].copy(),
            "flight_mask": self.agg[:, K.AGG_FLIGHT_MASK].astype(np.int64),
            "limit_violations": self.agg[:, K.AGG_LIMIT_VIOL].copy(),
            "reward_terms": {k: v.copy() for k, v in breakdown.terms.items()},
            "episode_results": {},
        }

        if np.any(done):
            info["final_observation"] = self._clean_obs() * self._scales
            for i in np.nonzero(done)[0]:
                cause = "divergence" if diverged[i] else ("fall" if fall[i] else "timeout")
                info["episode_results"][int(i)] = EpisodeResult(
                    length=int(self.episode_step[i]),
                    cause=cause,
                    reward_total=float(self.episode_return[i]),
                    reward_terms={k: float(v[i]) for k, v in self.episode_terms.items()},
                )
                for v in self.episode_terms.values():
                    v[i] = 0.0
                self._reset_env(i)

        obs = self._observe()
        return obs, rewards, done, info

    def _step_python_path(self):
        """Sub-step loop in Python for single-env hooks (estimators, logging).

        Calls the same compiled routines in the same order as the fused batch
        kernel, so trajectories are bit-identical with the fast path.
        """
        assert self.num_envs == 1, "sub-step hooks require a single environment"
        a = self.arrays
        cp = self.contact
        i = 0
        tau_pd = np.empty(K.NJ)
        tau_total = np.empty(K.NJ)
        fric_damp = np.empty(K.NJ)
        corner_force_w = np.empty((2, 4, 3))
        corner_pen = np.empty((2, 4))
        foot_fn = np.empty(2)
        foot_slip = np.empty(2)
        agg = self.agg[i]
        agg[:] = 0.0
        flight_mask = 0
        for s in range(DECIMATION):
            while self.push_i[i] < self.push_n[i] and self.push_sub[i, self.push_i[i]] <= self.t_sub[i]:
                R = self._rotations()[i]
                self.u[i, 3:6] += R.T @ self.push_dv[i, self.push_i[i]]
                self.push_i[i] += 1
            if self.lat_steps[i] > 0:
                head = self.lat_head[i]
                eff_cmd = self.lat_buf[i, head].copy()
                self.lat_buf[i, head] = self.cmd_qd[i]
                self.lat_head[i] = (head + 1) % self.lat_steps[i]
            else:
                eff_cmd = self.cmd_qd[i]
            K._actuation(
                self.q[i], self.u[i, 6:], eff_cmd,
                self.gains.kp, self.gains.kd, a.peak_torque, a.limit_lo, a.limit_hi,
                self.coulomb[i], self.viscous[i], a.coupling_pairs, a.coupling_T, a.coupling_Tinv,
                tau_pd, tau_total, fric_damp,
            )
            ok, clamps = K.substep_kernel(
                a.parent, a.joint_axis, a.joint_origin,
                self.mass[i], self.mcom[i], self.inertia_origin[i], self.armature[i],
                a.limit_lo, a.limit_hi,
                self.base_pos[i], self.base_quat[i], self.u[i], self.q[i], self.t_sub[i : i + 1],
                tau_total, fric_damp, self.ext_wrench[i], self.has_ext,
                self.ttype[i], self.tparams[i], self.mu[i], self.restitution[i],
                cp.k_n, cp.d_n, cp.k_t, cp.d_t, cp.k_lim, cp.d_lim,
                a.foot_body, a.foot_corners, a.foot_center,
                self.anchors[i], self.anchor_active[i],
                SUB_DT, self.cfg.gravity, 0,
                corner_force_w, corner_pen, foot_fn, foot_slip,
            )
            if not ok:
                agg[K.AGG_DIVERGED] = 1.0
                return
            agg[K.AGG_TAU_SQ] += float(tau_pd @ tau_pd)
            agg[K.AGG_LIMIT_VIOL] += clamps
            any_contact = False
            for side in range(2):
                in_c = foot_fn[side] > 1.0
                if in_c:
                    any_contact = True
                    agg[K.AGG_SLIP] += foot_slip[side]
                    if self.was_contact[i, side] == 0:
                        agg[K.AGG_AIR_CREDIT] += self.air_time[i, side] - self.reward_cfg.air_time_target
                    self.air_time[i, side] = 0.0
                    self.was_contact[i, side] = 1
                    agg[K.AGG_CONTACT_FRAC_L + side] += 1.0
                else:
                    self.air_time[i, side] += SUB_DT
                    self.was_contact[i, side] = 0
                excess = foot_fn[side] - self.reward_cfg.contact_force_threshold
                if excess > 0.0:
                    agg[K.AGG_FORCE_EXCESS] += excess * excess
            if not any_contact:
                flight_mask |= 1 << s
            if self.substep_hook is not None:
                self.substep_hook(self, tau_total.copy(), foot_fn.copy(), fric_damp.copy())
        agg[K.AGG_TAU_SQ] /= DECIMATION
        agg[K.AGG_SLIP] /= DECIMATION
        agg[K.AGG_FORCE_EXCESS] /= DECIMATION
        agg[K.AGG_CONTACT_FRAC_L] /= DECIMATION
        agg[K.AGG_CONTACT_FRAC_R] /= DECIMATION
        agg[K.AGG_FN_L] = foot_fn[0]
        agg[K.AGG_FN_R] = foot_fn[1]
        agg[K.AGG_CONTACT_L] = 1.0 if foot_fn[0] > 1.0 else 0.0
        agg[K.AGG_CONTACT_R] = 1.0 if foot_fn[1] > 1.0 else 0.0
        agg[K.AGG_FLIGHT_MASK] = float(flight_mask)

    def vec_step(self, actions: np.ndarray):
        """Alias for `step`: every step of this environment is vectorized."""
        return self.step(actions)

    # -- conveniences -----------------------------------------------------------

    def state(self, i: int = 0) -> SimState:
        """Snapshot of one environment as a SimState."""
        return SimState(
            base_pos=self.base_pos[i].copy(),
            base_quat=self.base_quat[i].copy(),
            u=self.u[i].copy(),
            q=self.q[i].copy(),
            t_sub=self.t_sub[i : i + 1].copy(),
            anchors=self.anchors[i].copy(),
            anchor_active=self.anchor_active[i].copy(),
            air_time=self.air_time[i].copy(),
            was_contact=self.was_contact[i].copy(),
        )

    def terrain_field(self, i: int = 0) -> ter.TerrainField:
        kind = next(k for k, v in ter._KIND_IDS.items() if v == self.ttype[i])
        return ter.TerrainField(kind, self.tparams[i].copy(), float(self.mu[i]), float(self.restitution[i]))

    @property
    def sim_time(self) -> np.ndarray:
        return self.t_sub / 800.0
