"""Evaluation, benchmarking, and trajectory recording against trained policies.

Everything here is read-only with respect to training artifacts; benchmark
and evaluation runs are seeded and reproduce bit-exactly.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import RunConfig
from .env import EnvConfig, LocomotionEnv
from .estimation import StateEstimator
from .nets import ActorCritic
from .randomization import RandomizationConfig


@dataclass
class TrackingReport:
    mean_vx_error: float   # m/s, sagittal
    mean_vy_error: float   # m/s, lateral
    mean_wz_error: float   # rad/s, yaw
    duration: float        # s
    command_trace: str     # how the command script was generated
    seed: int

    def __post_init__(self):
        # the headline report is only meaningful over a long trial
        self.headline = self.duration >= 60.0

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(asdict(self) | {"headline": self.headline}, indent=2))


@dataclass
class BenchReport:
    env_steps_per_s: float
    substeps_per_s: float
    num_envs: int
    worker_count: int
    duration: float
    machine: dict

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(asdict(self), indent=2))


class PolicyFn:
    """Deterministic policy callable from a checkpoint (mean action)."""

    def __init__(self, ac: ActorCritic):
        self.ac = ac

    @classmethod
    def from_checkpoint(cls, path, cfg_hash: str | None = None) -> "PolicyFn":
        ac, header = ckpt.load(path)
        ckpt.verify_compatible(header, cfg_hash)
        return cls(ac)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        mean, _ = self.ac.actor_forward(obs)
        return mean


def standing_policy(obs: np.ndarray) -> np.ndarray:
    """Zero-action policy: hold the nominal pose."""
    obs = np.atleast_2d(obs)
    return np.zeros((obs.shape[0], 12))


def command_script(rng: np.random.Generator, duration: float, ranges=None,
                   hold_range=(2.0, 5.0), zero_prob: float = 0.1):
    """Piecewise-constant random command trace: (switch time, command) pairs."""
    ranges = ranges or {"v_x": (-1.0, 1.0), "v_y": (-0.5, 0.5), "omega_z": (-1.0, 1.0)}
    out = []
    t = 0.0
    while t < duration:
        cmd = np.array([
            rng.uniform(*ranges["v_x"]),
            rng.uniform(*ranges["v_y"]),
            rng.uniform(*ranges["omega_z"]),
        ])
        if rng.uniform() < zero_prob:
            cmd[:] = 0.0
        out.append((t, cmd))
        t += rng.uniform(*hold_range)
    return out


def _script_command_at(script, t: float) -> np.ndarray:
    cmd = script[0][1]
    for ts, c in script:
        if ts <= t:
            cmd = c
        else:
            break
    return cmd


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge shrinkage, along axis 0."""
    n = len(x)
    out = np.empty_like(x, dtype=float)
    half = window // 2
    csum = np.cumsum(np.insert(np.asarray(x, dtype=float), 0, 0.0, axis=0), axis=0)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        out[i] = (csum[hi] - csum[lo]) / (hi - lo)
    return out


def make_eval_env(run_cfg: RunConfig, seed: int, terrain: str = "flat",
                  observation_noise: bool = True, pushes: bool = False) -> LocomotionEnv:
    """Single evaluation environment: nominal dynamics, optional sensor noise."""
    rand = run_cfg.randomization.disabled()
    if observation_noise:
        src = run_cfg.randomization
        rand = RandomizationConfig(
            friction=rand.friction, restitution=rand.restitution,
            base_mass_delta=rand.base_mass_delta, linkage_mass_scale=rand.linkage_mass_scale,
            joint_friction_scale=rand.joint_friction_scale, armature_scale=rand.armature_scale,
            default_joint_pos=rand.default_joint_pos,
            noise_lin_vel=src.noise_lin_vel, noise_ang_vel=src.noise_ang_vel,
            noise_gravity=src.noise_gravity, noise_hip_pos=src.noise_hip_pos,
            noise_kfe_pos=src.noise_kfe_pos, noise_ffe_pos=src.noise_ffe_pos,
            noise_faa_pos=src.noise_faa_pos, noise_joint_vel=src.noise_joint_vel,
            push=rand.push if not pushes else src.push,
        )
    model = run_cfg.load_robot()
    env_cfg = EnvConfig(
        **{**vars(run_cfg.env), "num_envs": 1, "seed": seed,
           "terrain_kinds": {terrain: 1.0}, "command_resample_prob": 0.0,
           "episode_length_s": 1e9}
    )
    return LocomotionEnv(model, env_cfg, rand_cfg=rand, reward_cfg=run_cfg.rewards,
                         gains=run_cfg.make_gains(model))


def eval_tracking(policy, run_cfg: RunConfig, duration: float = 60.0, seed: int = 0,
                  terrain: str = "flat", smoothing_window_s: float = 0.5) -> TrackingReport:
    """Run the policy against a seeded command script and report mean tracking
    errors, with the measured velocity smoothed by a moving-average filter."""
    if duration < 10.0:
        raise ValueError("tracking evaluation needs at least 10 s")
    env = make_eval_env(run_cfg, seed, terrain)
    script = command_script(np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1])),
                            duration, run_cfg.env.command_ranges)
    obs = env.reset()
    steps = int(round(duration / 0.02))
    actual = np.zeros((steps, 3))
    commanded = np.zeros((steps, 3))
    for k in range(steps):
        # commands change between policy cycles, like an operator would issue them
        env.commands[0] = _script_command_at(script, k * 0.02)
        action = policy(obs)
        obs, _r, done, _info = env.step(action)
        actual[k, 0:2] = env.u[0, 3:5]
        actual[k, 2] = env.u[0, 2]
        commanded[k] = env.commands[0]
    window = max(1, int(round(smoothing_window_s / 0.02)))
    smooth = moving_average(actual, window)
    err = np.abs(smooth - commanded)
    return TrackingReport(
        mean_vx_error=float(err[:, 0].mean()),
        mean_vy_error=float(err[:, 1].mean()),
        mean_wz_error=float(err[:, 2].mean()),
        duration=duration,
        command_trace=f"piecewise-constant, hold 2-5 s, seed {seed}",
        seed=seed,
    )


def bench(run_cfg: RunConfig, num_envs: int = 256, duration: float = 10.0,
          seed: int = 0, out_path=None) -> BenchReport:
    """Throughput of the vectorized env under random actions (training DR on)."""
    model = run_cfg.load_robot()
    env_cfg = EnvConfig(**{**vars(run_cfg.env), "num_envs": num_envs, "seed": seed})
    env = LocomotionEnv(model, env_cfg, rand_cfg=run_cfg.randomization,
                        reward_cfg=run_cfg.rewards, gains=run_cfg.make_gains(model))
    rng = np.random.default_rng(seed)
    env.reset()
    env.step(rng.uniform(-1, 1, (num_envs, 12)))  # warm the compiled path
    t0 = time.perf_counter()
    steps = 0
    while time.perf_counter() - t0 < duration:
        env.step(rng.uniform(-1, 1, (num_envs, 12)))
        steps += num_envs
    elapsed = time.perf_counter() - t0
    try:
        import numba

        workers = numba.get_num_threads()
    except Exception:
        workers = 1
    report = BenchReport(
        env_steps_per_s=steps / elapsed,
        substeps_per_s=steps / elapsed * 16,
        num_envs=num_envs,
        worker_count=workers,
        duration=elapsed,
        machine={
            "platform": platform.platform(),
            "processor": platform.processor() or "unknown",
            "cpu_count": __import__("os").cpu_count(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    )
    if out_path:
        report.save(out_path)
    return report


TRAJECTORY_COLUMNS = [
    "time", "base_x", "base_y", "base_z",
    "cmd_vx", "cmd_vy", "cmd_wz",
    "vel_x", "vel_y", "vel_z", "omega_z",
    "est_vel_x", "est_vel_y", "est_vel_z",
    "foot_force_left", "foot_force_right",
    "reward_total",
]


def record_trajectory(policy, run_cfg: RunConfig, duration: float, out_path,
                      seed: int = 0, terrain: str = "flat", with_estimator: bool = True,
                      plot: bool = True):
    """Roll out the policy and write the per-step trajectory CSV (+SVG path).

    Reward term columns are appended after the documented base columns.
    """
    import csv

    env = make_eval_env(run_cfg, seed, terrain)
    obs = env.reset()
    estimator = None
    if with_estimator:
        estimator = StateEstimator(env.model)
        estimator.attach(env)
    steps = int(round(duration / 0.02))
    rows = []
    term_names = None
    path_xy = np.zeros((steps, 2))
    speed = np.zeros(steps)
    for k in range(steps):
        action = policy(obs)
        obs, reward, done, info = env.step(action)
        v_world = env._rotations()[0] @ env.u[0, 3:6]
        est_v = estimator.velocity if estimator is not None else v_world
        if term_names is None:
            term_names = sorted(info["reward_terms"])
        row = [
            round(env.sim_time[0], 6), *np.round(env.base_pos[0], 6),
            *np.round(env.commands[0], 4),
            round(env.u[0, 3], 5), round(env.u[0, 4], 5), round(v_world[2], 5),
            round(env.u[0, 2], 5),
            *np.round(est_v, 5),
            *np.round(info["foot_forces"][0], 3),
            round(float(reward[0]), 6),
        ] + [round(float(info["reward_terms"][n][0]), 6) for n in term_names]
        rows.append(row)
        path_xy[k] = env.base_pos[0, :2]
        speed[k] = np.linalg.norm(v_world[:2])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJECTORY_COLUMNS + [f"term_{n}" for n in (term_names or [])])
        w.writerows(rows)
    if plot:
        _plot_path(path_xy, out_path.with_suffix(".svg"))
    return out_path


def _plot_path(path_xy: np.ndarray, svg_path: Path):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(path_xy[:, 0], path_xy[:, 1], lw=1.2)
    ax.plot(path_xy[0, 0], path_xy[0, 1], "go", label="start")
    ax.plot(path_xy[-1, 0], path_xy[-1, 1], "rs", label="end")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("planar base path")
    ax.axis("equal")
    ax.legend()
    fig.savefig(svg_path)
    plt.close(fig)


def drop_test_trace(run_cfg: RunConfig | None = None, height: float = 0.05, duration: float = 3.0):
    """Settling trace of a PD-held drop; yields (time, base_z, total normal force)."""
    from . import actuation as act
    from . import dynamics as dyn

    run_cfg = run_cfg or RunConfig()
    model = run_cfg.load_robot()
    gains = run_cfg.make_gains(model)
    st = dyn.default_state(model, settle=height)
    rows = [(0.0, st.base_pos[2], 0.0)]
    for k in range(int(duration * 800)):
        tau, fd = act.apply(model, gains, model.nominal_pose, st, return_damping=True)
        st = dyn.step(model, st, tau, fric_damping=fd)
        if (k + 1) % 8 == 0:
            rep = dyn.contact_state(model, st)
            rows.append((st.time, st.base_pos[2], float(rep.normal_force.sum())))
    return rows, dyn.standing_pose_height(model)
