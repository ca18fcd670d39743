"""Run configuration: one YAML file wiring the env, gains, randomization,
rewards, and PPO together. The shipped reference recipes live in configs/.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .actuation import PDGains, default_gains
from .env import EnvConfig
from .model import RobotModel, load_model, default_model_path
from .ppo import PPOConfig
from .randomization import PushConfig, RandomizationConfig
from .rewards import RewardConfig


@dataclass
class RunConfig:
    model_path: str = ""
    out_dir: str = "artifacts/runs/default"
    iterations: int = 3000
    checkpoint_every: int = 200
    env: EnvConfig = field(default_factory=EnvConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    gains_kp: dict = field(default_factory=dict)
    gains_kd: dict = field(default_factory=dict)

    def load_robot(self) -> RobotModel:
        path = self.model_path or default_model_path()
        return load_model(path)

    def make_gains(self, model: RobotModel) -> PDGains:
        return default_gains(model, kp=self.gains_kp or None, kd=self.gains_kd or None)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = _plain(v)
        return out

    def without_dr(self) -> "RunConfig":
        return dataclasses.replace(self, randomization=self.randomization.disabled())


def _plain(v):
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "tolist"):
        return v.tolist()
    return v


def _build(cls, raw: dict, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in (raw or {}).items():
        if k not in names:
            raise ValueError(f"{cls.__name__}: unknown field {k!r}")
        kwargs[k] = v
    kwargs.update(extra)
    return cls(**kwargs)


def load_run_config(path: str | Path | None = None) -> RunConfig:
    """Parse a run-config YAML; missing sections fall back to the defaults."""
    if path is None:
        return RunConfig()
    raw = yaml.safe_load(Path(path).read_text()) or {}
    run = raw.get("run", {})
    env_raw = dict(raw.get("env", {}))
    for key in ("terrain_kinds", "command_ranges", "obs_scales"):
        if key in env_raw and isinstance(env_raw[key], dict):
            env_raw[key] = {
                k: tuple(v) if isinstance(v, (list, tuple)) else v for k, v in env_raw[key].items()
            }
    rand_raw = dict(raw.get("randomization", {}))
    push = rand_raw.pop("push", None)
    for k, v in list(rand_raw.items()):
        if isinstance(v, list):
            rand_raw[k] = tuple(v)
    if push is not None:
        if "interval" in push:
            push["interval"] = tuple(push["interval"])
        rand_raw["push"] = _build(PushConfig, push)
    rand = _build(RandomizationConfig, rand_raw)
    if not raw.get("randomization_enabled", True):
        rand = rand.disabled()
    gains = raw.get("gains", {})
    return RunConfig(
        model_path=run.get("model", ""),
        out_dir=run.get("out_dir", "artifacts/runs/default"),
        iterations=int(run.get("iterations", 3000)),
        checkpoint_every=int(run.get("checkpoint_every", 200)),
        env=_build(EnvConfig, env_raw),
        randomization=rand,
        rewards=_build(RewardConfig, raw.get("rewards", {})),
        ppo=_build(PPOConfig, raw.get("ppo", {})),
        gains_kp=gains.get("kp", {}),
        gains_kd=gains.get("kd", {}),
    )
