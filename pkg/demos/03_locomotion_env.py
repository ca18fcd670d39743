"""Step the vectorized locomotion environment and look at the reward anatomy.

Four environments run in lockstep under zero actions (PD holds the nominal
pose); the per-term reward breakdown shows what the walking objective trades.
"""

import numpy as np

import stridesim as ss
from stridesim.env import EnvConfig, LocomotionEnv
from stridesim.randomization import RandomizationConfig

model = ss.load_default_model()
env = LocomotionEnv(
    model,
    EnvConfig(num_envs=4, seed=3, terrain_kinds={"flat": 0.5, "rough": 0.5}),
    rand_cfg=RandomizationConfig(),
)
obs = env.reset()
print(f"observation: {obs.shape} (omega, gravity, linvel, command, qpos, qvel, prev action)")
print(f"commands: {env.commands.round(2)}")

for k in range(100):
    obs, reward, done, info = env.step(np.zeros((4, 12)))

print(f"\nafter 2 s standing: reward {reward.round(3)}")
print("per-term breakdown (env 0):")
for name, vals in sorted(info["reward_terms"].items()):
    print(f"  {name:14s} {vals[0]:+.4f}")
print(f"foot contact: {info['foot_contact'][0]}, forces {info['foot_forces'][0].round(1)} N")
print(f"sim time: {env.sim_time[0]:.2f} s (exactly 0.02 s per policy step)")
