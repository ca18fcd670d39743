"""A miniature end-to-end training run (16 envs, 20 iterations).

The real recipes live in configs/walk_reference.yaml and
configs/hop_reference.yaml; this just demonstrates the loop, the CSV log,
and checkpointing in under a minute.
"""

import tempfile
from pathlib import Path

import stridesim as ss
from stridesim.env import EnvConfig, LocomotionEnv
from stridesim.ppo import PPOConfig, train
from stridesim.randomization import RandomizationConfig

model = ss.load_default_model()
env = LocomotionEnv(
    model,
    EnvConfig(num_envs=16, seed=0, episode_length_s=5.0),
    rand_cfg=RandomizationConfig(),
)
out = Path(tempfile.mkdtemp(prefix="stridesim_smoke_"))
result = train(env, PPOConfig(seed=0, init_std=0.6), iterations=20, out_dir=out)
print(f"\ncheckpoint: {result.checkpoint_path}")
print(f"log: {result.log_path}")
print("last log lines:")
for line in result.log_path.read_text().strip().splitlines()[-3:]:
    print(" ", line[:110])
