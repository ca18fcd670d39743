"""Sample episode dynamics and observation noise from the randomization table.

Every episode draws one concrete set of dynamics parameters; observation
noise is drawn fresh at every policy step. Commands and previous actions are
never noised.
"""

import numpy as np

import stridesim.randomization as rnd

cfg = rnd.RandomizationConfig()
rng = np.random.default_rng(0)

print("dynamics terms (uniform ranges):")
for term in rnd.DYNAMICS_TERMS:
    print(f"  {term:22s} {getattr(cfg, term)}")
print("noise half-widths:")
for term in rnd.NOISE_TERMS:
    print(f"  {term:22s} {getattr(cfg, term)}")

ep = rnd.sample_dynamics(cfg, rng)
print(f"\none episode draw: friction={ep.friction:.3f}, restitution={ep.restitution:.3f}, "
      f"base mass delta={ep.base_mass_delta:+.3f} kg")
print(f"  linkage mass scales: {ep.linkage_mass_scale.round(3)}")
print(f"  default joint offsets (rad): {ep.default_joint_pos.round(3)}")

# noise is additive uniform on the raw observation
clean = np.zeros((5, rnd.OBS_DIM))
noisy = rnd.apply_noise(cfg, clean, rng)
print(f"\nnoise sample: |ang vel| max {np.abs(noisy[:, rnd.SEG_OMEGA]).max():.3f} (half-width 0.2), "
      f"command segment exactly zero: {np.all(noisy[:, rnd.SEG_COMMAND] == 0)}")

events = rnd.schedule_pushes(cfg.push, rng, episode_length=20.0)
print(f"\npush schedule for one 20 s episode: {len(events)} events")
for t, dv in events:
    print(f"  t={t:5.2f} s  dv={dv.round(3)} m/s")
