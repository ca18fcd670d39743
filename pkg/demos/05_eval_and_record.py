"""Evaluate the shipped walking checkpoint: tracking report + trajectory CSV.

Needs artifacts/checkpoints/walk_reference.ckpt (produced by the reference
recipe). The tracking report mirrors the 60-second headline protocol; the
recorder writes a per-step CSV plus a planar path SVG.
"""

from pathlib import Path

from stridesim.config import load_run_config
from stridesim.harness import PolicyFn, eval_tracking, record_trajectory

root = Path(__file__).resolve().parents[1]
ckpt = root / "artifacts" / "checkpoints" / "walk_reference.ckpt"
if not ckpt.exists():
    raise SystemExit(f"train the reference policy first: {ckpt} missing")

cfg = load_run_config(root / "configs" / "walk_reference.yaml")
policy = PolicyFn.from_checkpoint(ckpt)

report = eval_tracking(policy, cfg, duration=60.0, seed=7)
print(f"60 s tracking: sagittal {report.mean_vx_error:.3f} m/s, "
      f"lateral {report.mean_vy_error:.3f} m/s, yaw {report.mean_wz_error:.3f} rad/s")

out = record_trajectory(policy, cfg, duration=10.0,
                        out_path=root / "artifacts" / "demo_trajectory.csv", seed=3)
print(f"trajectory written to {out} (+ .svg path plot)")
