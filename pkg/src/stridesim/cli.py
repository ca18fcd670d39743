"""Command-line interface: model validation, training, evaluation, benchmark,
trajectory recording, teleoperation, and simulator diagnostics."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--config", type=str, default=os.environ.get("STRIDESIM_CONFIG"),
                        help="run config YAML (or set STRIDESIM_CONFIG)")
    common.add_argument("--no-dr", action="store_true",
                        help="zero all randomization ranges and noise (debugging)")
    parser = argparse.ArgumentParser(prog="stridesim", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_model = sub.add_parser("model", help="robot description tools", parents=[common])
    model_sub = p_model.add_subparsers(dest="model_cmd", required=True)
    p_validate = model_sub.add_parser("validate", help="check a model file against every invariant")
    p_validate.add_argument("path")

    p_train = sub.add_parser("train", help="train a policy with the configured recipe", parents=[common])
    p_train.add_argument("--iterations", type=int, default=None)
    p_train.add_argument("--out", type=str, default=None)
    p_train.add_argument("--envs", type=int, default=None)
    p_train.add_argument("--resume", type=str, default=None,
                         help="checkpoint to initialize the parameters from")

    p_eval = sub.add_parser("eval", help="tracking evaluation of a checkpoint", parents=[common])
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--duration", type=float, default=60.0)
    p_eval.add_argument("--terrain", default="flat")
    p_eval.add_argument("--out", type=str, default=None)

    p_bench = sub.add_parser("bench", help="environment throughput benchmark", parents=[common])
    p_bench.add_argument("--envs", type=int, default=256)
    p_bench.add_argument("--duration", type=float, default=10.0)
    p_bench.add_argument("--out", type=str, default="artifacts/bench/bench.json")

    p_rec = sub.add_parser("record", help="record a trajectory CSV (+SVG path plot)", parents=[common])
    p_rec.add_argument("--checkpoint", required=True)
    p_rec.add_argument("--duration", type=float, default=10.0)
    p_rec.add_argument("--terrain", default="flat")
    p_rec.add_argument("--out", type=str, default="artifacts/trajectory.csv")

    p_tele = sub.add_parser("teleop", help="serve the teleoperation panel", parents=[common])
    p_tele.add_argument("--checkpoint", required=True)
    p_tele.add_argument("--port", type=int, default=8723)
    p_tele.add_argument("--static-dir", type=str, default=None)

    p_sim = sub.add_parser("sim", help="simulator diagnostics", parents=[common])
    sim_sub = p_sim.add_subparsers(dest="sim_cmd", required=True)
    p_drop = sim_sub.add_parser("drop-test", help="print a PD-held drop settling trace as CSV")
    p_drop.add_argument("--height", type=float, default=0.05)
    p_drop.add_argument("--duration", type=float, default=3.0)

    args = parser.parse_args(argv)

    from .config import load_run_config

    run_cfg = load_run_config(args.config)
    if args.seed is not None:
        run_cfg.env.seed = args.seed
        run_cfg.ppo.seed = args.seed
    if args.no_dr:
        run_cfg = run_cfg.without_dr()

    if args.cmd == "model":
        return _cmd_model_validate(args)
    if args.cmd == "train":
        return _cmd_train(args, run_cfg)
    if args.cmd == "eval":
        return _cmd_eval(args, run_cfg)
    if args.cmd == "bench":
        return _cmd_bench(args, run_cfg)
    if args.cmd == "record":
        return _cmd_record(args, run_cfg)
    if args.cmd == "teleop":
        return _cmd_teleop(args, run_cfg)
    if args.cmd == "sim":
        return _cmd_drop_test(args, run_cfg)
    return 2


def _cmd_model_validate(args) -> int:
    from .model import ModelError, ModelValidationError, load_model

    try:
        model = load_model(args.path)
    except ModelValidationError as e:
        print("INVALID model description:")
        for v in e.violations:
            print(f"  - {v}")
        return 1
    except ModelError as e:
        print(f"PARSE ERROR: {e}")
        return 1
    from .dynamics import standing_pose_height

    print(f"OK: {args.path}")
    print(f"  name:            {model.name}")
    print(f"  total mass:      {model.total_mass():.3f} kg")
    print(f"  joints:          {len(model.joints)} actuated, tree-structured")
    print(f"  standing height: {standing_pose_height(model) + model.torso_top_offset:.3f} m "
          f"(declared {model.standing_height} m)")
    for j in model.joints[:6]:
        short = j.name.split('_', 1)[1]
        print(f"  {short:4s} limits [{np.degrees(j.limit_lo):7.1f}, {np.degrees(j.limit_hi):6.1f}] deg  "
              f"armature {j.armature:.4g} kg m^2  drive {j.actuator}")
    return 0


def _cmd_train(args, run_cfg) -> int:
    from .env import LocomotionEnv
    from .ppo import train

    if args.iterations is not None:
        run_cfg.iterations = args.iterations
    if args.out is not None:
        run_cfg.out_dir = args.out
    if args.envs is not None:
        run_cfg.env.num_envs = args.envs
    model = run_cfg.load_robot()
    env = LocomotionEnv(model, run_cfg.env, rand_cfg=run_cfg.randomization,
                        reward_cfg=run_cfg.rewards, gains=run_cfg.make_gains(model))
    print(f"training: {run_cfg.env.num_envs} envs, {run_cfg.iterations} iterations -> {run_cfg.out_dir}")
    res = train(env, run_cfg.ppo, run_cfg.iterations, run_cfg.out_dir,
                run_config=run_cfg.to_dict(), checkpoint_every=run_cfg.checkpoint_every,
                resume_from=args.resume)
    print(f"done; checkpoint at {res.checkpoint_path}")
    return 0


def _cmd_eval(args, run_cfg) -> int:
    from .harness import PolicyFn, eval_tracking

    policy = PolicyFn.from_checkpoint(args.checkpoint)
    report = eval_tracking(policy, run_cfg, duration=args.duration,
                           seed=run_cfg.env.seed, terrain=args.terrain)
    print(f"tracking over {report.duration:.0f} s on {args.terrain}:")
    print(f"  sagittal |v_x| error: {report.mean_vx_error:.4f} m/s")
    print(f"  lateral  |v_y| error: {report.mean_vy_error:.4f} m/s")
    print(f"  yaw     |w_z| error: {report.mean_wz_error:.4f} rad/s")
    if args.out:
        report.save(args.out)
        print(f"saved {args.out}")
    return 0


def _cmd_bench(args, run_cfg) -> int:
    from .harness import bench

    report = bench(run_cfg, num_envs=args.envs, duration=args.duration,
                   seed=run_cfg.env.seed, out_path=args.out)
    print(json.dumps(report.__dict__, indent=2, default=str))
    return 0


def _cmd_record(args, run_cfg) -> int:
    from .harness import PolicyFn, record_trajectory

    policy = PolicyFn.from_checkpoint(args.checkpoint)
    out = record_trajectory(policy, run_cfg, args.duration, args.out,
                            seed=run_cfg.env.seed, terrain=args.terrain)
    print(f"wrote {out} and {Path(out).with_suffix('.svg')}")
    return 0


def _cmd_teleop(args, run_cfg) -> int:
    from .harness import PolicyFn
    from .teleop import TeleopServer

    policy = PolicyFn.from_checkpoint(args.checkpoint)
    static_dir = args.static_dir
    if static_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = candidate if candidate.exists() else None
    server = TeleopServer(policy, run_cfg, port=args.port, seed=run_cfg.env.seed,
                          static_dir=static_dir)
    port = server.start()
    print(f"teleop service on http://127.0.0.1:{port} (ws same port); ctrl-c to stop")
    try:
        while True:
            import time

            time.sleep(1.0)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _cmd_drop_test(args, run_cfg) -> int:
    from .harness import drop_test_trace

    rows, kinematic_height = drop_test_trace(run_cfg, height=args.height, duration=args.duration)
    print("time,base_z,total_normal_force")
    for t, z, fn in rows:
        print(f"{t:.4f},{z:.6f},{fn:.3f}")
    final_err = abs(rows[-1][1] - kinematic_height) * 1000.0
    print(f"# kinematic standing height: {kinematic_height:.6f} m; final error {final_err:.2f} mm",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
