"""Scripted teleoperation session against the live service.

Starts the service on a free port, connects a commander over the WebSocket
protocol, steers for a few seconds, and prints the telemetry it gets back.
With the browser panel built (frontend/dist), the same service serves it at
http://127.0.0.1:<port>/.
"""

import time
from pathlib import Path

from stridesim.config import load_run_config
from stridesim.harness import PolicyFn, standing_policy
from stridesim.teleop import TeleopClient, TeleopServer

root = Path(__file__).resolve().parents[1]
ckpt = root / "artifacts" / "checkpoints" / "walk_reference.ckpt"
policy = PolicyFn.from_checkpoint(ckpt) if ckpt.exists() else standing_policy
if policy is standing_policy:
    print("no trained checkpoint found; using the standing policy")

cfg = load_run_config(root / "configs" / "walk_reference.yaml")
static = root / "frontend" / "dist"
server = TeleopServer(policy, cfg, port=0, seed=0,
                      static_dir=static if static.exists() else None, realtime=False)
port = server.start()
print(f"service on port {port}")

client = TeleopClient(port)
client.send({"type": "hello", "role": "commander"})
welcome = client.recv_until("welcome")
print(f"lease acquired: {welcome['lease']}, ranges: {welcome['ranges']}")

client.send({"type": "command", "vx": 0.4, "vy": 0.0, "wz": 0.0, "timestamp": time.time()})
for _ in range(5):
    frame = client.recv_until("telemetry")
    print(f"t={frame['sim_time']:5.2f} s cmd={frame['commanded_vel']} "
          f"actual={frame['actual_vel']} feet={frame['foot_forces']} N")
    time.sleep(0.1)

client.close()
server.stop()
print("session closed")
