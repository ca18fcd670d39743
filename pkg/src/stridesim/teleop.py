"""Teleoperation service: a real-time simulation loop with a JSON message
protocol over WebSocket framing, plus static serving of the browser panel.

One logical thread of control steps the simulation at wall-clock rate;
network I/O happens on per-connection threads decoupled through queues. Any
number of viewers may watch; a single commander holds the lease (first come)
and steers with velocity commands. Telemetry fan-out is latest-wins, so a
slow viewer never stalls the simulation.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimation import StateEstimator
from .harness import make_eval_env

SCHEMA_VERSION = 1
TELEMETRY_HZ = 20.0
COMMAND_STALE_S = 1.0
WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

MIME = {".html": "text/html", ".js": "application/javascript", ".css": "text/css",
        ".svg": "image/svg+xml", ".json": "application/json", ".map": "application/json"}


# -- WebSocket framing (server side, RFC 6455 subset: text/ping/pong/close) ----

def _accept_key(key: str) -> str:
    return base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest()).decode()


def ws_encode_text(payload: str) -> bytes:
    data = payload.encode()
    n = len(data)
    if n < 126:
        header = struct.pack("!BB", 0x81, n)
    elif n < 65536:
        header = struct.pack("!BBH", 0x81, 126, n)
    else:
        header = struct.pack("!BBQ", 0x81, 127, n)
    return header + data


def ws_decode_frame(sock) -> tuple[int, bytes] | None:
    """Read one frame; returns (opcode, payload) or None on a closed socket."""
    head = _read_exact(sock, 2)
    if head is None:
        return None
    b1, b2 = head
    opcode = b1 & 0x0F
    masked = bool(b2 & 0x80)
    length = b2 & 0x7F
    if length == 126:
        ext = _read_exact(sock, 2)
        if ext is None:
            return None
        length = struct.unpack("!H", ext)[0]
    elif length == 127:
        ext = _read_exact(sock, 8)
        if ext is None:
            return None
        length = struct.unpack("!Q", ext)[0]
    mask = b""
    if masked:
        mask = _read_exact(sock, 4)
        if mask is None:
            return None
    payload = _read_exact(sock, length) if length else b""
    if payload is None:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def _read_exact(sock, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except (ConnectionResetError, OSError):
            return None
        if not chunk:
            return None
        buf += chunk
    return buf


# -- server ---------------------------------------------------------------------

@dataclass
class _Client:
    sock: socket.socket
    role: str = "viewer"
    has_lease: bool = False
    alive: bool = True
    lock: threading.Lock = field(default_factory=threading.Lock)

    def send(self, message: dict) -> None:
        data = ws_encode_text(json.dumps(message))
        with self.lock:
            try:
                self.sock.sendall(data)
            except OSError:
                self.alive = False


class TeleopServer:
    """Serves telemetry and accepts velocity commands for one simulated robot."""

    def __init__(self, policy, run_cfg, port: int = 8723, seed: int = 0,
                 static_dir: str | Path | None = None, realtime: bool = True,
                 with_estimator: bool = True):
        self.policy = policy
        self.run_cfg = run_cfg
        self.port = port
        self.seed = seed
        self.realtime = realtime
        self.static_dir = Path(static_dir) if static_dir else None
        self.with_estimator = with_estimator

        self.clients: list[_Client] = []
        self.clients_lock = threading.Lock()
        self.commander: _Client | None = None
        self.command = np.zeros(3)
        self.command_time = -np.inf
        self.command_timestamps: list[float] = []
        self.paused = False
        self.running = False
        self._listener: socket.socket | None = None
        self.ranges = run_cfg.env.command_ranges
        self.sim_thread: threading.Thread | None = None

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> int:
        """Bind, start the accept loop and the simulation loop. Returns the port."""
        self._listener = socket.create_server(("127.0.0.1", self.port))
        self.port = self._listener.getsockname()[1]
        self.running = True
        threading.Thread(target=self._accept_loop, daemon=True).start()
        self.sim_thread = threading.Thread(target=self._sim_loop, daemon=True)
        self.sim_thread.start()
        return self.port

    def stop(self) -> None:
        self.running = False
        if self._listener:
            self._listener.close()
        with self.clients_lock:
            for c in self.clients:
                c.alive = False
                try:
                    c.sock.close()
                except OSError:
                    pass
        if self.sim_thread:
            self.sim_thread.join(timeout=2.0)

    # -- networking -------------------------------------------------------------

    def _accept_loop(self):
        while self.running:
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(sock,), daemon=True).start()

    def _serve_connection(self, sock: socket.socket):
        try:
            request = b""
            while b"\r\n\r\n" not in request:
                chunk = sock.recv(4096)
                if not chunk:
                    sock.close()
                    return
                request += chunk
            head = request.split(b"\r\n\r\n", 1)[0].decode(errors="replace")
            lines = head.split("\r\n")
            target = lines[0].split(" ")[1] if len(lines[0].split(" ")) > 1 else "/"
            headers = {}
            for line in lines[1:]:
                if ":" in line:
                    k, v = line.split(":", 1)
                    headers[k.strip().lower()] = v.strip()
            if headers.get("upgrade", "").lower() == "websocket":
                self._serve_websocket(sock, headers)
            else:
                self._serve_static(sock, target)
        except Exception:
            try:
                sock.close()
            except OSError:
                pass

    def _serve_static(self, sock: socket.socket, target: str):
        body = b"stridesim teleop service\n"
        ctype = "text/plain"
        status = "200 OK"
        if self.static_dir is not None:
            rel = target.split("?")[0].lstrip("/") or "index.html"
            path = (self.static_dir / rel).resolve()
            inside = self.static_dir.resolve() in path.parents
            if inside and path.is_file():
                body = path.read_bytes()
                ctype = MIME.get(path.suffix, "application/octet-stream")
            else:
                status, body = "404 Not Found", b"not found\n"
        sock.sendall(
            f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n".encode() + body
        )
        sock.close()

    def _serve_websocket(self, sock: socket.socket, headers: dict):
        key = headers.get("sec-websocket-key", "")
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
                f"Connection: Upgrade\r\nSec-WebSocket-Accept: {_accept_key(key)}\r\n\r\n"
            ).encode()
        )
        client = _Client(sock=sock)
        with self.clients_lock:
            self.clients.append(client)
        try:
            while self.running and client.alive:
                frame = ws_decode_frame(sock)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 0x8:  # close
                    break
                if opcode == 0x9:  # ping -> pong
                    with client.lock:
                        sock.sendall(struct.pack("!BB", 0x8A, len(payload)) + payload)
                    continue
                if opcode != 0x1:
                    continue
                try:
                    msg = json.loads(payload.decode())
                except json.JSONDecodeError as e:
                    client.send({"type": "error", "message": f"malformed message: {e}"})
                    continue
                self._handle_message(client, msg)
        finally:
            self._drop_client(client)

    def _drop_client(self, client: _Client):
        client.alive = False
        with self.clients_lock:
            if client in self.clients:
                self.clients.remove(client)
            if self.commander is client:
                self.commander = None
                self.command[:] = 0.0
        try:
            client.sock.close()
        except OSError:
            pass

    # -- protocol ----------------------------------------------------------------

    def _handle_message(self, client: _Client, msg: dict):
        kind = msg.get("type")
        if kind == "hello":
            role = msg.get("role", "viewer")
            if role == "commander":
                with self.clients_lock:
                    if self.commander is None or not self.commander.alive:
                        self.commander = client
                        client.role = "commander"
                        client.has_lease = True
                    else:
                        client.send({"type": "lease_rejected", "reason": "another commander holds the lease"})
            client.send({
                "type": "welcome",
                "schema_version": SCHEMA_VERSION,
                "lease": client.has_lease,
                "ranges": {k: list(v) for k, v in self.ranges.items()},
                "telemetry_hz": TELEMETRY_HZ,
            })
        elif kind == "command":
            if not client.has_lease:
                client.send({"type": "error", "message": "no commander lease"})
                return
            try:
                cmd = np.array([float(msg["vx"]), float(msg["vy"]), float(msg["wz"])])
            except (KeyError, TypeError, ValueError) as e:
                client.send({"type": "error", "message": f"malformed command: {e}"})
                return
            cmd[0] = np.clip(cmd[0], *self.ranges["v_x"])
            cmd[1] = np.clip(cmd[1], *self.ranges["v_y"])
            cmd[2] = np.clip(cmd[2], *self.ranges["omega_z"])
            self.command = cmd
            self.command_time = time.monotonic()
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        else:
            client.send({"type": "error", "message": f"unknown message type {kind!r}"})

    def _broadcast(self, message: dict):
        with self.clients_lock:
            clients = list(self.clients)
        for c in clients:
            if c.alive:
                c.send(message)

    # -- simulation -------------------------------------------------------------

    def _sim_loop(self):
        env = make_eval_env(self.run_cfg, self.seed)
        obs = env.reset()
        estimator = None
        if self.with_estimator:
            estimator = StateEstimator(env.model)
            estimator.attach(env)
        step_period = 0.02
        last_telemetry = 0.0
        next_step = time.monotonic()
        while self.running:
            if self.paused:
                time.sleep(0.005)
                next_step = time.monotonic()
                continue
            now = time.monotonic()
            stale = (now - self.command_time) > COMMAND_STALE_S
            if self.commander is None or stale:
                env.commands[0] = 0.0  # stand in place without a commander
            else:
                env.commands[0] = self.command
            action = self.policy(obs)
            obs, reward, done, info = env.step(action)
            if done[0]:
                obs = env.reset()
                if estimator is not None:
                    estimator.attach(env)
            if now - last_telemetry >= 1.0 / TELEMETRY_HZ:
                last_telemetry = now
                v_world = env._rotations()[0] @ env.u[0, 3:6]
                frame = {
                    "type": "telemetry",
                    "schema_version": SCHEMA_VERSION,
                    "timestamp": now,
                    "sim_time": float(env.sim_time[0]),
                    "base_pos": np.round(env.base_pos[0], 4).tolist(),
                    "base_quat": np.round(env.base_quat[0], 5).tolist(),
                    "joint_pos": np.round(env.q[0], 4).tolist(),
                    "actual_vel": [round(float(env.u[0, 3]), 4), round(float(env.u[0, 4]), 4),
                                   round(float(env.u[0, 2]), 4)],
                    "estimated_vel": np.round(
                        estimator.velocity if estimator is not None else v_world, 4
                    ).tolist(),
                    "commanded_vel": np.round(env.commands[0], 4).tolist(),
                    "foot_forces": np.round(info["foot_forces"][0], 2).tolist(),
                    "reward_total": round(float(reward[0]), 5),
                    "reward_terms": {k: round(float(v[0]), 5) for k, v in info["reward_terms"].items()},
                    "paused": self.paused,
                }
                self._broadcast(frame)
            if self.realtime:
                next_step += step_period
                delay = next_step - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_step = time.monotonic()


class TeleopClient:
    """Minimal WebSocket client for tests and scripted sessions."""

    def __init__(self, port: int, host: str = "127.0.0.1", timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(b"stridesim-client" + bytes([0] * 0)).decode()
        self.sock.sendall(
            (
                f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\nUpgrade: websocket\r\n"
                f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\n"
                "Sec-WebSocket-Version: 13\r\n\r\n"
            ).encode()
        )
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        if b"101" not in response.split(b"\r\n", 1)[0]:
            raise ConnectionError("websocket handshake failed")

    def send(self, message: dict):
        data = json.dumps(message).encode()
        mask = b"\x12\x34\x56\x78"
        n = len(data)
        if n < 126:
            header = struct.pack("!BB", 0x81, 0x80 | n)
        elif n < 65536:
            header = struct.pack("!BBH", 0x81, 0x80 | 126, n)
        else:
            header = struct.pack("!BBQ", 0x81, 0x80 | 127, n)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        self.sock.sendall(header + mask + masked)

    def recv(self, timeout: float = 5.0) -> dict | None:
        self.sock.settimeout(timeout)
        frame = ws_decode_frame(self.sock)
        if frame is None:
            return None
        opcode, payload = frame
        if opcode == 0x1:
            return json.loads(payload.decode())
        return None

    def recv_until(self, kind: str, timeout: float = 5.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            msg = self.recv(timeout=max(0.05, deadline - time.monotonic()))
            if msg is not None and msg.get("type") == kind:
                return msg
        raise TimeoutError(f"no {kind!r} message within {timeout} s")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
