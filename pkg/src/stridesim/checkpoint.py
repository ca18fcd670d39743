"""Versioned binary checkpoint format for policy parameters.

Layout: magic ``SSCP`` | u32 version | u32 header length | header JSON |
raw row-major array payload in header order. The header records each array's
name/shape/dtype plus the observation-layout and config hashes, so a loaded
policy can refuse to run against a mismatched environment. Round-trips are
bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .nets import ActorCritic

MAGIC = b"SSCP"
VERSION = 1

OBS_LAYOUT = "omega:3,gravity:3,linvel:3,command:3,qpos:12,qvel:12,prev_action:12|v1"


def obs_layout_hash() -> str:
    return hashlib.sha256(OBS_LAYOUT.encode()).hexdigest()[:16]


def config_hash(config) -> str:
    """Stable hash of any JSON-serializable config structure."""
    blob = json.dumps(config, sort_keys=True, default=_coerce).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if hasattr(x, "__dict__"):
        return vars(x)
    return str(x)


def _param_names(ac: ActorCritic) -> list[str]:
    names = []
    for net in ("actor", "critic"):
        mlp = getattr(ac, net)
        for k in range(mlp.num_layers):
            names.append(f"{net}.W{k}")
            names.append(f"{net}.b{k}")
    names.append("log_std")
    return names


def save(path, ac: ActorCritic, cfg_hash: str = "", meta: dict | None = None) -> None:
    path = Path(path)
    params = ac.parameters()
    names = _param_names(ac)
    header = {
        "arrays": [
            {"name": n, "shape": list(p.shape), "dtype": str(p.dtype)}
            for n, p in zip(names, params)
        ],
        "obs_dim": ac.obs_dim,
        "act_dim": ac.act_dim,
        "hidden": list(ac.hidden),
        "obs_layout_hash": obs_layout_hash(),
        "config_hash": cfg_hash,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for p in params:
            f.write(np.ascontiguousarray(p).tobytes())


def load(path) -> tuple[ActorCritic, dict]:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode())
        ac = ActorCritic(header["obs_dim"], header["act_dim"], tuple(header["hidden"]), seed=0)
        arrays = []
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dtype = np.dtype(spec["dtype"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(n * dtype.itemsize)
            arrays.append(np.frombuffer(buf, dtype=dtype).reshape(shape).copy())
    ac.set_parameters(arrays)
    return ac, header


def verify_compatible(header: dict, cfg_hash: str | None = None) -> None:
    """Raise if the checkpoint was built against a different observation
    layout (or, when given, a different run config)."""
    if header["obs_layout_hash"] != obs_layout_hash():
        raise ValueError(
            "checkpoint observation layout mismatch: "
            f"{header['obs_layout_hash']} != {obs_layout_hash()}"
        )
    if cfg_hash is not None and header["config_hash"] and header["config_hash"] != cfg_hash:
        raise ValueError(f"checkpoint config hash mismatch: {header['config_hash']} != {cfg_hash}")
