"""Ground models: flat, band-limited rough, stairs, and slopes.

A terrain is a heightfield h(x, y) plus contact material properties. The
height/normal evaluation lives in the numba kernels so the simulator and this
module always agree; this wrapper owns construction and the Python-facing API.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

KINDS = ("flat", "rough", "stairs", "slope")
_KIND_IDS = {"flat": K.TERRAIN_FLAT, "rough": K.TERRAIN_ROUGH, "stairs": K.TERRAIN_STAIRS, "slope": K.TERRAIN_SLOPE}

DEFAULT_STAIR_RISER = 0.04   # m
DEFAULT_STAIR_RUN = 0.30     # m
DEFAULT_ROUGH_AMPLITUDE = 0.02  # m, peak deviation (4 cm peak-to-peak)


@dataclass(frozen=True)
class TerrainField:
    kind: str
    params: np.ndarray = field(default_factory=lambda: np.zeros(16))
    friction: float = 0.8
    restitution: float = 0.0

    @property
    def kind_id(self) -> int:
        return _KIND_IDS[self.kind]

    def height(self, x: float, y: float) -> float:
        return K.terrain_height(self.kind_id, self.params, float(x), float(y))

    def normal(self, x: float, y: float) -> np.ndarray:
        n = np.empty(3)
        K._terrain_normal(self.kind_id, self.params, float(x), float(y), n)
        return n

    def with_material(self, friction: float, restitution: float) -> "TerrainField":
        return TerrainField(self.kind, self.params, friction, restitution)


def flat(friction: float = 0.8, restitution: float = 0.0) -> TerrainField:
    return TerrainField("flat", np.zeros(16), friction, restitution)


def rough(rng: np.random.Generator, amplitude: float = DEFAULT_ROUGH_AMPLITUDE) -> TerrainField:
    """Sum of four random plane waves, peak height bounded by `amplitude`."""
    params = np.zeros(16)
    weights = rng.uniform(0.5, 1.0, size=4)
    weights *= amplitude / weights.sum()
    for k in range(4):
        wavelength = rng.uniform(0.4, 1.5)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        kmag = 2.0 * np.pi / wavelength
        params[4 * k] = weights[k]
        params[4 * k + 1] = kmag * np.cos(heading)
        params[4 * k + 2] = kmag * np.sin(heading)
        params[4 * k + 3] = rng.uniform(0.0, 2.0 * np.pi)
    return TerrainField("rough", params)


def stairs(riser: float = DEFAULT_STAIR_RISER, run: float = DEFAULT_STAIR_RUN, start_x: float = 1.0) -> TerrainField:
    params = np.zeros(16)
    params[0] = riser
    params[1] = run
    params[2] = start_x
    return TerrainField("stairs", params)


def slope(angle_deg: float, start_x: float = 1.0) -> TerrainField:
    params = np.zeros(16)
    params[0] = np.tan(np.radians(angle_deg))
    params[1] = start_x
    return TerrainField("slope", params)


def generate_terrain(kind: str, rng: np.random.Generator, **kwargs) -> TerrainField:
    """Build a terrain of the given kind; random kinds draw from `rng`."""
    if kind == "flat":
        return flat(**kwargs)
    if kind == "rough":
        return rough(rng, **kwargs)
    if kind == "stairs":
        return stairs(**kwargs)
    if kind == "slope":
        kwargs.setdefault("angle_deg", 10.0)
        return slope(**kwargs)
    raise ValueError(f"unknown terrain kind {kind!r} (expected one of {KINDS})")
