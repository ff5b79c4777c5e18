"""Camera trajectory regimes: lateral sweeps, orbits, and random jitter.

Every regime is deterministic in its seed and keeps poses strictly inside
the scene bounds. Exact step sizes and yaw increments are parameters with
declared defaults rather than fixed constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import Pose, SceneBounds, look_at_quat, yaw_pitch_quat

_TRAJ_STREAM = 202

REGIME_DEFAULTS = {
    "lateral-sweep": {
        "height_frac": 0.55,
        "margin_frac": 0.2,
        "yaw_range": 2.0 * math.pi / 3.0,
        "yaw_steps": 5,
    },
    "orbit": {"radius_frac": 0.7, "height_frac": 0.5},
    "jitter": {"margin_frac": 0.1, "pitch_max": 0.15},
}


@dataclass(frozen=True)
class TrajectoryRegime:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REGIME_DEFAULTS:
            raise ConfigError(f"unknown trajectory regime {self.kind!r}")
        unknown = set(self.params) - set(REGIME_DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} parameters: {sorted(unknown)}")

    def param(self, name: str):
        return self.params.get(name, REGIME_DEFAULTS[self.kind][name])


def _check_inside(positions: np.ndarray, bounds: SceneBounds, kind: str):
    lo, hi = bounds.min_corner, bounds.max_corner
    if len(positions) and (np.any(positions < lo) or np.any(positions > hi)):
        raise ConfigError(f"{kind} trajectory places poses outside the scene bounds")


def _sweep(regime: TrajectoryRegime, bounds: SceneBounds, n: int) -> list[Pose]:
    lo, hi = bounds.min_corner, bounds.max_corner
    ext = bounds.extent
    height = lo[2] + regime.param("height_frac") * ext[2]
    margin = regime.param("margin_frac")
    yaw_range = regime.param("yaw_range")
    yaw_steps = max(1, int(regime.param("yaw_steps")))
    stations = math.ceil(n / yaw_steps)
    cols = max(1, math.ceil(math.sqrt(stations)))
    rows = max(1, math.ceil(stations / cols))
    xs = np.linspace(lo[0] + margin * ext[0], hi[0] - margin * ext[0], cols)
    ys = np.linspace(lo[1] + margin * ext[1], hi[1] - margin * ext[1], rows)
    poses = []
    for r in range(rows):
        order = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        for c in order:
            for k in range(yaw_steps):
                if len(poses) == n:
                    return poses
                frac = 0.5 if yaw_steps == 1 else k / (yaw_steps - 1)
                yaw = -yaw_range / 2 + yaw_range * frac
                pos = np.array([xs[c], ys[r], height])
                poses.append(Pose(pos, yaw_pitch_quat(yaw, 0.0)))
    return poses


def _orbit(regime: TrajectoryRegime, bounds: SceneBounds, n: int) -> list[Pose]:
    center = bounds.center
    ext = bounds.extent
    radius = regime.param("radius_frac") * min(ext[0], ext[1]) / 2.0
    height = bounds.min_corner[2] + regime.param("height_frac") * ext[2]
    poses = []
    for i in range(n):
        theta = 2.0 * math.pi * i / n
        pos = np.array(
            [center[0] + radius * math.cos(theta), center[1] + radius * math.sin(theta), height]
        )
        poses.append(Pose(pos, look_at_quat(pos, center)))
    return poses


def _jitter(regime: TrajectoryRegime, bounds: SceneBounds, n: int, seed: int) -> list[Pose]:
    rng = np.random.default_rng([_TRAJ_STREAM, seed])
    margin = regime.param("margin_frac")
    pitch_max = regime.param("pitch_max")
    lo = bounds.min_corner + margin * bounds.extent
    hi = bounds.max_corner - margin * bounds.extent
    poses = []
    for _ in range(n):
        pos = rng.uniform(lo, hi)
        yaw = float(rng.uniform(0.0, 2.0 * math.pi))
        pitch = float(rng.uniform(-pitch_max, pitch_max))
        poses.append(Pose(pos, yaw_pitch_quat(yaw, pitch)))
    return poses


def sample_trajectory(
    regime: TrajectoryRegime, bounds: SceneBounds, n: int, seed: int = 0
) -> list[Pose]:
    """Generate n camera poses for one regime, deterministically in seed."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return []
    if regime.kind == "lateral-sweep":
        poses = _sweep(regime, bounds, n)
    elif regime.kind == "orbit":
        poses = _orbit(regime, bounds, n)
    else:
        poses = _jitter(regime, bounds, n, seed)
    _check_inside(np.array([p.position for p in poses]), bounds, regime.kind)
    return poses
