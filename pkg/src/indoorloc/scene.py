"""Procedural indoor scenes: colored rooms with boxes and wall panels.

Each scene id owns a disjoint hue band, so any two scenes are separable by
color statistics alone. Geometry and palette are a pure function of
(scene_id, seed): the same pair always reproduces the same scene bit for
bit.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field

import numpy as np

from .config import SceneConfig
from .errors import ConfigError
from .geometry import SceneBounds
from .mesh import TriMesh, box_mesh, merge_meshes

# rng stream tags so scene/trajectory/split draws never collide
_SCENE_STREAM = 101

WALL_NAMES = ("floor", "ceiling", "wall_y0", "wall_y1", "wall_x0", "wall_x1")


@dataclass(frozen=True)
class ObjectSpec:
    """One placed primitive: a floor box or a thin wall panel."""

    kind: str  # "box" | "panel"
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    seed: int
    room_size: tuple[float, float, float]
    surface_colors: dict = field(default_factory=dict)  # name -> RGB tuple
    objects: tuple[ObjectSpec, ...] = ()
    palette: tuple[tuple[float, float, float], ...] = ()

    def to_json(self) -> str:
        data = {
            "scene_id": self.scene_id,
            "seed": self.seed,
            "room_size": list(self.room_size),
            "surface_colors": {k: list(v) for k, v in self.surface_colors.items()},
            "objects": [
                {
                    "kind": o.kind,
                    "min_corner": list(o.min_corner),
                    "max_corner": list(o.max_corner),
                    "color": list(o.color),
                }
                for o in self.objects
            ],
            "palette": [list(c) for c in self.palette],
        }
        return json.dumps(data, sort_keys=True)


def scene_hue_band(scene_id: int, num_scenes: int, margin: float) -> tuple[float, float]:
    """Disjoint hue interval for a scene: band i of the unit hue circle."""
    width = 1.0 / num_scenes
    lo = scene_id * width + margin * width
    hi = (scene_id + 1) * width - margin * width
    return lo, hi


def _palette(rng: np.random.Generator, band: tuple[float, float], count: int) -> list[tuple]:
    colors = []
    for _ in range(count):
        h = float(rng.uniform(*band))
        s = float(rng.uniform(0.55, 0.95))
        v = float(rng.uniform(0.45, 0.9))
        colors.append(tuple(round(c, 6) for c in colorsys.hsv_to_rgb(h, s, v)))
    return colors


def build_scene_spec(scene_id: int, seed: int, config: SceneConfig) -> SceneSpec:
    if config.num_scenes < 2:
        raise ConfigError(f"num_scenes must be >= 2, got {config.num_scenes}")
    if not 0 <= scene_id < config.num_scenes:
        raise ValueError(f"scene_id {scene_id} out of range [0, {config.num_scenes})")
    rng = np.random.default_rng([_SCENE_STREAM, seed, scene_id])
    w = round(float(rng.uniform(*config.room_width)), 6)
    d = round(float(rng.uniform(*config.room_depth)), 6)
    h = round(float(rng.uniform(*config.room_height)), 6)
    band = scene_hue_band(scene_id, config.num_scenes, config.hue_margin)
    palette = _palette(rng, band, 12)
    surface_colors = dict(zip(WALL_NAMES, palette[:6]))

    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects = []
    for i in range(n_objects):
        color = palette[6 + i % 6]
        if rng.uniform() < 0.6:
            # floor box, strictly inside the room with a wall margin
            sx = float(rng.uniform(0.4, 1.6))
            sy = float(rng.uniform(0.4, 1.6))
            sz = float(rng.uniform(0.4, min(2.0, h - 0.6)))
            cx = float(rng.uniform(0.5 + sx / 2, w - 0.5 - sx / 2))
            cy = float(rng.uniform(0.5 + sy / 2, d - 0.5 - sy / 2))
            lo = (cx - sx / 2, cy - sy / 2, 0.002)
            hi = (cx + sx / 2, cy + sy / 2, 0.002 + sz)
            kind = "box"
        else:
            # thin panel hung on one of the four walls
            wall = int(rng.integers(0, 4))
            pw = float(rng.uniform(0.8, 2.0))
            ph = float(rng.uniform(0.6, 1.4))
            cz = float(rng.uniform(0.9 + ph / 2, h - 0.3 - ph / 2))
            thick = 0.06
            gap = 0.03
            if wall in (0, 1):  # y = 0 or y = d wall
                cx = float(rng.uniform(0.4 + pw / 2, w - 0.4 - pw / 2))
                y0 = gap if wall == 0 else d - gap - thick
                lo = (cx - pw / 2, y0, cz - ph / 2)
                hi = (cx + pw / 2, y0 + thick, cz + ph / 2)
            else:  # x = 0 or x = w wall
                cy = float(rng.uniform(0.4 + pw / 2, d - 0.4 - pw / 2))
                x0 = gap if wall == 2 else w - gap - thick
                lo = (x0, cy - pw / 2, cz - ph / 2)
                hi = (x0 + thick, cy + pw / 2, cz + ph / 2)
            kind = "panel"
        lo = tuple(round(c, 6) for c in lo)
        hi = tuple(round(c, 6) for c in hi)
        objects.append(ObjectSpec(kind, lo, hi, color))

    return SceneSpec(
        scene_id=scene_id,
        seed=seed,
        room_size=(w, d, h),
        surface_colors=surface_colors,
        objects=tuple(objects),
        palette=tuple(palette),
    )


def scene_mesh(spec: SceneSpec) -> TriMesh:
    """Assemble the room shell (inward faces) plus object boxes."""
    w, d, h = spec.room_size
    # box_mesh face order: -x, +x, -y, +y, -z, +z
    face_colors = np.array(
        [
            spec.surface_colors["wall_x0"],
            spec.surface_colors["wall_x1"],
            spec.surface_colors["wall_y0"],
            spec.surface_colors["wall_y1"],
            spec.surface_colors["floor"],
            spec.surface_colors["ceiling"],
        ]
    )
    parts = [box_mesh([0, 0, 0], [w, d, h], face_colors, inward=True)]
    for obj in spec.objects:
        parts.append(box_mesh(obj.min_corner, obj.max_corner, obj.color))
    return merge_meshes(parts)


def scene_bounds(spec: SceneSpec) -> SceneBounds:
    w, d, h = spec.room_size
    return SceneBounds([0.0, 0.0, 0.0], [w, d, h])


def build_scene(scene_id: int, seed: int, config: SceneConfig):
    """Scene spec + mesh + bounds for one (scene_id, seed)."""
    spec = build_scene_spec(scene_id, seed, config)
    return spec, scene_mesh(spec), scene_bounds(spec)


def mean_color_histogram(images: np.ndarray, bins: int = 4) -> np.ndarray:
    """Mean joint RGB histogram (bins^3, normalized) over a stack of images."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    idx = np.minimum((images.astype(np.int32) * bins) // 256, bins - 1)
    flat = (idx[..., 0] * bins + idx[..., 1]) * bins + idx[..., 2]
    hist = np.bincount(flat.ravel(), minlength=bins**3).astype(np.float64)
    return hist / hist.sum()
