"""On-disk dataset: paired PNG images, one JSON manifest, hash-based splits.

Layout under the dataset root:

    scene_<id>/rgb/<index>.png   8-bit RGB surface render
    scene_<id>/pc/<index>.png    8-bit RGB point-cloud render
    manifest.json                format version, bounds, labels, splits

Labels live in the manifest only: normalized position in [-1, 1]^3 plus a
unit quaternion (w, x, y, z). Split assignment is a pure function of
(scene_id, index, split_seed), so regenerating a dataset reproduces the
same splits.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

from .config import PipelineConfig
from .errors import DatasetError, EmptyDatasetError
from .geometry import Pose, SceneBounds, normalize_position, quat_normalize
from .mesh import subdivide_mesh
from .render import CameraIntrinsics, render_pair
from .scene import build_scene
from .trajectory import TrajectoryRegime, sample_trajectory

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")

_REGIME_TAGS = {"lateral-sweep": 1, "orbit": 2, "jitter": 3}


@dataclass(frozen=True)
class SamplePair:
    """One paired training record with its exact pose label."""

    scene_id: int
    index: int
    regime: str
    rgb: np.ndarray  # (H, W, 3) uint8
    pc: np.ndarray  # (H, W, 3) uint8
    position: np.ndarray  # (3,) float64 normalized to [-1, 1]
    quaternion: np.ndarray  # (4,) float64 unit, (w, x, y, z)

    def __post_init__(self):
        if self.rgb.shape != self.pc.shape or self.rgb.dtype != np.uint8:
            raise ValueError("rgb and pc must be identically shaped uint8 images")
        if np.any(np.abs(self.position) > 1.0 + 1e-9):
            raise ValueError(f"normalized position {self.position} outside [-1, 1]^3")


@dataclass
class DatasetManifest:
    root: Path
    generation_seed: int
    split_seed: int
    num_scenes: int
    image_size: int
    split_fractions: dict
    bounds: dict  # scene_id -> SceneBounds
    records: list  # dicts: scene_id, index, regime, rgb, pc, position, quaternion, split

    def scene_bounds(self, scene_id: int) -> SceneBounds:
        if scene_id not in self.bounds:
            raise DatasetError(f"manifest has no bounds for scene {scene_id}")
        return self.bounds[scene_id]

    def select(self, split: str | None = None, scene_id: int | None = None) -> list:
        if split is not None and split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        rows = [
            r
            for r in self.records
            if (split is None or r["split"] == split)
            and (scene_id is None or r["scene_id"] == scene_id)
        ]
        return sorted(rows, key=lambda r: (r["scene_id"], r["index"]))

    def to_json(self) -> str:
        data = {
            "format_version": MANIFEST_VERSION,
            "generation_seed": self.generation_seed,
            "split_seed": self.split_seed,
            "num_scenes": self.num_scenes,
            "image_size": self.image_size,
            "split_fractions": self.split_fractions,
            "bounds": {
                str(sid): {"min": list(b.min_corner), "max": list(b.max_corner)}
                for sid, b in sorted(self.bounds.items())
            },
            "samples": self.records,
        }
        return json.dumps(data, sort_keys=True, indent=1)

    @classmethod
    def load(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.exists():
            raise DatasetError(f"no manifest at {path}")
        data = json.loads(path.read_text())
        if data.get("format_version") != MANIFEST_VERSION:
            raise DatasetError(
                f"manifest version {data.get('format_version')} unsupported "
                f"(expected {MANIFEST_VERSION})"
            )
        bounds = {
            int(sid): SceneBounds(np.array(b["min"]), np.array(b["max"]))
            for sid, b in data["bounds"].items()
        }
        return cls(
            root=root,
            generation_seed=data["generation_seed"],
            split_seed=data["split_seed"],
            num_scenes=data["num_scenes"],
            image_size=data["image_size"],
            split_fractions=data["split_fractions"],
            bounds=bounds,
            records=data["samples"],
        )


def split_assignments(indices: list[int], scene_id: int, split_seed: int, fractions: dict) -> dict:
    """Deterministic per-scene split: order indices by hash, slice by fraction.

    Returns index -> split name. Counts match fractions within one sample.
    """

    def hkey(index: int) -> bytes:
        msg = f"{split_seed}:{scene_id}:{index}".encode()
        return hashlib.sha256(msg).digest()

    ordered = sorted(indices, key=lambda i: (hkey(i), i))
    n = len(ordered)
    n_train = round(fractions["train"] * n)
    n_val = round((fractions["train"] + fractions["val"]) * n) - n_train
    out = {}
    for pos, idx in enumerate(ordered):
        if pos < n_train:
            out[idx] = "train"
        elif pos < n_train + n_val:
            out[idx] = "val"
        else:
            out[idx] = "test"
    return out


def write_dataset(
    samples: Iterable[SamplePair], root: str | Path, config: PipelineConfig
) -> DatasetManifest:
    """Write a stream of sample pairs into the on-disk layout.

    The root directory must be new or empty; on failure everything written
    is removed so no partial dataset is left behind.
    """
    root = Path(root)
    if root.exists() and any(root.iterdir()):
        raise DatasetError(f"dataset root {root} exists and is not empty")
    root.mkdir(parents=True, exist_ok=True)
    dcfg = config.dataset
    per_scene: dict[int, list[int]] = {}
    records = []
    try:
        for s in samples:
            scene_dir = root / f"scene_{s.scene_id}"
            (scene_dir / "rgb").mkdir(parents=True, exist_ok=True)
            (scene_dir / "pc").mkdir(parents=True, exist_ok=True)
            rgb_rel = f"scene_{s.scene_id}/rgb/{s.index:05d}.png"
            pc_rel = f"scene_{s.scene_id}/pc/{s.index:05d}.png"
            Image.fromarray(s.rgb).save(root / rgb_rel)
            Image.fromarray(s.pc).save(root / pc_rel)
            per_scene.setdefault(s.scene_id, []).append(s.index)
            records.append(
                {
                    "scene_id": s.scene_id,
                    "index": s.index,
                    "regime": s.regime,
                    "rgb": rgb_rel,
                    "pc": pc_rel,
                    "position": [float(x) for x in s.position],
                    "quaternion": [float(x) for x in s.quaternion],
                }
            )
        if not records:
            if dcfg.allow_empty:
                records = []
            else:
                raise EmptyDatasetError("no samples to write (set dataset.allow_empty to permit)")
        for scene_id, indices in per_scene.items():
            assign = split_assignments(indices, scene_id, dcfg.split_seed, dcfg.split)
            for r in records:
                if r["scene_id"] == scene_id:
                    r["split"] = assign[r["index"]]
        records.sort(key=lambda r: (r["scene_id"], r["index"]))
        bounds = getattr(samples, "bounds", None) or {}
        manifest = DatasetManifest(
            root=root,
            generation_seed=dcfg.seed,
            split_seed=dcfg.split_seed,
            num_scenes=config.scenes.num_scenes,
            image_size=config.camera.image_size,
            split_fractions=dict(dcfg.split),
            bounds=bounds,
            records=records,
        )
        (root / MANIFEST_NAME).write_text(manifest.to_json())
        return manifest
    except BaseException:
        shutil.rmtree(root, ignore_errors=True)
        raise


def read_split(
    manifest: DatasetManifest, split: str, scene_id: int | None = None
) -> Iterator[SamplePair]:
    """Yield decoded sample pairs of one split in (scene_id, index) order."""
    for r in manifest.select(split, scene_id):
        rgb_path = manifest.root / r["rgb"]
        pc_path = manifest.root / r["pc"]
        try:
            rgb = np.asarray(Image.open(rgb_path).convert("RGB"))
            pc = np.asarray(Image.open(pc_path).convert("RGB"))
        except (OSError, SyntaxError) as e:
            raise DatasetError(f"cannot read sample image: {e}") from e
        yield SamplePair(
            scene_id=r["scene_id"],
            index=r["index"],
            regime=r["regime"],
            rgb=rgb,
            pc=pc,
            position=np.array(r["position"], dtype=np.float64),
            quaternion=np.array(r["quaternion"], dtype=np.float64),
        )


class _SampleStream:
    """Iterable over rendered sample pairs that also exposes scene bounds."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.bounds: dict[int, SceneBounds] = {}

    def _scene_ids(self) -> list[int]:
        dcfg = self.config.dataset
        ids = dcfg.scene_ids
        if ids is None:
            ids = list(range(self.config.scenes.num_scenes))
        bad = [i for i in ids if not 0 <= i < self.config.scenes.num_scenes]
        if bad:
            raise DatasetError(f"scene_ids {bad} out of range")
        return sorted(ids)

    def _regime_counts(self, total: int) -> list[tuple[str, int]]:
        mix = self.config.dataset.regimes
        kinds = sorted(mix)
        raw = {k: mix[k] * total for k in kinds}
        counts = {k: int(np.floor(raw[k])) for k in kinds}
        # largest remainder apportionment
        leftover = total - sum(counts.values())
        by_frac = sorted(kinds, key=lambda k: (counts[k] + 1 - raw[k], k))
        for k in by_frac[:leftover]:
            counts[k] += 1
        return [(k, counts[k]) for k in kinds if counts[k] > 0]

    def __iter__(self) -> Iterator[SamplePair]:
        cfg = self.config
        dcfg = cfg.dataset
        intr = CameraIntrinsics(
            width=cfg.camera.image_size,
            height=cfg.camera.image_size,
            fov=np.radians(cfg.camera.fov_deg),
            near=cfg.camera.near,
            far=cfg.camera.far,
        )
        for scene_id in self._scene_ids():
            _, mesh, bounds = build_scene(scene_id, dcfg.seed, cfg.scenes)
            self.bounds[scene_id] = bounds
            submesh = subdivide_mesh(mesh, dcfg.max_edge, dcfg.vertex_cap)
            index = 0
            for kind, count in self._regime_counts(dcfg.samples_per_scene):
                regime = TrajectoryRegime(kind)
                seed = ((dcfg.seed * 1000003 + scene_id) * 1000003 + _REGIME_TAGS[kind]) % 2**63
                for pose in sample_trajectory(regime, bounds, count, seed=seed):
                    rgb, pc = render_pair(mesh, submesh, pose, intr)
                    yield SamplePair(
                        scene_id=scene_id,
                        index=index,
                        regime=kind,
                        rgb=rgb,
                        pc=pc,
                        position=normalize_position(pose.position, bounds),
                        quaternion=quat_normalize(pose.orientation),
                    )
                    index += 1


def generate_dataset(config: PipelineConfig, root: str | Path) -> DatasetManifest:
    """Render and write the full dataset described by `config`."""
    stream = _SampleStream(config)
    return write_dataset(stream, root, config)
