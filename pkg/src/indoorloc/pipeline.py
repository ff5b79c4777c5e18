"""End-to-end localization: classify the scene, translate RGB to a
point-cloud image, regress the 7-value pose, and report it in meters.

A ModelRegistry is a directory of trained checkpoints plus a reference to
the dataset whose manifest supplies per-scene bounds:

    registry/
      registry.json            {"dataset": "<path to dataset root>"}
      classifier.pt
      translator_rgb2pc.pt
      translator_pc2rgb.pt     (optional; conversion utility only)
      regressor_scene_<id>.pt  (one per trained scene)

Once loaded, a registry is immutable and localize() is a pure function of
(registry, image).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import DatasetManifest
from .errors import RegistryError
from .geometry import quat_normalize
from .models import load_checkpoint, signed_to_unit, to_signed, to_unit

CLASSIFIER_FILE = "classifier.pt"
TRANSLATOR_FILES = {"rgb2pc": "translator_rgb2pc.pt", "pc2rgb": "translator_pc2rgb.pt"}
REGRESSOR_PATTERN = "regressor_scene_{sid}.pt"
REGISTRY_FILE = "registry.json"


@dataclass(frozen=True)
class PoseEstimate:
    """Localization result: scene, confidence, and the pose in meters."""

    scene_id: int
    confidence: float
    position: np.ndarray  # meters, world frame
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    out_of_bounds: bool  # outside the scene bounds + 10% margin


@dataclass
class ModelRegistry:
    root: Path
    manifest: DatasetManifest
    classifier: object = None
    translators: dict = field(default_factory=dict)  # direction -> generator
    regressors: dict = field(default_factory=dict)  # scene_id -> regressor

    @classmethod
    def load(cls, root: str | Path, dataset: str | Path | None = None) -> "ModelRegistry":
        root = Path(root)
        if not root.is_dir():
            raise RegistryError(f"registry directory {root} does not exist")
        if dataset is None:
            meta_path = root / REGISTRY_FILE
            if not meta_path.exists():
                raise RegistryError(
                    f"{meta_path} missing; pass the dataset path explicitly or "
                    "train via the CLI, which records it"
                )
            dataset = json.loads(meta_path.read_text())["dataset"]
        manifest = DatasetManifest.load(dataset)
        reg = cls(root=root, manifest=manifest)
        cls_path = root / CLASSIFIER_FILE
        if cls_path.exists():
            reg.classifier, _, _ = load_checkpoint(cls_path, "classifier")
        for direction, name in TRANSLATOR_FILES.items():
            path = root / name
            if path.exists():
                reg.translators[direction], _, _ = load_checkpoint(path, "generator")
        for sid in range(manifest.num_scenes):
            path = root / REGRESSOR_PATTERN.format(sid=sid)
            if path.exists():
                reg.regressors[sid], _, _ = load_checkpoint(path, "regressor")
        return reg

    def missing_for_localize(self) -> list[str]:
        """Gaps that would block localize() for at least some scene."""
        gaps = []
        if self.classifier is None:
            gaps.append(CLASSIFIER_FILE)
        if "rgb2pc" not in self.translators:
            gaps.append(TRANSLATOR_FILES["rgb2pc"])
        for sid in range(self.manifest.num_scenes):
            if sid not in self.regressors:
                gaps.append(REGRESSOR_PATTERN.format(sid=sid))
        return gaps

    def require(self, scene_id: int):
        if scene_id not in self.regressors:
            raise RegistryError(f"registry has no regressor for scene {scene_id}")


def record_dataset(root: str | Path, dataset: str | Path):
    """Write registry.json pointing at the dataset the models were trained on."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / REGISTRY_FILE).write_text(json.dumps({"dataset": str(dataset)}, indent=1))


def localize(registry: ModelRegistry, rgb: np.ndarray) -> PoseEstimate:
    """Estimate the camera pose of one RGB image through the full pipeline."""
    size = registry.manifest.image_size
    rgb = np.asarray(rgb)
    if rgb.shape != (size, size, 3) or rgb.dtype != np.uint8:
        raise ValueError(
            f"expected a uint8 image of shape ({size}, {size}, 3), got "
            f"{rgb.dtype} {rgb.shape}"
        )
    if registry.classifier is None:
        raise RegistryError("registry has no classifier")
    if "rgb2pc" not in registry.translators:
        raise RegistryError("registry has no rgb2pc translator")
    with torch.no_grad():
        probs = registry.classifier(to_unit(rgb))[0].numpy()
        scene_id = int(np.argmax(probs))  # first max: lowest class index wins ties
        confidence = float(probs[scene_id])
        registry.require(scene_id)
        fake_pc = registry.translators["rgb2pc"](to_signed(rgb))
        pred = registry.regressors[scene_id](signed_to_unit(fake_pc))[0].numpy()
    bounds = registry.manifest.scene_bounds(scene_id)
    position = bounds.from_unit(pred[:3].astype(np.float64))
    orientation = quat_normalize(pred[3:].astype(np.float64))
    margin = 0.1 * bounds.extent
    out = bool(
        np.any(position < bounds.min_corner - margin)
        or np.any(position > bounds.max_corner + margin)
    )
    return PoseEstimate(
        scene_id=scene_id,
        confidence=confidence,
        position=position,
        orientation=orientation,
        out_of_bounds=out,
    )


def translate_image(registry: ModelRegistry, img: np.ndarray, direction: str) -> np.ndarray:
    """Run the translator in either direction on one uint8 image."""
    if direction not in TRANSLATOR_FILES:
        raise ValueError(f"direction must be one of {sorted(TRANSLATOR_FILES)}")
    if direction not in registry.translators:
        raise RegistryError(f"registry has no {direction} translator")
    size = registry.manifest.image_size
    img = np.asarray(img)
    if img.shape != (size, size, 3) or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 image of shape ({size}, {size}, 3)")
    with torch.no_grad():
        out = registry.translators[direction](to_signed(img))
    arr = signed_to_unit(out).clamp(0, 1).permute(0, 2, 3, 1).numpy()[0]
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)
