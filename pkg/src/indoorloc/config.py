"""Nested run configuration: defaults, YAML loading, and validation.

One YAML document configures every stage. Unknown keys are rejected so
typos fail loudly. All sections have working defaults; a config file only
needs the keys it overrides.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

CONFIG_VERSION = 1

REGIME_KINDS = ("lateral-sweep", "orbit", "jitter")


@dataclass
class SceneConfig:
    num_scenes: int = 4
    room_width: tuple[float, float] = (6.0, 10.0)
    room_depth: tuple[float, float] = (6.0, 10.0)
    room_height: tuple[float, float] = (2.6, 3.4)
    min_objects: int = 3
    max_objects: int = 8
    hue_margin: float = 0.04
    separability_margin: float = 0.1

    def validate(self):
        if self.num_scenes < 2:
            raise ConfigError(f"num_scenes must be >= 2, got {self.num_scenes}")
        if not (3 <= self.min_objects <= self.max_objects <= 8):
            raise ConfigError("object count range must satisfy 3 <= min <= max <= 8")
        for name, (lo, hi) in [
            ("room_width", self.room_width),
            ("room_depth", self.room_depth),
            ("room_height", self.room_height),
        ]:
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} range must be positive and ordered, got {(lo, hi)}")


@dataclass
class CameraConfig:
    image_size: int = 64
    fov_deg: float = 60.0
    near: float = 0.05
    far: float = 50.0

    def validate(self):
        if self.image_size < 16 or self.image_size > 128:
            raise ConfigError(f"image_size must be in [16, 128], got {self.image_size}")
        if not (0 < self.near < self.far):
            raise ConfigError("need 0 < near < far")
        if not (0 < self.fov_deg < 180):
            raise ConfigError("fov_deg must be in (0, 180)")


@dataclass
class DatasetConfig:
    samples_per_scene: int = 300
    seed: int = 7
    split_seed: int = 99
    split: dict = field(default_factory=lambda: {"train": 0.8, "val": 0.1, "test": 0.1})
    regimes: dict = field(
        default_factory=lambda: {"lateral-sweep": 0.4, "orbit": 0.2, "jitter": 0.4}
    )
    max_edge: float = 0.15
    vertex_cap: int = 200_000
    scene_ids: list[int] | None = None
    allow_empty: bool = False

    def validate(self):
        if self.samples_per_scene < 0:
            raise ConfigError("samples_per_scene must be >= 0")
        if set(self.split) != {"train", "val", "test"}:
            raise ConfigError(f"split must name exactly train/val/test, got {sorted(self.split)}")
        total = sum(self.split.values())
        if abs(total - 1.0) > 1e-9 or any(v < 0 for v in self.split.values()):
            raise ConfigError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        if any(k not in REGIME_KINDS for k in self.regimes):
            raise ConfigError(f"unknown regime in mix: {sorted(self.regimes)}")
        total = sum(self.regimes.values())
        if abs(total - 1.0) > 1e-9 or any(v < 0 for v in self.regimes.values()):
            raise ConfigError(f"regime fractions must be non-negative and sum to 1, got {self.regimes}")
        if self.max_edge <= 0:
            raise ConfigError("max_edge must be positive")
        if self.vertex_cap < 1000:
            raise ConfigError("vertex_cap unreasonably small")


@dataclass
class ModelsConfig:
    classifier_widths: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    drop_connect: float = 0.2
    generator_widths: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    discriminator_widths: list[int] = field(default_factory=lambda: [32, 64, 128])
    regressor_widths: list[int] = field(default_factory=lambda: [24, 48, 96, 160])
    regressor_expand: int = 4

    def validate(self):
        if not 0.0 <= self.drop_connect <= 1.0:
            raise ConfigError("drop_connect must be in [0, 1]")
        for name, widths, n in [
            ("classifier_widths", self.classifier_widths, 4),
            ("generator_widths", self.generator_widths, 4),
            ("discriminator_widths", self.discriminator_widths, 3),
            ("regressor_widths", self.regressor_widths, 4),
        ]:
            if len(widths) != n or any(w < 1 for w in widths):
                raise ConfigError(f"{name} must be {n} positive ints, got {widths}")


@dataclass
class StageConfig:
    epochs: int = 10
    steps: int = 2000  # translator counts generator steps instead of epochs
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta: float = 250.0  # pose-loss balance factor (regressor)
    lambda_l1: float = 100.0
    direction: str = "rgb2pc"
    max_pairs: int = 0  # translator: cap on training pairs, 0 = all
    lr_schedule: str = "cosine"  # cosine anneal per epoch, or "constant"
    select_best: bool = True  # keep the best-validation checkpoint
    seed: int = 1
    eval_every: int = 200

    def validate(self, stage: str):
        if self.epochs < 1 or self.steps < 1 or self.batch_size < 1:
            raise ConfigError(f"{stage}: epochs/steps/batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"{stage}: lr must be positive")
        if self.beta <= 0:
            raise ConfigError(f"{stage}: beta must be positive")
        if self.lambda_l1 < 0:
            raise ConfigError(f"{stage}: lambda_l1 must be >= 0")
        if self.direction not in ("rgb2pc", "pc2rgb"):
            raise ConfigError(f"{stage}: direction must be rgb2pc or pc2rgb")
        if self.max_pairs < 0:
            raise ConfigError(f"{stage}: max_pairs must be >= 0")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"{stage}: lr_schedule must be cosine or constant")


def _default_stages() -> dict:
    return {
        "classifier": StageConfig(epochs=8, batch_size=16, lr=1e-3, seed=1),
        "translator": StageConfig(
            steps=2000, batch_size=8, lr=2e-4, beta1=0.5, lr_schedule="constant", seed=2
        ),
        "regressor": StageConfig(epochs=100, batch_size=32, lr=1e-3, seed=3),
    }


@dataclass
class PipelineConfig:
    config_version: int = CONFIG_VERSION
    scenes: SceneConfig = field(default_factory=SceneConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    train: dict = field(default_factory=_default_stages)

    def validate(self) -> "PipelineConfig":
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(
                f"unsupported config_version {self.config_version}, expected {CONFIG_VERSION}"
            )
        self.scenes.validate()
        self.camera.validate()
        self.dataset.validate()
        self.models.validate()
        for stage, cfg in self.train.items():
            if stage not in ("classifier", "translator", "regressor"):
                raise ConfigError(f"unknown train stage {stage!r}")
            cfg.validate(stage)
        return self


def _update_dataclass(obj, values: dict, path: str):
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, val in values.items():
        if key not in names:
            raise ConfigError(f"unknown config key {path}.{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(val, dict):
            _update_dataclass(current, val, f"{path}.{key}")
        elif isinstance(current, tuple) and isinstance(val, (list, tuple)):
            setattr(obj, key, tuple(val))
        else:
            setattr(obj, key, val)


def default_config() -> PipelineConfig:
    return PipelineConfig().validate()


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    data = dict(data or {})
    if "config_version" in data:
        cfg.config_version = data.pop("config_version")
    for section in ("scenes", "camera", "dataset", "models"):
        if section in data:
            sub = data.pop(section)
            if not isinstance(sub, dict):
                raise ConfigError(f"config section {section!r} must be a mapping")
            _update_dataclass(getattr(cfg, section), sub, section)
    if "train" in data:
        sub = data.pop("train")
        if not isinstance(sub, dict):
            raise ConfigError("config section 'train' must be a mapping")
        for stage, overrides in sub.items():
            if stage not in cfg.train:
                raise ConfigError(f"unknown train stage {stage!r}")
            _update_dataclass(cfg.train[stage], overrides, f"train.{stage}")
    if data:
        raise ConfigError(f"unknown top-level config keys: {sorted(data)}")
    return cfg.validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Load a YAML config file, or the defaults when path is None."""
    if path is None:
        return default_config()
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return config_from_dict(data)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: PipelineConfig) -> dict:
    return _plain(dataclasses.asdict(cfg))


def save_config(cfg: PipelineConfig, path: str | Path):
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
