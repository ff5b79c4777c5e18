import json

import numpy as np
import pytest

from indoorloc.config import ModelsConfig, StageConfig
from indoorloc.dataset import read_split
from indoorloc.errors import RegistryError
from indoorloc.models import save_checkpoint
from indoorloc.pipeline import ModelRegistry, PoseEstimate, localize, record_dataset, translate_image
from indoorloc.training import train_classifier, train_regressor, train_translator

MCFG = ModelsConfig()


@pytest.fixture(scope="module")
def registry_dir(tiny_manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("registry")
    model, _ = train_classifier(
        tiny_manifest, StageConfig(epochs=25, batch_size=16, lr=2e-3, seed=0), MCFG
    )
    save_checkpoint(out / "classifier.pt", "classifier", model)
    gen, _, _ = train_translator(
        tiny_manifest, StageConfig(steps=60, batch_size=8, lr=2e-4, beta1=0.5, seed=1), MCFG
    )
    save_checkpoint(out / "translator_rgb2pc.pt", "generator", gen)
    reg0, _ = train_regressor(
        tiny_manifest, 0, StageConfig(epochs=40, batch_size=16, seed=2), MCFG
    )
    save_checkpoint(out / "regressor_scene_0.pt", "regressor", reg0)
    record_dataset(out, tiny_manifest.root)
    return out


@pytest.fixture(scope="module")
def registry(registry_dir):
    return ModelRegistry.load(registry_dir)


class TestModelRegistry:
    def test_load_discovers_components(self, registry):
        assert registry.classifier is not None
        assert "rgb2pc" in registry.translators
        assert 0 in registry.regressors

    def test_missing_report(self, registry):
        gaps = registry.missing_for_localize()
        assert "regressor_scene_1.pt" in gaps
        assert "classifier.pt" not in gaps

    def test_missing_registry_json(self, tmp_path):
        (tmp_path / "r").mkdir()
        with pytest.raises(RegistryError):
            ModelRegistry.load(tmp_path / "r")

    def test_dataset_override(self, registry_dir, tiny_manifest):
        reg = ModelRegistry.load(registry_dir, dataset=tiny_manifest.root)
        assert reg.manifest.num_scenes == 2


class TestLocalize:
    def test_estimate_contract(self, registry, tiny_manifest):
        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        est = localize(registry, sample.rgb)
        assert isinstance(est, PoseEstimate)
        assert abs(np.linalg.norm(est.orientation) - 1.0) < 1e-6
        assert np.all(np.isfinite(est.position))
        assert 0.0 <= est.confidence <= 1.0
        bounds = tiny_manifest.scene_bounds(est.scene_id)
        if not est.out_of_bounds:
            margin = 0.1 * bounds.extent
            assert np.all(est.position >= bounds.min_corner - margin)
            assert np.all(est.position <= bounds.max_corner + margin)

    def test_repeated_calls_identical(self, registry, tiny_manifest):
        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        a = localize(registry, sample.rgb)
        b = localize(registry, sample.rgb)
        assert a.scene_id == b.scene_id
        assert a.confidence == b.confidence
        assert np.array_equal(a.position, b.position)
        assert np.array_equal(a.orientation, b.orientation)

    def test_confidence_is_softmax_max(self, registry, tiny_manifest):
        from indoorloc.models import to_unit
        import torch

        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        est = localize(registry, sample.rgb)
        with torch.no_grad():
            probs = registry.classifier(to_unit(sample.rgb))[0].numpy()
        assert est.confidence == pytest.approx(float(probs.max()))
        assert est.scene_id == int(np.argmax(probs))

    def test_wrong_size_rejected(self, registry):
        with pytest.raises(ValueError):
            localize(registry, np.zeros((16, 16, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            localize(registry, np.zeros((32, 32, 3), dtype=np.float32))

    def test_missing_scene_regressor_named(self, registry, tiny_manifest):
        # find a scene-1 test image; classifier should route it to scene 1,
        # which has no regressor in this registry
        sample = next(read_split(tiny_manifest, "test", scene_id=1))
        with pytest.raises(RegistryError, match="scene 1"):
            localize(registry, sample.rgb)


class TestTranslateImage:
    def test_rgb2pc_output_contract(self, registry, tiny_manifest):
        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        out = translate_image(registry, sample.rgb, "rgb2pc")
        assert out.shape == sample.rgb.shape
        assert out.dtype == np.uint8

    def test_unknown_direction(self, registry, tiny_manifest):
        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        with pytest.raises(ValueError):
            translate_image(registry, sample.rgb, "pc2depth")

    def test_missing_direction(self, registry, tiny_manifest):
        sample = next(read_split(tiny_manifest, "test", scene_id=0))
        with pytest.raises(RegistryError):
            translate_image(registry, sample.rgb, "pc2rgb")
