import pytest

from indoorloc.config import config_from_dict
from indoorloc.dataset import generate_dataset


@pytest.fixture(scope="session")
def tiny_config():
    """2 small scenes at 32x32: fast enough for unit-level training tests."""
    return config_from_dict(
        {
            "scenes": {"num_scenes": 2},
            "camera": {"image_size": 32},
            "dataset": {
                "samples_per_scene": 40,
                "seed": 5,
                "split": {"train": 0.7, "val": 0.15, "test": 0.15},
                "max_edge": 0.3,
            },
        }
    )


@pytest.fixture(scope="session")
def tiny_manifest(tiny_config, tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny") / "ds"
    return generate_dataset(tiny_config, root)


@pytest.fixture(scope="session")
def micro_manifest(tmp_path_factory):
    """16 train samples per scene: the overfit-oracle scale."""
    cfg = config_from_dict(
        {
            "scenes": {"num_scenes": 2},
            "camera": {"image_size": 32},
            "dataset": {
                "samples_per_scene": 23,
                "seed": 5,
                "split": {"train": 0.7, "val": 0.15, "test": 0.15},
                "max_edge": 0.3,
            },
        }
    )
    root = tmp_path_factory.mktemp("micro") / "ds"
    return generate_dataset(cfg, root)
