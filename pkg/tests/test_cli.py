import json

import pytest
import yaml

from indoorloc.cli import main


@pytest.fixture(scope="module")
def cli_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "scenes": {"num_scenes": 2},
                "camera": {"image_size": 32},
                "dataset": {"samples_per_scene": 14, "seed": 11, "max_edge": 0.35},
                "train": {
                    "classifier": {"epochs": 2, "batch_size": 8},
                    "translator": {"steps": 4, "batch_size": 4},
                    "regressor": {"epochs": 2, "batch_size": 8},
                },
            }
        )
    )
    return path


class TestUsageErrors:
    def test_no_command(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_localize_requires_registry(self, capsys):
        assert main(["localize", "--image", "x.png"]) == 1
        assert "--registry" in capsys.readouterr().err

    def test_generate_requires_out(self):
        assert main(["generate"]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0

    def test_unknown_flag(self):
        assert main(["generate", "--out", "d", "--frob", "3"]) == 1


class TestRuntimeErrors:
    def test_inspect_missing_dataset(self, tmp_path, capsys):
        assert main(["inspect", str(tmp_path / "nope")]) == 2
        assert "manifest" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("scenes: {num_scenes: 1}\n")
        assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "d")]) == 2


class TestGenerateInspectRoundTrip:
    def test_counts_match_config(self, cli_config, tmp_path, capsys):
        ds = tmp_path / "ds"
        assert main(["generate", "--config", str(cli_config), "--out", str(ds)]) == 0
        generated = json.loads(capsys.readouterr().out)
        assert generated["samples"] == 28
        assert main(["inspect", str(ds)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["num_scenes"] == 2
        assert summary["image_size"] == 32
        assert summary["total_samples"] == 28
        for sid in ("0", "1"):
            assert summary["per_scene"][sid]["total"] == 14

    def test_seed_override_changes_dataset(self, cli_config, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["generate", "--config", str(cli_config), "--out", str(a)]) == 0
        assert main(["generate", "--config", str(cli_config), "--seed", "99", "--out", str(b)]) == 0
        capsys.readouterr()
        assert (a / "manifest.json").read_bytes() != (b / "manifest.json").read_bytes()
