"""Acceptance suite: one test per release criterion, in order.

Each test prints a single PASS/FAIL line (with its timed portion) so the
whole gate can be read off the test output. Training-based criteria share
session fixtures for datasets and models; the printed time covers the
criterion's own work, with fixture construction timed where it is part of
the stated experiment.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from indoorloc.cli import main as cli_main
from indoorloc.config import ModelsConfig, StageConfig, config_from_dict
from indoorloc.dataset import generate_dataset, read_split
from indoorloc.geometry import pose_loss_grad, pose_loss_raw, quat_error, quat_normalize
from indoorloc.mesh import subdivide_mesh
from indoorloc.models import save_checkpoint
from indoorloc.pipeline import ModelRegistry, localize, record_dataset
from indoorloc.render import CameraIntrinsics, render_pair
from indoorloc.scene import build_scene
from indoorloc.trajectory import TrajectoryRegime, sample_trajectory
from indoorloc.training import (
    confusion_matrix,
    error_table,
    train_classifier,
    train_regressor,
    train_translator,
)

MCFG = ModelsConfig()


@contextmanager
def criterion(num: int, name: str):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {num} {name}: FAIL ({time.time() - start:.1f}s)")
        raise
    print(f"ACCEPTANCE {num} {name}: PASS ({time.time() - start:.1f}s)")


# --- shared experiment fixtures -------------------------------------------


@pytest.fixture(scope="session")
def cls_config():
    # 4 scenes x 650 samples -> exactly 500 train / 50 val / 100 test each
    return config_from_dict(
        {
            "scenes": {"num_scenes": 4},
            "dataset": {
                "samples_per_scene": 650,
                "seed": 21,
                "split": {"train": 500 / 650, "val": 50 / 650, "test": 100 / 650},
            },
        }
    )


@pytest.fixture(scope="session")
def cls_manifest(cls_config, tmp_path_factory):
    return generate_dataset(cls_config, tmp_path_factory.mktemp("acc_cls") / "ds")


@pytest.fixture(scope="session")
def reg_manifest(tmp_path_factory):
    # scene 0 only: 2300 samples -> 2000 train / 100 val / 200 test
    cfg = config_from_dict(
        {
            "scenes": {"num_scenes": 4},
            "dataset": {
                "samples_per_scene": 2300,
                "seed": 21,
                "scene_ids": [0],
                "split": {"train": 2000 / 2300, "val": 100 / 2300, "test": 200 / 2300},
            },
        }
    )
    return generate_dataset(cfg, tmp_path_factory.mktemp("acc_reg") / "ds")


@pytest.fixture(scope="session")
def trained_classifier(cls_manifest):
    cfg = StageConfig(epochs=6, batch_size=16, lr=1e-3, seed=1)
    model, log = train_classifier(cls_manifest, cfg, MCFG)
    return model, log, cfg


@pytest.fixture(scope="session")
def trained_translator(cls_manifest):
    cfg = StageConfig(
        steps=2000,
        batch_size=8,
        lr=2e-4,
        beta1=0.5,
        lambda_l1=100.0,
        max_pairs=256,
        lr_schedule="constant",
        seed=2,
        eval_every=250,
    )
    gen, disc, log = train_translator(cls_manifest, cfg, MCFG)
    return gen, disc, log, cfg


@pytest.fixture(scope="session")
def trained_regressor(reg_manifest):
    cfg = StageConfig(epochs=90, batch_size=32, lr=1e-3, beta=250.0, seed=3)
    model, log = train_regressor(reg_manifest, 0, cfg, MCFG)
    return model, log, cfg


# --- criteria ---------------------------------------------------------------


def test_criterion_1_loss_correctness():
    with criterion(1, "loss correctness"):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            pred = rng.normal(size=7)
            tp = rng.normal(size=3)
            tq = rng.normal(size=4)
            if np.linalg.norm(tq) < 1e-6:
                continue
            beta = float(rng.uniform(0.1, 500.0))
            # independent scalar evaluation, plain python math
            pos = math.sqrt(sum((tp[i] - pred[i]) ** 2 for i in range(3)))
            qn = math.sqrt(sum(c * c for c in tq))
            quat = math.sqrt(sum((pred[3 + i] - tq[i] / qn) ** 2 for i in range(4)))
            want = pos + quat / beta
            got = pose_loss_raw(pred, tp, tq, beta)
            assert abs(got - want) <= 1e-12 * abs(want)
        h = 1e-6
        for _ in range(20):
            pred = rng.normal(size=7)
            tp = rng.normal(size=3)
            tq = quat_normalize(rng.normal(size=4))
            beta = float(rng.uniform(0.5, 300.0))
            grad = pose_loss_grad(pred, tp, tq, beta)
            fd = np.empty(7)
            for i in range(7):
                hi, lo = pred.copy(), pred.copy()
                hi[i] += h
                lo[i] -= h
                fd[i] = (pose_loss_raw(hi, tp, tq, beta) - pose_loss_raw(lo, tp, tq, beta)) / (
                    2 * h
                )
            assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) < 1e-5


def test_criterion_2_quaternion_metric_properties():
    with criterion(2, "quaternion metric properties"):
        rng = np.random.default_rng(77)
        for _ in range(10_000):
            q = rng.normal(size=4)
            b = rng.normal(size=4)
            if np.linalg.norm(q) < 1e-6 or np.linalg.norm(b) < 1e-6:
                continue
            qn = quat_normalize(q)
            assert np.array_equal(qn, quat_normalize(qn))  # idempotent bitwise
            assert quat_error(q, -q) == 0.0  # double cover
            e = quat_error(q, b)
            assert e == quat_error(b, q)  # symmetric
            assert 0.0 <= e <= math.sqrt(2) + 1e-12  # bounded


def test_criterion_3_renderer_determinism_and_consistency(tmp_path_factory):
    with criterion(3, "renderer determinism and consistency"):
        cfg = config_from_dict(
            {"scenes": {"num_scenes": 2}, "dataset": {"samples_per_scene": 80, "seed": 33}}
        )
        root_a = tmp_path_factory.mktemp("acc_det") / "a"
        root_b = tmp_path_factory.mktemp("acc_det") / "b"
        man_a = generate_dataset(cfg, root_a)
        generate_dataset(cfg, root_b)
        assert (root_a / "manifest.json").read_bytes() == (root_b / "manifest.json").read_bytes()
        for rec in man_a.records:
            for key in ("rgb", "pc"):
                assert (root_a / rec[key]).read_bytes() == (root_b / rec[key]).read_bytes()

        # point/surface consistency: >= 99% of lit point pixels land on lit
        # RGB pixels, 50 random poses per regime
        _, mesh, bounds = build_scene(0, 33, cfg.scenes)
        submesh = subdivide_mesh(mesh, cfg.dataset.max_edge)
        intr = CameraIntrinsics()
        for kind in ("lateral-sweep", "orbit", "jitter"):
            poses = sample_trajectory(TrajectoryRegime(kind), bounds, 50, seed=4)
            for pose in poses:
                rgb, pc = render_pair(mesh, submesh, pose, intr)
                lit_pc = pc.sum(axis=2) > 0
                lit_rgb = rgb.sum(axis=2) > 0
                assert lit_pc.sum() > 0
                assert (lit_pc & lit_rgb).sum() / lit_pc.sum() >= 0.99


def test_criterion_4_classifier(cls_manifest, trained_classifier):
    with criterion(4, "classifier accuracy"):
        model, log, _ = trained_classifier
        counts = confusion_matrix(model, cls_manifest, "test")
        total = counts.sum()
        assert total == 400  # 4 scenes x 100 test images
        accuracy = counts.trace() / total
        for i in range(4):
            assert counts[i, i] == counts[i].max()  # diagonal dominates
        print(f"  classifier test accuracy: {accuracy:.4f}")
        assert accuracy >= 0.95


def test_criterion_5_translator(trained_translator):
    with criterion(5, "translator held-out L1"):
        gen, disc, log, cfg = trained_translator
        assert len(log.steps) == 2000  # full run; range/shape checked each step
        init_l1 = log.evals[0]["val_l1"]
        final_l1 = log.evals[-1]["val_l1"]
        print(f"  held-out L1: init {init_l1:.4f} -> final {final_l1:.4f} "
              f"({100 * final_l1 / init_l1:.1f}%)")
        assert final_l1 <= 0.6 * init_l1


def test_criterion_6_regressor(reg_manifest, trained_regressor, trained_translator):
    with criterion(6, "regressor accuracy (oracle point clouds)"):
        model, log, _ = trained_regressor
        gen = trained_translator[0]
        table = error_table({0: model}, gen, reg_manifest, "test")
        oracle = table["oracle"]
        assert oracle["count"] == 200
        diagonal = reg_manifest.scene_bounds(0).diagonal
        rel = oracle["position_mae_m"] / diagonal
        print(
            f"  oracle position error {oracle['position_mae_m']:.3f} m "
            f"({100 * rel:.2f}% of {diagonal:.2f} m diagonal), "
            f"quat error {oracle['quat_mae']:.4f}"
        )
        assert rel <= 0.05
        assert oracle["quat_mae"] <= 0.15


def test_criterion_7_end_to_end(
    cls_manifest, reg_manifest, trained_classifier, trained_translator, trained_regressor
):
    with criterion(7, "end-to-end pipeline"):
        clf = trained_classifier[0]
        gen = trained_translator[0]
        reg = trained_regressor[0]
        counts = confusion_matrix(clf, cls_manifest, "test")
        scene_acc = counts.trace() / counts.sum()
        table = error_table({0: reg}, gen, reg_manifest, "test")
        diagonal = reg_manifest.scene_bounds(0).diagonal
        e2e = table["end_to_end"]
        oracle = table["oracle"]
        rel = e2e["position_mae_m"] / diagonal
        print(
            f"  scene accuracy {scene_acc:.4f}; end-to-end position error "
            f"{e2e['position_mae_m']:.3f} m ({100 * rel:.2f}% of diagonal); "
            f"oracle {oracle['position_mae_m']:.3f} m"
        )
        assert scene_acc >= 0.90
        assert rel <= 0.10
        assert oracle["position_mae_m"] <= e2e["position_mae_m"]

        # the deployed path agrees: localize() scene-0 test images
        samples = list(read_split(reg_manifest, "test", scene_id=0))[:20]
        registry_dir = reg_manifest.root.parent / "registry"
        save_checkpoint(registry_dir / "classifier.pt", "classifier", clf)
        save_checkpoint(registry_dir / "translator_rgb2pc.pt", "generator", gen)
        save_checkpoint(registry_dir / "regressor_scene_0.pt", "regressor", reg)
        record_dataset(registry_dir, reg_manifest.root)
        registry = ModelRegistry.load(registry_dir)
        for s in samples:
            est = localize(registry, s.rgb)
            assert est.scene_id == 0
            assert abs(np.linalg.norm(est.orientation) - 1.0) < 1e-6


def test_criterion_8_cli_round_trip(tmp_path_factory, capsys):
    with criterion(8, "CLI round trip"):
        work = tmp_path_factory.mktemp("acc_cli")
        config = work / "config.yaml"
        config.write_text(
            json.dumps(
                {
                    "scenes": {"num_scenes": 2},
                    "dataset": {"samples_per_scene": 100, "seed": 9},
                    "train": {
                        "classifier": {"epochs": 3, "batch_size": 16},
                        "translator": {"steps": 150, "batch_size": 8},
                        "regressor": {"epochs": 15, "batch_size": 32},
                    },
                }
            )
        )  # JSON is valid YAML
        ds = work / "ds"
        run = work / "run"
        assert cli_main(["generate", "--config", str(config), "--out", str(ds)]) == 0
        assert cli_main(["inspect", str(ds)]) == 0
        for cmd in (
            ["train-classifier", "--config", str(config), "--dataset", str(ds), "--out", str(run)],
            ["train-translator", "--config", str(config), "--dataset", str(ds), "--out", str(run)],
            ["train-regressor", "--config", str(config), "--dataset", str(ds), "--out", str(run), "--scene", "0"],
            ["train-regressor", "--config", str(config), "--dataset", str(ds), "--out", str(run), "--scene", "1"],
        ):
            assert cli_main(cmd) == 0, f"command failed: {cmd}"
        evaldir = work / "eval"
        assert cli_main(["evaluate", "--registry", str(run), "--out", str(evaldir)]) == 0
        sample_png = ds / "scene_0" / "rgb" / "00003.png"
        out = capsys.readouterr()
        assert cli_main(
            ["localize", "--registry", str(run), "--image", str(sample_png), "--out", str(evaldir)]
        ) == 0
        estimate = json.loads(capsys.readouterr().out)
        assert estimate["scene_id"] in (0, 1)
        assert len(estimate["position_m"]) == 3
        # every promised artifact exists
        for artifact in (
            ds / "manifest.json",
            run / "classifier.pt",
            run / "translator_rgb2pc.pt",
            run / "regressor_scene_0.pt",
            run / "regressor_scene_1.pt",
            run / "classifier_log.jsonl",
            run / "translator_rgb2pc_log.jsonl",
            run / "regressor_scene_0_log.jsonl",
            run / "classifier_curves.png",
            evaldir / "confusion_matrix.json",
            evaldir / "confusion_matrix.png",
            evaldir / "error_table.json",
            evaldir / "error_table.png",
            evaldir / "pose_estimate.json",
        ):
            assert artifact.exists(), f"missing artifact {artifact}"
