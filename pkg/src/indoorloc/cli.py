"""Command-line surface: generate data, train stages, evaluate, localize.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every subcommand
reads one optional YAML config (--config) and writes all artifacts under
--out.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import pipeline as pl
from .config import load_config
from .dataset import DatasetManifest, generate_dataset
from .errors import ConfigError
from .models import save_checkpoint
from .training import confusion_matrix, error_table, train_classifier, train_regressor, train_translator
from .viz import plot_confusion_matrix, plot_error_table, plot_metric_log


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="indoorloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="YAML config file (defaults used if omitted)")
        return p

    p = add("generate", "render a paired RGB/point-cloud dataset")
    p.add_argument("--out", type=Path, required=True, help="dataset root to create")
    p.add_argument("--seed", type=int, help="override dataset.seed")

    for stage in ("classifier", "translator", "regressor"):
        p = add(f"train-{stage}", f"train the {stage}")
        p.add_argument("--dataset", type=Path, required=True, help="dataset root")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help=f"override train.{stage}.seed")
        if stage == "translator":
            p.add_argument("--direction", choices=["rgb2pc", "pc2rgb"])
        if stage == "regressor":
            p.add_argument("--scene", type=int, required=True, help="scene id to train")

    p = add("evaluate", "confusion matrix and pose error table on the test split")
    p.add_argument("--registry", type=Path, required=True, help="directory of checkpoints")
    p.add_argument("--dataset", type=Path, help="override the registry's dataset")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--scene", type=int, help="restrict the error table to one scene")

    p = add("localize", "estimate the camera pose of one RGB image")
    p.add_argument("--registry", type=Path, required=True, help="directory of checkpoints")
    p.add_argument("--dataset", type=Path, help="override the registry's dataset")
    p.add_argument("--image", type=Path, required=True, help="input RGB image (PNG)")
    p.add_argument("--out", type=Path, help="also write the estimate JSON here")

    p = add("inspect", "summarize a dataset")
    p.add_argument("dataset", type=Path, help="dataset root")
    return parser


def _stage_config(cfg, stage: str, args):
    scfg = cfg.train[stage]
    if getattr(args, "seed", None) is not None:
        scfg = dataclasses.replace(scfg, seed=args.seed)
    if stage == "translator" and getattr(args, "direction", None):
        scfg = dataclasses.replace(scfg, direction=args.direction)
    return scfg


def _cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.dataset.seed = args.seed
    manifest = generate_dataset(cfg, args.out)
    print(
        json.dumps(
            {
                "dataset": str(args.out),
                "scenes": sorted(manifest.bounds),
                "samples": len(manifest.records),
            }
        )
    )
    return 0


def _cmd_inspect(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    summary = {
        "root": str(manifest.root),
        "num_scenes": manifest.num_scenes,
        "image_size": manifest.image_size,
        "generation_seed": manifest.generation_seed,
        "total_samples": len(manifest.records),
        "per_scene": {},
    }
    for sid in sorted(manifest.bounds):
        counts = {s: len(manifest.select(s, sid)) for s in ("train", "val", "test")}
        counts["total"] = sum(counts.values())
        summary["per_scene"][str(sid)] = counts
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_train(stage: str, args) -> int:
    cfg = load_config(args.config)
    scfg = _stage_config(cfg, stage, args)
    manifest = DatasetManifest.load(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if stage == "classifier":
        model, log = train_classifier(manifest, scfg, cfg.models)
        ckpt = out / pl.CLASSIFIER_FILE
        save_checkpoint(ckpt, "classifier", model, step=log.steps[-1]["step"])
        log_path = out / "classifier_log.jsonl"
        curve_path = out / "classifier_curves.png"
        summary = {"best_val_accuracy": max(r["val_accuracy"] for r in log.evals)}
    elif stage == "translator":
        gen, disc, log = train_translator(manifest, scfg, cfg.models)
        ckpt = out / pl.TRANSLATOR_FILES[scfg.direction]
        save_checkpoint(ckpt, "generator", gen, step=scfg.steps, extra={"direction": scfg.direction})
        save_checkpoint(
            out / f"discriminator_{scfg.direction}.pt", "discriminator", disc, step=scfg.steps
        )
        log_path = out / f"translator_{scfg.direction}_log.jsonl"
        curve_path = out / f"translator_{scfg.direction}_curves.png"
        summary = {"final_val_l1": log.evals[-1]["val_l1"], "direction": scfg.direction}
    else:
        model, log = train_regressor(manifest, args.scene, scfg, cfg.models)
        ckpt = out / pl.REGRESSOR_PATTERN.format(sid=args.scene)
        save_checkpoint(ckpt, "regressor", model, step=log.steps[-1]["step"])
        log_path = out / f"regressor_scene_{args.scene}_log.jsonl"
        curve_path = out / f"regressor_scene_{args.scene}_curves.png"
        summary = {"best_val_loss": min(r["val_loss"] for r in log.evals), "scene": args.scene}
    log.save(log_path)
    plot_metric_log(log, curve_path, title=f"{stage} training")
    pl.record_dataset(out, args.dataset)
    print(json.dumps({"checkpoint": str(ckpt), "log": str(log_path), **summary}))
    return 0


def _cmd_evaluate(args) -> int:
    registry = pl.ModelRegistry.load(args.registry, dataset=args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    if registry.classifier is None:
        raise ConfigError("registry has no classifier to evaluate")
    counts = confusion_matrix(registry.classifier, registry.manifest, "test")
    accuracy = float(np.trace(counts) / counts.sum())
    (out / "confusion_matrix.json").write_text(
        json.dumps({"counts": counts.tolist(), "accuracy": accuracy}, indent=1)
    )
    plot_confusion_matrix(counts, out / "confusion_matrix.png")
    artifacts["confusion_matrix"] = accuracy
    if "rgb2pc" not in registry.translators:
        raise ConfigError("registry has no rgb2pc translator to evaluate")
    table = error_table(
        registry.regressors,
        registry.translators["rgb2pc"],
        registry.manifest,
        "test",
        scene_ids=[args.scene] if args.scene is not None else None,
    )
    (out / "error_table.json").write_text(json.dumps(table, indent=1))
    plot_error_table(table, out / "error_table.png")
    artifacts["error_table"] = {
        mode: table[mode]["position_mae_m"] for mode in ("end_to_end", "oracle")
    }
    print(json.dumps({"out": str(out), **artifacts}))
    return 0


def _cmd_localize(args) -> int:
    registry = pl.ModelRegistry.load(args.registry, dataset=args.dataset)
    img = np.asarray(Image.open(args.image).convert("RGB"))
    estimate = pl.localize(registry, img)
    payload = {
        "scene_id": estimate.scene_id,
        "confidence": round(estimate.confidence, 6),
        "position_m": [round(float(v), 6) for v in estimate.position],
        "quaternion_wxyz": [round(float(v), 6) for v in estimate.orientation],
        "out_of_bounds": estimate.out_of_bounds,
    }
    text = json.dumps(payload, indent=1)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "pose_estimate.json").write_text(text)
    print(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "inspect":
            return _cmd_inspect(args)
        if args.command.startswith("train-"):
            return _cmd_train(args.command.removeprefix("train-"), args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "localize":
            return _cmd_localize(args)
        raise AssertionError(f"unhandled command {args.command}")
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"indoorloc: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
