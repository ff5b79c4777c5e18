"""Training loops for the three stages plus evaluation tables.

Every run is deterministic in (dataset, config, seeds): data order comes
from seeded generators, and all losses are checked finite at every step. A
non-finite loss aborts with a diagnostic rather than logging garbage.

Loss bookkeeping: the regressor logs its position and quaternion terms
separately, so the combined value can be re-derived as
position + quaternion / beta from the log alone.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelsConfig, StageConfig
from .dataset import DatasetManifest, read_split
from .errors import DatasetError, RegistryError
from .geometry import SceneBounds, quat_error
from .models import (
    ClassifierSpec,
    DiscriminatorSpec,
    DropConnect,
    GeneratorSpec,
    PatchDiscriminator,
    PoseRegressor,
    RegressorSpec,
    SceneClassifier,
    UNetGenerator,
    signed_to_unit,
    xavier_init,
)


@dataclass
class MetricLog:
    """Append-only training metrics: per-step records and eval records."""

    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)

    def add_step(self, step: int, **scalars):
        if self.steps and step <= self.steps[-1]["step"]:
            raise ValueError(f"steps must strictly increase, got {step}")
        record = {"step": int(step)}
        for k, v in scalars.items():
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"non-finite metric {k}={v} at step {step}")
            record[k] = v
        self.steps.append(record)

    def add_eval(self, **scalars):
        record = {}
        for k, v in scalars.items():
            v = float(v) if not isinstance(v, int) else int(v)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"non-finite eval metric {k}={v}")
            record[k] = v
        self.evals.append(record)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for rec in self.steps:
                f.write(json.dumps({"type": "step", **rec}) + "\n")
            for rec in self.evals:
                f.write(json.dumps({"type": "eval", **rec}) + "\n")

    @classmethod
    def load(cls, path) -> "MetricLog":
        log = cls()
        with Path(path).open() as f:
            for line in f:
                rec = json.loads(line)
                kind = rec.pop("type")
                (log.steps if kind == "step" else log.evals).append(rec)
        return log


def pose_loss_terms(pred: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch-mean position and quaternion terms of the balanced pose loss.

    pred and target are (B, 7) in [x, y, z, w, qx, qy, qz] layout; the
    target quaternion is normalized here, the predicted one is used raw.
    The combined loss is position_term + quaternion_term / beta.
    """
    if pred.shape != target.shape or pred.shape[-1] != 7:
        raise ValueError(f"expected matching (B, 7) tensors, got {pred.shape} vs {target.shape}")
    pos = torch.linalg.vector_norm(pred[:, :3] - target[:, :3], dim=1).mean()
    tq = target[:, 3:]
    tq = tq / torch.linalg.vector_norm(tq, dim=1, keepdim=True)
    quat = torch.linalg.vector_norm(pred[:, 3:] - tq, dim=1).mean()
    return pos, quat


def batch_pose_loss(pred: torch.Tensor, target: torch.Tensor, beta: float) -> torch.Tensor:
    pos, quat = pose_loss_terms(pred, target)
    return pos + quat / beta


@dataclass
class SplitArrays:
    """One dataset split materialized in memory as uint8 tensors."""

    rgb: torch.Tensor  # (N, 3, H, W) uint8
    pc: torch.Tensor  # (N, 3, H, W) uint8
    labels: torch.Tensor  # (N,) int64 scene ids
    targets: torch.Tensor  # (N, 7) float32 pose labels

    def __len__(self):
        return self.rgb.shape[0]


def load_split(manifest: DatasetManifest, split: str, scene_id: int | None = None) -> SplitArrays:
    rgbs, pcs, labels, targets = [], [], [], []
    for s in read_split(manifest, split, scene_id):
        rgbs.append(s.rgb)
        pcs.append(s.pc)
        labels.append(s.scene_id)
        targets.append(np.concatenate([s.position, s.quaternion]).astype(np.float32))
    if not rgbs:
        raise DatasetError(
            f"split {split!r}" + (f" of scene {scene_id}" if scene_id is not None else "") + " is empty"
        )
    return SplitArrays(
        rgb=torch.from_numpy(np.stack(rgbs)).permute(0, 3, 1, 2).contiguous(),
        pc=torch.from_numpy(np.stack(pcs)).permute(0, 3, 1, 2).contiguous(),
        labels=torch.tensor(labels, dtype=torch.int64),
        targets=torch.from_numpy(np.stack(targets)),
    )


def _unit(batch_u8: torch.Tensor) -> torch.Tensor:
    return batch_u8.float() / 255.0


def _signed(batch_u8: torch.Tensor) -> torch.Tensor:
    return batch_u8.float() / 127.5 - 1.0


def _check_finite(name: str, value: torch.Tensor, step: int):
    if not torch.isfinite(value).all():
        raise RuntimeError(f"{name} diverged (non-finite loss at step {step})")


def _batches(n: int, batch_size: int, epochs: int, seed: int):
    """Yield (epoch, step, index tensor); order is a pure function of seed."""
    gen = torch.Generator().manual_seed(seed)
    step = 0
    for epoch in range(1, epochs + 1):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            step += 1
            yield epoch, step, perm[start : start + batch_size]


def _scheduler(opt, cfg: StageConfig):
    if cfg.lr_schedule == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs)
    return None


@torch.no_grad()
def recalibrate_batchnorm(model: nn.Module, batches):
    """Replace BatchNorm running stats with exact statistics over `batches`.

    The default exponential running averages lag the final weights and use
    an unbiased variance, which at desk-scale resolutions leaves a visible
    train/eval gap. One aggregation pass over the training inputs removes
    it. Drop-connect is disabled during the pass so the statistics are
    deterministic.
    """
    bns = [m for m in model.modules() if isinstance(m, nn.BatchNorm2d)]
    if not bns:
        return
    acc = {id(m): [0, 0.0, 0.0] for m in bns}

    def make_hook(mod):
        def hook(_mod, inputs, _out):
            x = inputs[0]
            n = x.shape[0] * x.shape[2] * x.shape[3]
            a = acc[id(mod)]
            a[0] += n
            a[1] = a[1] + x.sum(dim=(0, 2, 3))
            a[2] = a[2] + (x * x).sum(dim=(0, 2, 3))

        return hook

    hooks = [m.register_forward_hook(make_hook(m)) for m in bns]
    was_training = model.training
    model.train()
    for m in model.modules():
        if isinstance(m, DropConnect):
            m.eval()
    for batch in batches:
        model(batch)
    for h in hooks:
        h.remove()
    model.train(was_training)
    for m in bns:
        n, s, sq = acc[id(m)]
        mean = s / n
        var = sq / n - mean * mean
        m.running_mean.copy_(mean)
        m.running_var.copy_(var.clamp_min(0.0))


@torch.no_grad()
def evaluate_classifier(model: SceneClassifier, data: SplitArrays, batch_size: int = 128):
    model.eval()
    correct = 0
    loss_sum = 0.0
    for start in range(0, len(data), batch_size):
        x = _unit(data.rgb[start : start + batch_size])
        y = data.labels[start : start + batch_size]
        logits = model.logits(x)
        loss_sum += F.cross_entropy(logits, y, reduction="sum").item()
        correct += (logits.argmax(dim=1) == y).sum().item()
    return correct / len(data), loss_sum / len(data)


def train_classifier(manifest: DatasetManifest, cfg: StageConfig, mcfg: ModelsConfig):
    """Cross-entropy scene classification; keeps the best-val-accuracy model."""
    train = load_split(manifest, "train")
    val = load_split(manifest, "val")
    if train.labels.unique().numel() < 2:
        raise DatasetError("classifier training needs at least 2 scene classes")
    torch.manual_seed(cfg.seed)
    spec = ClassifierSpec(
        image_size=manifest.image_size,
        num_classes=manifest.num_scenes,
        widths=tuple(mcfg.classifier_widths),
        drop_connect=mcfg.drop_connect,
    )
    model = xavier_init(SceneClassifier(spec), cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = _scheduler(opt, cfg)
    log = MetricLog()
    acc, vloss = evaluate_classifier(model, val)
    log.add_eval(epoch=0, step=0, val_accuracy=acc, val_loss=vloss)
    best = {"acc": acc, "state": copy.deepcopy(model.state_dict()), "epoch": 0}
    last_epoch = 0
    for epoch, step, idx in _batches(len(train), cfg.batch_size, cfg.epochs, cfg.seed):
        if epoch != last_epoch and last_epoch > 0:
            if sched is not None:
                sched.step()
            acc, vloss = evaluate_classifier(model, val)
            log.add_eval(epoch=last_epoch, step=step - 1, val_accuracy=acc, val_loss=vloss)
            if acc >= best["acc"]:
                best = {"acc": acc, "state": copy.deepcopy(model.state_dict()), "epoch": last_epoch}
        last_epoch = epoch
        model.train()
        x = _unit(train.rgb[idx])
        y = train.labels[idx]
        logits = model.logits(x)
        loss = F.cross_entropy(logits, y)
        _check_finite("classifier", loss, step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        batch_acc = (logits.argmax(dim=1) == y).float().mean()
        log.add_step(step, loss=loss.item(), accuracy=batch_acc.item())
    acc, vloss = evaluate_classifier(model, val)
    log.add_eval(epoch=last_epoch, step=log.steps[-1]["step"], val_accuracy=acc, val_loss=vloss)
    if acc >= best["acc"]:
        best = {"acc": acc, "state": copy.deepcopy(model.state_dict()), "epoch": last_epoch}
    if cfg.select_best:
        model.load_state_dict(best["state"])
    recalibrate_batchnorm(
        model,
        (_unit(train.rgb[i : i + cfg.batch_size]) for i in range(0, len(train), cfg.batch_size)),
    )
    model.eval()
    return model, log


@torch.no_grad()
def heldout_l1(gen: UNetGenerator, data: SplitArrays, direction: str, batch_size: int = 64):
    """Mean per-pixel L1 between translated and target images, in [-1, 1] space."""
    gen.eval()
    total = 0.0
    count = 0
    for start in range(0, len(data), batch_size):
        cond_u8 = data.rgb if direction == "rgb2pc" else data.pc
        tgt_u8 = data.pc if direction == "rgb2pc" else data.rgb
        cond = _signed(cond_u8[start : start + batch_size])
        tgt = _signed(tgt_u8[start : start + batch_size])
        fake = gen(cond)
        total += torch.abs(fake - tgt).mean().item() * cond.shape[0]
        count += cond.shape[0]
    return total / count


def train_translator(manifest: DatasetManifest, cfg: StageConfig, mcfg: ModelsConfig):
    """Paired conditional-GAN translation between RGB and point-cloud images.

    Alternates one discriminator step (binary cross-entropy on real vs
    generated patch logits) with one generator step (adversarial term plus
    lambda_l1-weighted mean absolute error to the paired target). cfg.steps
    counts generator updates.
    """
    train = load_split(manifest, "train")
    val = load_split(manifest, "val")
    direction = cfg.direction
    torch.manual_seed(cfg.seed)
    if cfg.max_pairs and cfg.max_pairs < len(train):
        keep = torch.randperm(
            len(train), generator=torch.Generator().manual_seed(cfg.seed + 13)
        )[: cfg.max_pairs]
        train = SplitArrays(train.rgb[keep], train.pc[keep], train.labels[keep], train.targets[keep])
    gen = xavier_init(UNetGenerator(GeneratorSpec(manifest.image_size, tuple(mcfg.generator_widths))), cfg.seed)
    disc = xavier_init(
        PatchDiscriminator(DiscriminatorSpec(manifest.image_size, tuple(mcfg.discriminator_widths))),
        cfg.seed + 1,
    )
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(cfg.beta1, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(cfg.beta1, 0.999))
    log = MetricLog()
    log.add_eval(step=0, val_l1=heldout_l1(gen, val, direction))
    cond_u8 = train.rgb if direction == "rgb2pc" else train.pc
    tgt_u8 = train.pc if direction == "rgb2pc" else train.rgb
    n = len(train)
    epochs_needed = math.ceil(cfg.steps * cfg.batch_size / n) + 1
    batches = _batches(n, cfg.batch_size, epochs_needed, cfg.seed)
    for step in range(1, cfg.steps + 1):
        try:
            _, _, idx = next(batches)
        except StopIteration:  # pragma: no cover - epochs_needed oversizes
            batches = _batches(n, cfg.batch_size, epochs_needed, cfg.seed + step)
            _, _, idx = next(batches)
        cond = _signed(cond_u8[idx])
        target = _signed(tgt_u8[idx])
        gen.train()
        disc.train()
        # discriminator: real pairs vs detached fakes
        fake = gen(cond)
        logits_real = disc(cond, target)
        logits_fake = disc(cond, fake.detach())
        loss_d = 0.5 * (
            F.binary_cross_entropy_with_logits(logits_real, torch.ones_like(logits_real))
            + F.binary_cross_entropy_with_logits(logits_fake, torch.zeros_like(logits_fake))
        )
        _check_finite("discriminator", loss_d, step)
        opt_d.zero_grad()
        loss_d.backward()
        opt_d.step()
        # generator: fool the discriminator + stay close to the pair
        logits_fake = disc(cond, fake)
        adv = F.binary_cross_entropy_with_logits(logits_fake, torch.ones_like(logits_fake))
        l1_term = cfg.lambda_l1 * torch.abs(fake - target).mean()
        loss_g = adv + l1_term
        _check_finite("generator", loss_g, step)
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()
        if fake.shape != cond.shape or fake.abs().max().item() > 1.0:
            raise RuntimeError(f"generator output violated shape/range contract at step {step}")
        log.add_step(
            step, d_loss=loss_d.item(), g_adv=adv.item(), g_l1=l1_term.item(), g_loss=loss_g.item()
        )
        if cfg.eval_every and step % cfg.eval_every == 0:
            log.add_eval(step=step, val_l1=heldout_l1(gen, val, direction))
    recalibrate_batchnorm(
        gen,
        (_signed(cond_u8[i : i + cfg.batch_size]) for i in range(0, n, cfg.batch_size)),
    )
    log.add_eval(step=cfg.steps, val_l1=heldout_l1(gen, val, direction))
    gen.eval()
    disc.eval()
    return gen, disc, log


@torch.no_grad()
def evaluate_regressor(model: PoseRegressor, data: SplitArrays, beta: float, batch_size: int = 128):
    model.eval()
    pos_sum = 0.0
    quat_sum = 0.0
    for start in range(0, len(data), batch_size):
        x = _unit(data.pc[start : start + batch_size])
        t = data.targets[start : start + batch_size]
        pos, quat = pose_loss_terms(model(x), t)
        pos_sum += pos.item() * x.shape[0]
        quat_sum += quat.item() * x.shape[0]
    pos = pos_sum / len(data)
    quat = quat_sum / len(data)
    return pos + quat / beta, pos, quat


def train_regressor(manifest: DatasetManifest, scene_id: int, cfg: StageConfig, mcfg: ModelsConfig):
    """Balanced pose loss on ground-truth point-cloud images of one scene."""
    train = load_split(manifest, "train", scene_id)
    val = load_split(manifest, "val", scene_id)
    torch.manual_seed(cfg.seed)
    spec = RegressorSpec(
        image_size=manifest.image_size,
        widths=tuple(mcfg.regressor_widths),
        expand=mcfg.regressor_expand,
    )
    model = xavier_init(PoseRegressor(spec), cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = _scheduler(opt, cfg)
    log = MetricLog()
    vloss, vpos, vquat = evaluate_regressor(model, val, cfg.beta)
    log.add_eval(epoch=0, step=0, val_loss=vloss, val_position=vpos, val_quaternion=vquat)
    best = {"loss": vloss, "state": copy.deepcopy(model.state_dict()), "epoch": 0}
    last_epoch = 0
    for epoch, step, idx in _batches(len(train), cfg.batch_size, cfg.epochs, cfg.seed):
        if epoch != last_epoch and last_epoch > 0:
            if sched is not None:
                sched.step()
            vloss, vpos, vquat = evaluate_regressor(model, val, cfg.beta)
            log.add_eval(
                epoch=last_epoch, step=step - 1, val_loss=vloss, val_position=vpos, val_quaternion=vquat
            )
            if vloss <= best["loss"]:
                best = {"loss": vloss, "state": copy.deepcopy(model.state_dict()), "epoch": last_epoch}
        last_epoch = epoch
        model.train()
        x = _unit(train.pc[idx])
        t = train.targets[idx]
        pos, quat = pose_loss_terms(model(x), t)
        loss = pos + quat / cfg.beta
        _check_finite("regressor", loss, step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.add_step(step, loss=loss.item(), position=pos.item(), quaternion=quat.item())
    vloss, vpos, vquat = evaluate_regressor(model, val, cfg.beta)
    log.add_eval(
        epoch=last_epoch, step=log.steps[-1]["step"], val_loss=vloss, val_position=vpos, val_quaternion=vquat
    )
    if vloss <= best["loss"]:
        best = {"loss": vloss, "state": copy.deepcopy(model.state_dict()), "epoch": last_epoch}
    if cfg.select_best:
        model.load_state_dict(best["state"])
    recalibrate_batchnorm(
        model,
        (_unit(train.pc[i : i + cfg.batch_size]) for i in range(0, len(train), cfg.batch_size)),
    )
    model.eval()
    return model, log


@torch.no_grad()
def predict_scene_probs(model: SceneClassifier, rgb_u8: torch.Tensor, batch_size: int = 128):
    model.eval()
    out = []
    for start in range(0, rgb_u8.shape[0], batch_size):
        out.append(model(_unit(rgb_u8[start : start + batch_size])).cpu().numpy())
    return np.concatenate(out)


def confusion_matrix(model: SceneClassifier, manifest: DatasetManifest, split: str) -> np.ndarray:
    """counts[i, j] = samples of true scene i predicted as scene j."""
    data = load_split(manifest, split)
    probs = predict_scene_probs(model, data.rgb)
    pred = probs.argmax(axis=1)  # np.argmax takes the first max: lowest index wins ties
    s = manifest.num_scenes
    counts = np.zeros((s, s), dtype=np.int64)
    for t, p in zip(data.labels.numpy(), pred):
        counts[t, p] += 1
    return counts


def pose_errors_meters(
    pred: np.ndarray, true_pos_norm: np.ndarray, true_quat: np.ndarray, bounds: SceneBounds
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample absolute position errors (meters, per axis) and quat errors.

    Predicted positions are denormalized through the scene bounds; raw
    predictions may land slightly outside [-1, 1], which maps to positions
    just outside the room and is reported as-is.
    """
    pred = np.asarray(pred, dtype=np.float64)
    half = 0.5 * bounds.extent
    pred_m = bounds.min_corner + (pred[:, :3] + 1.0) * half
    true_m = bounds.min_corner + (np.asarray(true_pos_norm, dtype=np.float64) + 1.0) * half
    abs_err = np.abs(pred_m - true_m)
    quat_err = np.array([quat_error(p, t) for p, t in zip(pred[:, 3:], true_quat)])
    return abs_err, quat_err


@torch.no_grad()
def _regress_batched(model: PoseRegressor, imgs_unit: torch.Tensor, batch_size: int = 128):
    out = []
    for start in range(0, imgs_unit.shape[0], batch_size):
        out.append(model(imgs_unit[start : start + batch_size]).cpu().numpy())
    return np.concatenate(out)


def error_table(
    regressors: dict[int, PoseRegressor],
    translator: UNetGenerator,
    manifest: DatasetManifest,
    split: str = "test",
    scene_ids: list[int] | None = None,
) -> dict:
    """Per-axis mean absolute position error (meters) and mean quat error.

    Both evaluation routes are reported: "end_to_end" feeds RGB through
    the rgb->pc translator into each sample's true-scene regressor;
    "oracle" feeds the ground-truth point-cloud image directly.
    scene_ids restricts the table to those scenes (default: all in split).
    """
    rows = {"end_to_end": [], "oracle": []}
    per_scene = {}
    present = sorted({r["scene_id"] for r in manifest.select(split)})
    if scene_ids is None:
        scene_ids = present
    else:
        missing = [s for s in scene_ids if s not in present]
        if missing:
            raise DatasetError(f"scenes {missing} have no samples in split {split!r}")
    if not scene_ids:
        raise DatasetError(f"split {split!r} is empty")
    for sid in scene_ids:
        if sid not in regressors:
            raise RegistryError(f"no regressor available for scene {sid}")
    for sid in scene_ids:
        data = load_split(manifest, split, sid)
        model = regressors[sid]
        model.eval()
        translator.eval()
        bounds = manifest.scene_bounds(sid)
        true_pos = data.targets[:, :3].numpy()
        true_quat = data.targets[:, 3:].numpy()
        with torch.no_grad():
            fake_pc = translator(_signed(data.rgb))
        pred_e2e = _regress_batched(model, signed_to_unit(fake_pc))
        pred_orc = _regress_batched(model, _unit(data.pc))
        per_scene[sid] = {}
        for mode, pred in (("end_to_end", pred_e2e), ("oracle", pred_orc)):
            abs_err, quat_err = pose_errors_meters(pred, true_pos, true_quat, bounds)
            rows[mode].append((abs_err, quat_err))
            per_scene[sid][mode] = _summ(abs_err, quat_err)
    table = {
        mode: _summ(np.vstack([a for a, _ in pairs]), np.concatenate([q for _, q in pairs]))
        for mode, pairs in rows.items()
    }
    table["per_scene"] = per_scene
    return table


def _summ(abs_err: np.ndarray, quat_err: np.ndarray) -> dict:
    mae = abs_err.mean(axis=0)
    return {
        "x_mae_m": float(mae[0]),
        "y_mae_m": float(mae[1]),
        "z_mae_m": float(mae[2]),
        "position_mae_m": float(np.linalg.norm(abs_err, axis=1).mean()),
        "quat_mae": float(quat_err.mean()),
        "count": int(abs_err.shape[0]),
    }
