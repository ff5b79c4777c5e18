"""Desk-scale network architectures for the three pipeline stages.

- SceneClassifier: conv stages with swish activations and drop-connect
  residual units, global average pooling, softmax over scene classes.
- UNetGenerator / PatchDiscriminator: depth-4 U-Net with skip connections
  and a patch-logit discriminator over concatenated (condition, candidate)
  images, for paired image-to-image translation in either direction.
- PoseRegressor: inverted-residual (expand, depthwise, project) trunk with
  a 7-value linear head [x, y, z, w, qx, qy, qz], no output activation.

Value-range contracts: classifier and regressor consume images in [0, 1];
the GAN consumes and produces images in [-1, 1]. Every spec knows its own
parameter count in closed form, and constructors assert against it so the
architecture cannot drift silently.

All weights initialize to uniform(+-sqrt(6 / (fan_in + fan_out))) with
zero biases, deterministically in a seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

CHECKPOINT_VERSION = 1

Swish = nn.SiLU  # x * sigmoid(x)


def to_unit(img: np.ndarray) -> torch.Tensor:
    """uint8 HWC image(s) -> float32 CHW tensor(s) in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(arr.astype(np.float32) / 255.0)
    return t.permute(0, 3, 1, 2).contiguous()

def to_signed(img: np.ndarray) -> torch.Tensor:
    """uint8 HWC image(s) -> float32 CHW tensor(s) in [-1, 1]."""
    return to_unit(img) * 2.0 - 1.0


def signed_to_unit(t: torch.Tensor) -> torch.Tensor:
    return (t + 1.0) * 0.5


def tensor_to_uint8(t: torch.Tensor) -> np.ndarray:
    """float CHW tensor(s) in [0, 1] -> uint8 HWC image(s)."""
    arr = t.detach().clamp(0.0, 1.0).permute(0, 2, 3, 1).cpu().numpy()
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def _conv(cin: int, cout: int, k: int, bias: bool) -> int:
    return cin * cout * k * k + (cout if bias else 0)


def _bn(c: int) -> int:
    return 2 * c


class DropConnect(nn.Module):
    """Drops an entire residual branch per sample during training.

    Kept branches are scaled by 1/keep_prob so expectations match
    inference; at rate 1.0 the branch is removed outright.
    """

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"drop-connect rate must be in [0, 1], got {rate}")
        self.rate = rate

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.training or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        if keep == 0.0:
            return torch.zeros_like(x)
        mask = (torch.rand(x.shape[0], 1, 1, 1, device=x.device) < keep).to(x.dtype)
        return x * mask / keep


class ResidualUnit(nn.Module):
    """y = x + drop_connect(swish(bn(conv3x3(x))))."""

    def __init__(self, channels: int, drop_rate: float):
        super().__init__()
        self.branch = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, bias=False),
            nn.BatchNorm2d(channels),
            Swish(),
        )
        self.drop = DropConnect(drop_rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.drop(self.branch(x))


@dataclass(frozen=True)
class ClassifierSpec:
    image_size: int = 64
    num_classes: int = 4
    widths: tuple[int, ...] = (32, 64, 128, 256)
    stem_width: int = 16
    drop_connect: float = 0.2

    def param_count(self) -> int:
        total = _conv(3, self.stem_width, 3, bias=False) + _bn(self.stem_width)
        prev = self.stem_width
        for w in self.widths:
            total += _conv(prev, w, 3, bias=False) + _bn(w)  # downsample
            total += _conv(w, w, 3, bias=False) + _bn(w)  # residual branch
            prev = w
        total += self.widths[-1] * self.num_classes + self.num_classes
        return total


class _Stage(nn.Module):
    def __init__(self, cin: int, cout: int, drop_rate: float):
        super().__init__()
        self.down = nn.Sequential(
            nn.Conv2d(cin, cout, 3, 2, 1, bias=False),
            nn.BatchNorm2d(cout),
            Swish(),
        )
        self.res = ResidualUnit(cout, drop_rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.res(self.down(x))


class SceneClassifier(nn.Module):
    def __init__(self, spec: ClassifierSpec):
        super().__init__()
        self.spec = spec
        if spec.num_classes < 2:
            raise ValueError("classifier needs at least 2 classes")
        self.stem = nn.Sequential(
            nn.Conv2d(3, spec.stem_width, 3, 1, 1, bias=False),
            nn.BatchNorm2d(spec.stem_width),
            Swish(),
        )
        stages = []
        prev = spec.stem_width
        for w in spec.widths:
            stages.append(_Stage(prev, w, spec.drop_connect))
            prev = w
        self.stages = nn.ModuleList(stages)
        self.head = nn.Linear(spec.widths[-1], spec.num_classes)
        got = sum(p.numel() for p in self.parameters())
        assert got == spec.param_count(), f"parameter drift: {got} != {spec.param_count()}"

    def _check(self, x: torch.Tensor):
        s = self.spec
        if x.ndim != 4 or x.shape[1:] != (3, s.image_size, s.image_size):
            raise ValueError(
                f"expected input (B, 3, {s.image_size}, {s.image_size}), got {tuple(x.shape)}"
            )

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        y = self.stem(x)
        for stage in self.stages:
            y = stage(y)
        y = y.mean(dim=(2, 3))
        return self.head(y)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Class probabilities, rows summing to 1."""
        return torch.softmax(self.logits(x), dim=1)


@dataclass(frozen=True)
class GeneratorSpec:
    image_size: int = 64
    widths: tuple[int, ...] = (32, 64, 128, 256)
    channels: int = 3

    def __post_init__(self):
        if self.image_size % 2 ** len(self.widths) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{len(self.widths)}"
            )

    def param_count(self) -> int:
        w = self.widths
        c = self.channels
        total = _conv(c, w[0], 4, bias=True)
        for a, b in zip(w, w[1:]):
            total += _conv(a, b, 4, bias=False) + _bn(b)
        # decoder inputs: bottleneck, then concat(skip, up) pairs
        total += _conv(w[3], w[2], 4, bias=False) + _bn(w[2])
        total += _conv(2 * w[2], w[1], 4, bias=False) + _bn(w[1])
        total += _conv(2 * w[1], w[0], 4, bias=False) + _bn(w[0])
        total += _conv(2 * w[0], c, 4, bias=True)
        return total


class UNetGenerator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        w = spec.widths
        c = spec.channels
        lrelu = nn.LeakyReLU(0.2)
        self.enc1 = nn.Conv2d(c, w[0], 4, 2, 1)
        self.enc2 = nn.Sequential(
            lrelu, nn.Conv2d(w[0], w[1], 4, 2, 1, bias=False), nn.BatchNorm2d(w[1])
        )
        self.enc3 = nn.Sequential(
            lrelu, nn.Conv2d(w[1], w[2], 4, 2, 1, bias=False), nn.BatchNorm2d(w[2])
        )
        self.enc4 = nn.Sequential(
            lrelu, nn.Conv2d(w[2], w[3], 4, 2, 1, bias=False), nn.BatchNorm2d(w[3])
        )
        relu = nn.ReLU()
        self.dec3 = nn.Sequential(
            relu, nn.ConvTranspose2d(w[3], w[2], 4, 2, 1, bias=False), nn.BatchNorm2d(w[2])
        )
        self.dec2 = nn.Sequential(
            relu, nn.ConvTranspose2d(2 * w[2], w[1], 4, 2, 1, bias=False), nn.BatchNorm2d(w[1])
        )
        self.dec1 = nn.Sequential(
            relu, nn.ConvTranspose2d(2 * w[1], w[0], 4, 2, 1, bias=False), nn.BatchNorm2d(w[0])
        )
        self.out = nn.Sequential(relu, nn.ConvTranspose2d(2 * w[0], c, 4, 2, 1))
        got = sum(p.numel() for p in self.parameters())
        assert got == spec.param_count(), f"parameter drift: {got} != {spec.param_count()}"

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = self.spec
        if x.ndim != 4 or x.shape[1:] != (s.channels, s.image_size, s.image_size):
            raise ValueError(
                f"expected input (B, {s.channels}, {s.image_size}, {s.image_size}), "
                f"got {tuple(x.shape)}"
            )
        e1 = self.enc1(x)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        e4 = self.enc4(e3)
        d3 = torch.cat([self.dec3(e4), e3], dim=1)
        d2 = torch.cat([self.dec2(d3), e2], dim=1)
        d1 = torch.cat([self.dec1(d2), e1], dim=1)
        return torch.tanh(self.out(d1))


@dataclass(frozen=True)
class DiscriminatorSpec:
    image_size: int = 64
    widths: tuple[int, ...] = (32, 64, 128)
    channels: int = 3  # per image; the discriminator sees 2x this

    def patch_size(self) -> int:
        side = self.image_size
        for _ in self.widths:
            side //= 2
        return side - 2  # 3x3 valid conv head

    def param_count(self) -> int:
        w = self.widths
        total = _conv(2 * self.channels, w[0], 4, bias=True)
        for a, b in zip(w, w[1:]):
            total += _conv(a, b, 4, bias=False) + _bn(b)
        total += _conv(w[-1], 1, 3, bias=True)
        return total


class PatchDiscriminator(nn.Module):
    """Patch logits over the channel-concatenated (condition, candidate) pair."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        w = spec.widths
        lrelu = nn.LeakyReLU(0.2)
        layers = [nn.Conv2d(2 * spec.channels, w[0], 4, 2, 1), lrelu]
        for a, b in zip(w, w[1:]):
            layers += [nn.Conv2d(a, b, 4, 2, 1, bias=False), nn.BatchNorm2d(b), lrelu]
        layers.append(nn.Conv2d(w[-1], 1, 3, 1, 0))
        self.net = nn.Sequential(*layers)
        got = sum(p.numel() for p in self.parameters())
        assert got == spec.param_count(), f"parameter drift: {got} != {spec.param_count()}"

    def forward(self, condition: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        s = self.spec
        want = (s.channels, s.image_size, s.image_size)
        if condition.shape[1:] != want or candidate.shape[1:] != want:
            raise ValueError(
                f"expected two (B, {want[0]}, {want[1]}, {want[2]}) inputs, got "
                f"{tuple(condition.shape)} and {tuple(candidate.shape)}"
            )
        return self.net(torch.cat([condition, candidate], dim=1))


@dataclass(frozen=True)
class RegressorSpec:
    image_size: int = 64
    widths: tuple[int, ...] = (24, 48, 96, 160)
    strides: tuple[int, ...] = (2, 2, 2, 1)
    expand: int = 4
    stem_width: int = 16
    outputs: int = 7

    def param_count(self) -> int:
        total = _conv(3, self.stem_width, 3, bias=False) + _bn(self.stem_width)
        prev = self.stem_width
        for w in self.widths:
            mid = prev * self.expand
            total += _conv(prev, mid, 1, bias=False) + _bn(mid)  # expand
            total += mid * 9 + _bn(mid)  # depthwise 3x3
            total += _conv(mid, w, 1, bias=False) + _bn(w)  # project
            prev = w
        total += self.widths[-1] * self.outputs + self.outputs
        return total


class InvertedResidual(nn.Module):
    """MobileNet-style expand -> depthwise -> linear-project block."""

    def __init__(self, cin: int, cout: int, stride: int, expand: int):
        super().__init__()
        mid = cin * expand
        self.use_skip = stride == 1 and cin == cout
        self.block = nn.Sequential(
            nn.Conv2d(cin, mid, 1, 1, 0, bias=False),
            nn.BatchNorm2d(mid),
            nn.ReLU6(),
            nn.Conv2d(mid, mid, 3, stride, 1, groups=mid, bias=False),
            nn.BatchNorm2d(mid),
            nn.ReLU6(),
            nn.Conv2d(mid, cout, 1, 1, 0, bias=False),
            nn.BatchNorm2d(cout),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.block(x)
        return x + y if self.use_skip else y


class PoseRegressor(nn.Module):
    def __init__(self, spec: RegressorSpec):
        super().__init__()
        self.spec = spec
        self.stem = nn.Sequential(
            nn.Conv2d(3, spec.stem_width, 3, 2, 1, bias=False),
            nn.BatchNorm2d(spec.stem_width),
            nn.ReLU6(),
        )
        blocks = []
        prev = spec.stem_width
        for w, s in zip(spec.widths, spec.strides):
            blocks.append(InvertedResidual(prev, w, s, spec.expand))
            prev = w
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Linear(spec.widths[-1], spec.outputs)
        got = sum(p.numel() for p in self.parameters())
        assert got == spec.param_count(), f"parameter drift: {got} != {spec.param_count()}"

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = self.spec
        if x.ndim != 4 or x.shape[1:] != (3, s.image_size, s.image_size):
            raise ValueError(
                f"expected input (B, 3, {s.image_size}, {s.image_size}), got {tuple(x.shape)}"
            )
        y = self.stem(x)
        for block in self.blocks:
            y = block(y)
        y = y.mean(dim=(2, 3))
        return self.head(y)


def _fans(weight: torch.Tensor) -> tuple[int, int]:
    shape = weight.shape
    if weight.ndim == 2:
        return shape[1], shape[0]
    rf = int(np.prod(shape[2:]))
    return shape[1] * rf, shape[0] * rf


def xavier_init(model: nn.Module, seed: int) -> nn.Module:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases, unit norms."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                fan_in, fan_out = _fans(m.weight)
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
    return model


_SPEC_TYPES = {
    "classifier": ClassifierSpec,
    "generator": GeneratorSpec,
    "discriminator": DiscriminatorSpec,
    "regressor": RegressorSpec,
}
_MODEL_TYPES = {
    "classifier": SceneClassifier,
    "generator": UNetGenerator,
    "discriminator": PatchDiscriminator,
    "regressor": PoseRegressor,
}


def build_model(kind: str, spec) -> nn.Module:
    if kind not in _MODEL_TYPES:
        raise ValueError(f"unknown model kind {kind!r}")
    return _MODEL_TYPES[kind](spec)


def save_checkpoint(path, kind: str, model: nn.Module, step: int = 0, extra: dict | None = None):
    spec = model.spec
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "state_dict": model.state_dict(),
        "step": step,
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, expected_kind: str | None = None):
    """Rebuild a model from a checkpoint; returns (model, step, extra)."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version in {path}")
    kind = payload["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise ValueError(f"checkpoint {path} holds a {kind!r}, expected {expected_kind!r}")
    spec_cls = _SPEC_TYPES[kind]
    spec_data = {
        k: (tuple(v) if isinstance(v, list) else v) for k, v in payload["spec"].items()
    }
    model = build_model(kind, spec_cls(**spec_data))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["step"], payload["extra"]
