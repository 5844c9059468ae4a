"""Network contracts: depth estimators, style translators, and the pose net.

All networks consume (B, C, H, W) float tensors with values in [0, 1] and
are built deterministically from (spec, seed). Checkpoints embed a hash of
the architecture spec so weights can never be loaded into an incompatible
network.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import CheckpointMismatchError

_ARCH_VERSION = "v1"


@dataclass(frozen=True)
class DepthNetSpec:
    """Encoder-decoder depth estimator with skip connections.

    Output is strictly positive depth in meters, squashed into
    [depth_min, depth_max] by a saturating softplus head.
    """

    height: int = 96
    width: int = 96
    base_channels: int = 16
    depth_min: float = 0.01
    depth_max: float = 20.0

    downsample = 8

    def __post_init__(self):
        if self.height % self.downsample or self.width % self.downsample:
            raise ValueError(
                f"image size {self.width}x{self.height} must be divisible by {self.downsample}"
            )
        if not (0 < self.depth_min < self.depth_max):
            raise ValueError("need 0 < depth_min < depth_max")


@dataclass(frozen=True)
class TranslatorSpec:
    """Residual-block image translator plus a patch discriminator."""

    height: int = 96
    width: int = 96
    base_channels: int = 16
    n_residual_blocks: int = 4

    downsample = 4

    def __post_init__(self):
        if self.height % self.downsample or self.width % self.downsample:
            raise ValueError(
                f"image size {self.width}x{self.height} must be divisible by {self.downsample}"
            )


@dataclass(frozen=True)
class TNetSpec:
    """Pose regressor over two stacked consecutive frames (6 input channels).

    The 6-DOF head is zero-initialized so training starts from identity
    motion; outputs are scaled by motion_scale.
    """

    height: int = 96
    width: int = 96
    base_channels: int = 16
    motion_scale: float = 0.01

    downsample = 16

    def __post_init__(self):
        if self.height % self.downsample or self.width % self.downsample:
            raise ValueError(
                f"image size {self.width}x{self.height} must be divisible by {self.downsample}"
            )


def spec_hash(spec) -> str:
    blob = json.dumps(
        {
            "kind": type(spec).__name__,
            "fields": dataclasses.asdict(spec),
            "arch": _ARCH_VERSION,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _norm(channels: int) -> nn.Module:
    return nn.GroupNorm(min(8, channels), channels)


class _ConvBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(cin, cout, 3, stride, 1), _norm(cout), nn.ReLU(inplace=True)
        )

    def forward(self, x):
        return self.body(x)


class _ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1),
            _norm(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, 1, 1),
            _norm(channels),
        )

    def forward(self, x):
        return torch.relu(x + self.body(x))


class _Up(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv = _ConvBlock(cin, cout)

    def forward(self, x):
        return self.conv(nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class DepthNet(nn.Module):
    def __init__(self, spec: DepthNetSpec):
        super().__init__()
        self.spec = spec
        self.spec_hash = spec_hash(spec)
        c = spec.base_channels
        self.enc0 = nn.Sequential(_ConvBlock(3, c), _ConvBlock(c, c))
        self.enc1 = nn.Sequential(_ConvBlock(c, 2 * c, stride=2), _ConvBlock(2 * c, 2 * c))
        self.enc2 = nn.Sequential(_ConvBlock(2 * c, 4 * c, stride=2), _ConvBlock(4 * c, 4 * c))
        self.enc3 = nn.Sequential(_ConvBlock(4 * c, 8 * c, stride=2), _ConvBlock(8 * c, 8 * c))
        self.up2 = _Up(8 * c, 4 * c)
        self.dec2 = _ConvBlock(8 * c, 4 * c)
        self.up1 = _Up(4 * c, 2 * c)
        self.dec1 = _ConvBlock(4 * c, 2 * c)
        self.up0 = _Up(2 * c, c)
        self.dec0 = _ConvBlock(2 * c, c)
        self.head = nn.Conv2d(c, 1, 1)
        # Saturating softplus: d_min + softplus(x + x0) - softplus(x + x0 - k)
        # rises from d_min to d_max and sits near 1 m at zero input.
        self._x0 = math.log(math.e - 1.0)
        self._span = spec.depth_max - spec.depth_min

    def forward(self, x):
        e0 = self.enc0(x)
        e1 = self.enc1(e0)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        d2 = self.dec2(torch.cat([self.up2(e3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        d0 = self.dec0(torch.cat([self.up0(d1), e0], dim=1))
        raw = self.head(d0) + self._x0
        softplus = nn.functional.softplus
        return self.spec.depth_min + softplus(raw) - softplus(raw - self._span)


class Translator(nn.Module):
    """Near-identity at init: the residual head starts almost silent."""

    def __init__(self, spec: TranslatorSpec):
        super().__init__()
        self.spec = spec
        self.spec_hash = spec_hash(spec)
        c = spec.base_channels
        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3), nn.Conv2d(3, c, 7), _norm(c), nn.ReLU(inplace=True)
        )
        self.down = nn.Sequential(_ConvBlock(c, 2 * c, stride=2), _ConvBlock(2 * c, 4 * c, stride=2))
        self.blocks = nn.Sequential(*[_ResBlock(4 * c) for _ in range(spec.n_residual_blocks)])
        self.up = nn.Sequential(_Up(4 * c, 2 * c), _Up(2 * c, c))
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(c, 3, 7))

    def forward(self, x):
        h = self.stem(x)
        h = self.down(h)
        h = self.blocks(h)
        h = self.up(h)
        delta = torch.tanh(self.head(h))
        return (x + delta).clamp(0.0, 1.0)


class PatchDiscriminator(nn.Module):
    def __init__(self, spec: TranslatorSpec):
        super().__init__()
        self.spec = spec
        self.spec_hash = spec_hash(spec)
        c = spec.base_channels
        self.body = nn.Sequential(
            nn.Conv2d(3, c, 4, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, 4, 2, 1),
            _norm(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, 4, 2, 1),
            _norm(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * c, 1, 4, 1, 1),
        )

    def forward(self, x):
        return self.body(x)


class TNet(nn.Module):
    def __init__(self, spec: TNetSpec):
        super().__init__()
        self.spec = spec
        self.spec_hash = spec_hash(spec)
        c = spec.base_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(6, c, 7, 2, 3),
            _norm(c),
            nn.ReLU(inplace=True),
            _ConvBlock(c, 2 * c, stride=2),
            _ResBlock(2 * c),
            _ConvBlock(2 * c, 4 * c, stride=2),
            _ResBlock(4 * c),
            _ConvBlock(4 * c, 8 * c, stride=2),
            _ResBlock(8 * c),
        )
        self.head = nn.Sequential(
            nn.Conv2d(8 * c, 4 * c, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * c, 4 * c, 3, 1, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * c, 6, 1),
        )

    def forward(self, stacked):
        """stacked: (B, 6, H, W) two consecutive frames -> (B, 6) motion."""
        feats = self.encoder(stacked)
        out = self.head(feats).mean(dim=(2, 3))
        return out * self.spec.motion_scale


def _seeded(builder, seed: int):
    with torch.random.fork_rng():
        torch.manual_seed(seed & (2**63 - 1))
        module = builder()
    return module


def build_depthnet(spec: DepthNetSpec, seed: int) -> DepthNet:
    return _seeded(lambda: DepthNet(spec), seed)


def build_translator(spec: TranslatorSpec, seed: int) -> tuple[Translator, PatchDiscriminator]:
    def make():
        gen = Translator(spec)
        # Nearly-silent head: identity-like at init without killing gradients.
        final = gen.head[-1]
        nn.init.normal_(final.weight, std=3e-4)
        nn.init.zeros_(final.bias)
        disc = PatchDiscriminator(spec)
        return gen, disc

    return _seeded(make, seed)


def build_tnet(spec: TNetSpec, seed: int) -> TNet:
    def make():
        net = TNet(spec)
        final = net.head[-1]
        nn.init.zeros_(final.weight)
        nn.init.zeros_(final.bias)
        return net

    return _seeded(make, seed)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


# -- checkpoints ----------------------------------------------------------------


def save_weights(module: nn.Module, path, stage: str = "", meta: dict | None = None) -> None:
    torch.save(
        {
            "state_dict": module.state_dict(),
            "spec_hash": module.spec_hash,
            "stage": stage,
            "meta": meta or {},
        },
        path,
    )


def load_weights(module: nn.Module, path) -> dict:
    """Load a checkpoint into module; returns {stage, meta}. Hash must match."""
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("spec_hash") != module.spec_hash:
        raise CheckpointMismatchError(
            f"{path}: checkpoint spec hash {blob.get('spec_hash')!r} does not match "
            f"module spec hash {module.spec_hash!r}"
        )
    module.load_state_dict(blob["state_dict"])
    return {"stage": blob.get("stage", ""), "meta": blob.get("meta", {})}
