"""Cascaded encoder-decoder generators and conditional patch discriminators."""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class CascadePlan:
    """Architecture shared by both generator stages (and the discriminators).

    The default is a pix2pix-style U-Net adapted to 128x64 inputs: six stride-2
    4x4 encoder convolutions take 64x128 down to a 1x2 bottleneck.
    """

    image_height: int = 64
    image_width: int = 128
    image_channels: int = 3
    widths: tuple[int, ...] = (64, 128, 256, 512, 512, 512)
    residual_blocks: bool = True
    encoder_activation: str = "prelu"  # "leaky" reproduces the baseline encoder
    prelu_init: float = 0.25
    leaky_slope: float = 0.2
    dropout: float = 0.5
    dropout_levels: int = 3
    disc_widths: tuple[int, ...] = (64, 128, 256)
    disc_strides: tuple[int, ...] = (2, 2, 2, 1)
    norm_momentum: float = 0.1
    norm_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        object.__setattr__(self, "disc_widths", tuple(self.disc_widths))
        object.__setattr__(self, "disc_strides", tuple(self.disc_strides))
        scale = 2 ** self.levels
        if self.image_height % scale or self.image_width % scale:
            raise ValueError(f"image {self.image_height}x{self.image_width} is not divisible by {scale}")
        if self.encoder_activation not in ("prelu", "leaky"):
            raise ValueError(f"unknown encoder activation {self.encoder_activation!r}")
        if len(self.disc_strides) != len(self.disc_widths) + 1:
            raise ValueError("disc_strides needs one entry per discriminator convolution")
        if not 0 <= self.dropout_levels < self.levels:
            raise ValueError("dropout_levels must leave the output level without dropout")

    @property
    def levels(self) -> int:
        return len(self.widths)

    @property
    def residual_flags(self) -> tuple[bool, ...]:
        """One flag per encoder level; the bottleneck level never gets a block."""
        return tuple(self.residual_blocks and i < self.levels - 1 for i in range(self.levels))

    @property
    def skip_wiring(self) -> tuple[tuple[int, int], ...]:
        """(encoder level, decoder level) pairs joined by concat skips."""
        return tuple((i, self.levels - 1 - i) for i in range(self.levels - 1))

    @property
    def dropout_flags(self) -> tuple[bool, ...]:
        return tuple(j < self.dropout_levels for j in range(self.levels))

    @property
    def patch_grid(self) -> tuple[int, int]:
        h, w = self.image_height, self.image_width
        for s in self.disc_strides:
            h, w = h // s, w // s
        return h, w

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "CascadePlan":
        return cls(**d)


def prelu(x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    """x for x > 0, a * x otherwise; ``a`` holds one slope per channel (dim 1)."""
    slope = a.view(1, -1, *([1] * (x.dim() - 2))) if x.dim() > 1 else a
    return torch.where(x > 0, x, slope * x)


class PReLU(nn.Module):
    def __init__(self, channels: int, init: float = 0.25):
        super().__init__()
        self.init = init
        self.weight = nn.Parameter(torch.full((channels,), float(init)))

    def forward(self, x):
        return prelu(x, self.weight)


class NoiseDropout(nn.Module):
    """Dropout drawing its mask from an explicit generator (the cGAN noise source).

    The generator lives on the owning cascade so that it can be checkpointed.
    """

    def __init__(self, p: float, source: "NoiseSource"):
        super().__init__()
        self.p = p
        self.source = source

    def forward(self, x):
        if not self.training or self.p == 0:
            return x
        keep = torch.rand(x.shape, generator=self.source.generator, dtype=x.dtype, device=x.device) >= self.p
        return x * keep.to(x.dtype) / (1.0 - self.p)


class NoiseSource:
    def __init__(self, seed: int = 0):
        self.generator = torch.Generator().manual_seed(seed)


def _activation(plan: CascadePlan, channels: int) -> nn.Module:
    if plan.encoder_activation == "prelu":
        return PReLU(channels, plan.prelu_init)
    return nn.LeakyReLU(plan.leaky_slope)


def _norm(plan: CascadePlan, channels: int) -> nn.BatchNorm2d:
    return nn.BatchNorm2d(channels, eps=plan.norm_eps, momentum=plan.norm_momentum)


class ResidualBlock(nn.Module):
    """H(x) = F(x) + x with F = conv3x3-BN-PReLU-conv3x3-BN."""

    def __init__(self, in_channels: int, out_channels: int, plan: CascadePlan | None = None):
        super().__init__()
        if in_channels != out_channels:
            raise ValueError(f"identity shortcut needs equal channels, got {in_channels} -> {out_channels}")
        plan = plan or CascadePlan()
        c = in_channels
        self.conv1 = nn.Conv2d(c, c, 3, 1, 1, bias=False)
        self.norm1 = _norm(plan, c)
        self.act = _activation(plan, c)
        self.conv2 = nn.Conv2d(c, c, 3, 1, 1, bias=False)
        self.norm2 = _norm(plan, c)

    def branch(self, x):
        return self.norm2(self.conv2(self.act(self.norm1(self.conv1(x)))))

    def forward(self, x):
        return self.branch(x) + x


class EncoderLevel(nn.Module):
    def __init__(self, plan: CascadePlan, level: int, in_channels: int):
        super().__init__()
        out = plan.widths[level]
        first, last = level == 0, level == plan.levels - 1
        self.act = None if first else _activation(plan, in_channels)
        self.conv = nn.Conv2d(in_channels, out, 4, 2, 1, bias=first or last)
        self.norm = None if first or last else _norm(plan, out)
        self.res = ResidualBlock(out, out, plan) if plan.residual_flags[level] else None

    def forward(self, x):
        if self.act is not None:
            x = self.act(x)
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.res is not None:
            x = self.res(x)
        return x


class DecoderLevel(nn.Module):
    def __init__(self, plan: CascadePlan, level: int, in_channels: int, out_channels: int, noise: NoiseSource):
        super().__init__()
        last = level == plan.levels - 1
        self.conv = nn.ConvTranspose2d(in_channels, out_channels, 4, 2, 1, bias=last)
        self.norm = None if last else _norm(plan, out_channels)
        self.drop = NoiseDropout(plan.dropout, noise) if plan.dropout_flags[level] else None
        self.last = last

    def forward(self, x):
        x = self.conv(F.relu(x))
        if self.last:
            return torch.tanh(x)
        x = self.norm(x)
        if self.drop is not None:
            x = self.drop(x)
        return x


class Generator(nn.Module):
    """U-Net generator: encoder level i is concatenated into decoder level L-1-i."""

    def __init__(self, plan: CascadePlan, in_channels: int | None = None, noise: NoiseSource | None = None):
        super().__init__()
        self.plan = plan
        self.in_channels = in_channels or plan.image_channels
        noise = noise or NoiseSource()
        w = plan.widths
        self.encoder = nn.ModuleList()
        prev = self.in_channels
        for i in range(plan.levels):
            self.encoder.append(EncoderLevel(plan, i, prev))
            prev = w[i]
        self.decoder = nn.ModuleList()
        for j in range(plan.levels):
            cin = w[-1] if j == 0 else out + w[plan.levels - 1 - j]
            out = plan.image_channels if j == plan.levels - 1 else w[plan.levels - 2 - j]
            self.decoder.append(DecoderLevel(plan, j, cin, out, noise))

    def check_input(self, x: torch.Tensor):
        p = self.plan
        expected = (self.in_channels, p.image_height, p.image_width)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ValueError(f"generator expects N x {expected}, got {tuple(x.shape)}")

    def forward(self, x):
        self.check_input(x)
        skips = []
        for level in self.encoder:
            x = level(x)
            skips.append(x)
        x = self.decoder[0](skips[-1])
        for j in range(1, self.plan.levels):
            x = self.decoder[j](torch.cat([x, skips[self.plan.levels - 1 - j]], dim=1))
        return x


def _patch_conv(cin: int, cout: int, stride: int, bias: bool) -> list[nn.Module]:
    if stride == 2:
        return [nn.Conv2d(cin, cout, 4, 2, 1, bias=bias)]
    # An even kernel at stride 1 needs asymmetric padding to keep the extent.
    return [nn.ZeroPad2d((1, 2, 1, 2)), nn.Conv2d(cin, cout, 4, stride, 0, bias=bias)]


class PatchDiscriminator(nn.Module):
    """Conditional patch discriminator on concat(x, y); returns raw logits."""

    def __init__(self, plan: CascadePlan, in_channels: int | None = None):
        super().__init__()
        self.plan = plan
        self.in_channels = in_channels or 2 * plan.image_channels
        layers: list[nn.Module] = []
        prev = self.in_channels
        n = len(plan.disc_widths)
        for i, (width, stride) in enumerate(zip(plan.disc_widths, plan.disc_strides)):
            layers.extend(_patch_conv(prev, width, stride, bias=i == 0))
            if i > 0:
                layers.append(_norm(plan, width))
            layers.append(nn.LeakyReLU(plan.leaky_slope))
            prev = width
        stride = plan.disc_strides[n]
        layers.extend(_patch_conv(prev, 1, stride, bias=True))
        self.net = nn.Sequential(*layers)

    def forward(self, x, y):
        if x.shape[0] != y.shape[0] or x.shape[2:] != y.shape[2:]:
            raise ValueError(f"condition {tuple(x.shape)} and candidate {tuple(y.shape)} extents differ")
        xy = torch.cat([x, y], dim=1)
        if xy.shape[1] != self.in_channels:
            raise ValueError(f"discriminator expects {self.in_channels} channels, got {xy.shape[1]}")
        return self.net(xy)


def init_params(module: nn.Module, seed: int | torch.Generator, prelu_init: float = 0.25) -> nn.Module:
    """Gaussian(0, 0.02) kernels, zero biases, unit/zero norm affine, PReLU slopes at ``prelu_init``."""
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=m.weight.dtype) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.reset_running_stats()
            elif isinstance(m, PReLU):
                m.weight.fill_(prelu_init)
    return module


class Cascade(nn.Module):
    """Both generator/discriminator pairs plus the dropout noise source.

    G1 sees the semantic image; G2 sees concat(semantic, G1 output). The two
    generators share one plan but differ in input channels.
    """

    def __init__(self, plan: CascadePlan | None = None, seed: int = 0):
        super().__init__()
        self.plan = plan = plan or CascadePlan()
        self.noise = NoiseSource(seed + 1)
        c = plan.image_channels
        self.g1 = Generator(plan, c, self.noise)
        self.d1 = PatchDiscriminator(plan, 2 * c)
        self.g2 = Generator(plan, 2 * c, self.noise)
        self.d2 = PatchDiscriminator(plan, 2 * c)
        gen = torch.Generator().manual_seed(seed)
        for net in (self.g1, self.d1, self.g2, self.d2):
            init_params(net, gen, plan.prelu_init)

    def forward(self, x):
        y1 = self.g1(x)
        # Stage 2 is optimized separately: no gradient flows back into G1.
        y2 = self.g2(torch.cat([x, y1.detach()], dim=1))
        return y1, y2


def cascade_forward(state: Cascade, x: torch.Tensor, mode: str = "eval"):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    state.train(mode == "train")
    if mode == "eval":
        with torch.no_grad():
            return state(x)
    return state(x)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


__all__ = [
    "CascadePlan",
    "Cascade",
    "Generator",
    "PatchDiscriminator",
    "ResidualBlock",
    "PReLU",
    "NoiseDropout",
    "NoiseSource",
    "prelu",
    "init_params",
    "cascade_forward",
    "count_parameters",
]
