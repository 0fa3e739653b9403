"""Generator and discriminator architectures for unpaired stain translation.

The generator is the ResNet encoder/transformer/decoder used for unpaired
image translation: a 7x7 stem, two stride-2 downsampling convolutions, a
stack of residual blocks, two transposed-convolution upsampling stages, and
a 7x7 head with tanh output. The discriminator is a PatchGAN: a small
stride-2 conv stack emitting a score map over overlapping receptive
fields. All normalization is per-sample (instance norm), so outputs do not
depend on batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from stainshift.util import config_hash


@dataclass
class TranslatorConfig:
    """Architecture and optimization settings for one translator pair.

    Defaults are the desk-scale preset (64x64 patches, slim channels,
    3 residual blocks). `paper_scale()` returns the full-size variant
    (256x256, 64 base channels, 9 residual blocks).
    """

    image_size: int = 64
    base_channels: int = 32
    n_residual_blocks: int = 3
    normalization: str = "instance"
    lambda_cycle: float = 10.0
    use_identity_loss: bool = False
    identity_weight_factor: float = 0.5
    learning_rate: float = 2e-4
    beta1: float = 0.5
    batch_size: int = 4
    steps_per_epoch: int | None = None
    fake_pool_size: int = 50

    def __post_init__(self):
        if self.image_size < 8 or self.image_size % 4 != 0:
            raise ValueError(
                f"image_size must be a multiple of 4 and >= 8, got {self.image_size}"
            )
        if self.base_channels < 1 or self.n_residual_blocks < 1:
            raise ValueError("base_channels and n_residual_blocks must be positive")
        if self.normalization != "instance":
            raise ValueError(
                "only per-sample (instance) normalization is supported; "
                f"got {self.normalization!r}"
            )
        if self.lambda_cycle <= 0:
            raise ValueError(f"lambda_cycle must be positive, got {self.lambda_cycle}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be positive when set")
        if self.fake_pool_size < 0:
            raise ValueError("fake_pool_size must be >= 0")
        if self.learning_rate < 0 or not 0 <= self.beta1 < 1:
            raise ValueError("invalid optimizer settings")

    @classmethod
    def paper_scale(cls, **overrides) -> "TranslatorConfig":
        params = dict(image_size=256, base_channels=64, n_residual_blocks=9,
                      batch_size=1)
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "base_channels": self.base_channels,
            "n_residual_blocks": self.n_residual_blocks,
            "normalization": self.normalization,
            "lambda_cycle": self.lambda_cycle,
            "use_identity_loss": self.use_identity_loss,
            "identity_weight_factor": self.identity_weight_factor,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "batch_size": self.batch_size,
            "steps_per_epoch": self.steps_per_epoch,
            "fake_pool_size": self.fake_pool_size,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


def _norm(channels: int) -> nn.Module:
    return nn.InstanceNorm2d(channels, affine=True)


class ResidualBlock(nn.Module):
    """Two 3x3 convs with instance norm; input added to the output."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            _norm(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            _norm(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class ResnetGenerator(nn.Module):
    """Translator network: image in [-1, 1] to image in [-1, 1]."""

    def __init__(self, base_channels: int = 32, n_residual_blocks: int = 3):
        super().__init__()
        c = base_channels
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, c, kernel_size=7),
            _norm(c),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):  # downsample to 1/4 resolution
            layers += [
                nn.Conv2d(c, c * 2, kernel_size=3, stride=2, padding=1),
                _norm(c * 2),
                nn.ReLU(inplace=True),
            ]
            c *= 2
        layers += [ResidualBlock(c) for _ in range(n_residual_blocks)]
        for _ in range(2):  # upsample back
            layers += [
                nn.ConvTranspose2d(c, c // 2, kernel_size=3, stride=2,
                                   padding=1, output_padding=1),
                _norm(c // 2),
                nn.ReLU(inplace=True),
            ]
            c //= 2
        layers += [
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, 3, kernel_size=7),
            nn.Tanh(),
        ]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """PatchGAN critic: image in [-1, 1] to a map of realness scores."""

    def __init__(self, base_channels: int = 32):
        super().__init__()
        c = base_channels
        self.model = nn.Sequential(
            nn.Conv2d(3, c, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, c * 2, kernel_size=4, stride=2, padding=1),
            _norm(c * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 2, c * 4, kernel_size=4, stride=2, padding=1),
            _norm(c * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 4, 1, kernel_size=4, stride=1, padding=1),
        )

    def forward(self, x):
        return self.model(x)


def init_weights(module: nn.Module, generator: torch.Generator,
                 std: float = 0.02) -> None:
    """Gaussian(0, std) init for conv weights from an explicit generator."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.normal_(0.0, std, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.InstanceNorm2d) and m.affine:
                m.weight.fill_(1.0)
                m.bias.zero_()


def build_generator(cfg: TranslatorConfig, seed: int) -> ResnetGenerator:
    net = ResnetGenerator(cfg.base_channels, cfg.n_residual_blocks)
    init_weights(net, torch.Generator().manual_seed(seed))
    return net


def build_discriminator(cfg: TranslatorConfig, seed: int) -> PatchDiscriminator:
    net = PatchDiscriminator(cfg.base_channels)
    init_weights(net, torch.Generator().manual_seed(seed))
    return net
