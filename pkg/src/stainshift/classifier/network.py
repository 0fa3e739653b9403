"""Patch classifier backbones.

The default backbone is a small strided conv net with group normalization
(per-sample, so predictions do not depend on batch composition) and a
two-logit head. Heavier backbones (e.g. an EfficientNet variant for
full-scale work) can be plugged in through `register_backbone`.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class SmallCnn(nn.Module):
    """Four stride-2 conv blocks, global average pooling, linear head."""

    def __init__(self, base_channels: int = 16, n_classes: int = 2):
        super().__init__()
        c = base_channels
        blocks = []
        channels = [3, c, c * 2, c * 4, c * 8]
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            blocks += [
                nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(math.gcd(8, c_out), c_out),
                nn.ReLU(inplace=True),
            ]
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(channels[-1], n_classes)

    def forward(self, x):
        maps = self.pool(self.features(x)).flatten(1)
        return self.head(maps)


def init_classifier_weights(module: nn.Module, generator: torch.Generator) -> None:
    """Fan-in uniform init drawn from an explicit generator, so the model
    never depends on torch's global RNG state."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                fan_in = m.weight.shape[1] * (
                    m.weight.shape[2] * m.weight.shape[3]
                    if m.weight.ndim == 4 else 1
                )
                bound = 1.0 / math.sqrt(fan_in)
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.GroupNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()


def _build_small_cnn(base_channels: int, n_classes: int,
                     seed: int) -> nn.Module:
    net = SmallCnn(base_channels=base_channels, n_classes=n_classes)
    init_classifier_weights(net, torch.Generator().manual_seed(seed))
    return net


BACKBONES = {"small_cnn": _build_small_cnn}


def register_backbone(name: str, factory) -> None:
    """Register a backbone factory(base_channels, n_classes, seed) -> Module."""
    if name in BACKBONES:
        raise ValueError(f"backbone {name!r} already registered")
    BACKBONES[name] = factory


def build_backbone(name: str, base_channels: int, n_classes: int,
                   seed: int) -> nn.Module:
    if name not in BACKBONES:
        raise ValueError(
            f"unknown backbone {name!r}; registered: {sorted(BACKBONES)}"
        )
    return BACKBONES[name](base_channels, n_classes, seed)
