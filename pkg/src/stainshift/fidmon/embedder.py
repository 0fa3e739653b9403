"""Feature embedders for distribution distance.

The default embedder is a frozen random-weight convolutional network: no
pretrained weights to download, deterministic given its seed, and cheap
enough to run every epoch, while still mixing color and local texture
nonlinearly so that distinct image distributions land on distinct feature
distributions. Any object with `embed(images) -> (n, d)` and an
`embedder_id` attribute can stand in, e.g. a pretrained backbone at full
scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from stainshift.validation import check_image_batch

DEFAULT_EMBED_DIM = 64
DEFAULT_EMBEDDER_SEED = 727


@dataclass
class FeatureBatch:
    """Embedded images plus the identity of the embedder that made them."""

    features: np.ndarray
    embedder_id: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(
                f"features must be 2-d (n, d), got shape {self.features.shape}"
            )
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class RandomConvEmbedder:
    """Frozen seeded random-projection conv net; images to d-dim features."""

    def __init__(self, dim: int = DEFAULT_EMBED_DIM,
                 seed: int = DEFAULT_EMBEDDER_SEED,
                 batch_size: int = 64):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self.batch_size = batch_size
        self.embedder_id = f"randconv-d{dim}-seed{seed}"
        gen = torch.Generator().manual_seed(seed)
        layers = []
        channels = [3, 16, 32, dim]
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            conv = nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.normal_(0.0, 0.2, generator=gen)
                conv.bias.zero_()
            layers += [conv, nn.LeakyReLU(0.2)]
        self._net = nn.Sequential(*layers).double().eval()
        for p in self._net.parameters():
            p.requires_grad_(False)

    def embed(self, images: np.ndarray) -> FeatureBatch:
        """Map (n, h, w, 3) images in [0, 1] to (n, dim) features."""
        images = check_image_batch(images, name="images")
        if images.shape[1] < 8 or images.shape[2] < 8:
            raise ValueError(
                f"images must be at least 8x8, got {images.shape[1:3]}"
            )
        feats = np.empty((len(images), self.dim), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                chunk = images[start:start + self.batch_size]
                x = torch.from_numpy(chunk.astype(np.float64)).permute(0, 3, 1, 2)
                x = x * 2.0 - 1.0
                maps = self._net(x)
                feats[start:start + len(chunk)] = maps.mean(dim=(2, 3)).numpy()
        return FeatureBatch(features=feats, embedder_id=self.embedder_id)


_default_embedder: RandomConvEmbedder | None = None


def default_embedder() -> RandomConvEmbedder:
    """Process-wide shared default embedder (built once, fixed seed)."""
    global _default_embedder
    if _default_embedder is None:
        _default_embedder = RandomConvEmbedder()
    return _default_embedder
