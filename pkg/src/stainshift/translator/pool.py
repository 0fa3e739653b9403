"""Replay pool of previously generated images for discriminator updates.

Feeding the critic a mix of fresh and historical fakes damps oscillation.
Until the pool is full every fake is stored and returned as-is; afterwards
each incoming fake either passes through or (with probability 1/2) is
swapped with a random stored one.
"""

from __future__ import annotations

import numpy as np
import torch


class ImagePool:
    def __init__(self, size: int = 50):
        if size < 0:
            raise ValueError(f"pool size must be >= 0, got {size}")
        self.size = size
        self.images: list[torch.Tensor] = []

    def __len__(self) -> int:
        return len(self.images)

    def query(self, batch: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
        """Exchange a batch of fresh fakes against the pool.

        Randomness comes only from `rng`, so replay is reproducible. With
        size 0 the pool is a pass-through.
        """
        if self.size == 0:
            return batch.detach()
        out = []
        for image in batch.detach():
            if len(self.images) < self.size:
                self.images.append(image.clone())
                out.append(image)
            elif rng.random() < 0.5:
                idx = int(rng.integers(self.size))
                out.append(self.images[idx].clone())
                self.images[idx] = image.clone()
            else:
                out.append(image)
        return torch.stack(out)
