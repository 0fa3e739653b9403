"""Stochastic training augmentations for stained patches.

Applied per image in this order: horizontal flip, rotation by a multiple
of 90 degrees, HSV jitter (hue offset, saturation and brightness scaling),
additive Gaussian noise. Every coin flip and amplitude comes from the
caller's random generator, so a fixed generator state reproduces the exact
augmented batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stainshift.stainstats.hsv import hsv_to_rgb, rgb_to_hsv
from stainshift.validation import check_image_batch


@dataclass
class AugmentParams:
    p_flip: float = 0.5
    p_rotate: float = 0.5
    p_jitter: float = 0.5
    hue_amplitude: float = 0.05
    saturation_amplitude: float = 0.10
    brightness_amplitude: float = 0.10
    p_noise: float = 0.5
    noise_sigma: float = 0.02

    def __post_init__(self):
        for name in ("p_flip", "p_rotate", "p_jitter", "p_noise"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 <= self.hue_amplitude <= 0.5:
            raise ValueError("hue_amplitude must be in [0, 0.5]")
        for name in ("saturation_amplitude", "brightness_amplitude"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "p_flip": self.p_flip,
            "p_rotate": self.p_rotate,
            "p_jitter": self.p_jitter,
            "hue_amplitude": self.hue_amplitude,
            "saturation_amplitude": self.saturation_amplitude,
            "brightness_amplitude": self.brightness_amplitude,
            "p_noise": self.p_noise,
            "noise_sigma": self.noise_sigma,
        }


def augment_patch(image: np.ndarray, params: AugmentParams,
                  rng: np.random.Generator) -> np.ndarray:
    """One augmented copy of a single (h, w, 3) patch in [0, 1]."""
    out = np.asarray(image, dtype=np.float32)
    if rng.random() < params.p_flip:
        out = out[:, ::-1, :]
    if rng.random() < params.p_rotate:
        out = np.rot90(out, k=int(rng.integers(1, 4)), axes=(0, 1))
    if rng.random() < params.p_jitter:
        hsv = rgb_to_hsv(np.clip(out.astype(np.float64), 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0]
                       + rng.uniform(-params.hue_amplitude,
                                     params.hue_amplitude)) % 1.0
        hsv[..., 1] = np.clip(
            hsv[..., 1] * (1.0 + rng.uniform(-params.saturation_amplitude,
                                             params.saturation_amplitude)),
            0.0, 1.0)
        hsv[..., 2] = np.clip(
            hsv[..., 2] * (1.0 + rng.uniform(-params.brightness_amplitude,
                                             params.brightness_amplitude)),
            0.0, 1.0)
        out = hsv_to_rgb(hsv).astype(np.float32)
    if rng.random() < params.p_noise and params.noise_sigma > 0:
        out = out + rng.normal(0.0, params.noise_sigma,
                               size=out.shape).astype(np.float32)
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0), dtype=np.float32)


def augment_batch(images: np.ndarray, params: AugmentParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Independently augmented copies of a batch; deterministic per rng state."""
    images = check_image_batch(images)
    return np.stack([augment_patch(img, params, rng) for img in images])
