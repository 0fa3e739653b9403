"""Vectorized RGB <-> HSV conversion (hexcone model, hue as a fraction of the circle)."""

from __future__ import annotations

import numpy as np


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Convert RGB in [0, 1] to HSV with H in [0, 1).

    Achromatic pixels (max == min) get H = 0 and S = 0 by convention.
    Accepts any array whose last axis has length 3.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"last axis must have length 3, got shape {rgb.shape}")
    if not np.isfinite(rgb).all() or rgb.min() < 0.0 or rgb.max() > 1.0:
        raise ValueError("RGB values must be finite and lie in [0, 1]")

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc

    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(maxc > 0, delta / maxc, 0.0)
        rc = (maxc - r) / delta
        gc = (maxc - g) / delta
        bc = (maxc - b) / delta

    h = np.zeros_like(maxc)
    chrom = delta > 0
    is_r = chrom & (r == maxc)
    is_g = chrom & (g == maxc) & ~is_r
    is_b = chrom & ~is_r & ~is_g
    h = np.where(is_r, bc - gc, h)
    h = np.where(is_g, 2.0 + rc - bc, h)
    h = np.where(is_b, 4.0 + gc - rc, h)
    h = np.where(chrom, (h / 6.0) % 1.0, 0.0)

    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Convert HSV (H in fractions of the circle) back to RGB in [0, 1]."""
    hsv = np.asarray(hsv, dtype=np.float64)
    if hsv.shape[-1] != 3:
        raise ValueError(f"last axis must have length 3, got shape {hsv.shape}")

    h = hsv[..., 0] % 1.0
    s = np.clip(hsv[..., 1], 0.0, 1.0)
    v = np.clip(hsv[..., 2], 0.0, 1.0)

    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6

    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(i, choices_r)
    g = np.choose(i, choices_g)
    b = np.choose(i, choices_b)
    return np.stack([r, g, b], axis=-1)


def shift_hue(rgb: np.ndarray, offset: float) -> np.ndarray:
    """Rotate the hue of an RGB image by `offset` fractions of the hue circle."""
    if offset == 0.0:
        return np.asarray(rgb, dtype=np.float64).copy()
    hsv = rgb_to_hsv(rgb)
    hsv[..., 0] = (hsv[..., 0] + offset) % 1.0
    return hsv_to_rgb(hsv)
