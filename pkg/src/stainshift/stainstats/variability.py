"""Intra-center stain variability measured as hue dispersion versus slide count.

For a center's manifest, patches are sampled from x randomly chosen slides,
the mean hue of each patch is computed, and the spread of those per-patch
means is reported. Sweeping x reveals how many slides are needed to capture
a center's stain diversity: high intra-stain variability shows up as a hue
standard deviation that rises with x before plateauing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stainshift.stainstats.hsv import rgb_to_hsv
from stainshift.util import derive_seed


@dataclass
class HueSummary:
    """Hue dispersion of one (center, slide count, seed) configuration."""

    center_id: str
    n_slides: int
    seed: int
    hue_std: float
    n_patches: int
    per_patch_hue_means: list[float] = field(repr=False, default_factory=list)


def circular_hue_mean(hues: np.ndarray) -> float:
    """Mean of hue fractions, computed on the circle to survive wraparound."""
    angles = np.asarray(hues, dtype=np.float64) * 2.0 * np.pi
    mean_angle = np.arctan2(np.sin(angles).mean(), np.cos(angles).mean())
    hue = float((mean_angle / (2.0 * np.pi)) % 1.0)
    return hue if hue < 1.0 else 0.0  # tiny negative angles wrap to 1.0


def circular_hue_std(hues: np.ndarray) -> float:
    """Resultant-vector circular standard deviation, in hue-fraction units.

    For tightly clustered hues this agrees with the linear standard
    deviation; unlike the linear version it is invariant under rotation of
    the hue circle, so centers whose hues straddle 0 are not inflated.
    """
    angles = np.asarray(hues, dtype=np.float64) * 2.0 * np.pi
    resultant = np.hypot(np.sin(angles).mean(), np.cos(angles).mean())
    resultant = min(float(resultant), 1.0)
    if resultant <= 0.0:
        return 0.5  # uniform on the circle; cap at half a turn
    return float(min(0.5, np.sqrt(-2.0 * np.log(resultant)) / (2.0 * np.pi)))


def patch_hue_mean(image: np.ndarray, *, circular: bool = True,
                   mask_achromatic: bool = False) -> float:
    """Mean hue of one RGB image in [0, 1]."""
    hsv = rgb_to_hsv(image)
    hue = hsv[..., 0]
    if mask_achromatic:
        chromatic = hsv[..., 1] > 0
        if chromatic.any():
            hue = hue[chromatic]
    hue = hue.ravel()
    if circular:
        return circular_hue_mean(hue)
    return float(hue.mean())


def hue_variability(
    center,
    slide_counts: list[int],
    patches_per_config: int,
    seeds: list[int],
    *,
    circular: bool = True,
    mask_achromatic: bool = False,
) -> list[HueSummary]:
    """Hue dispersion of `center` as a function of the number of slides sampled.

    For every (slide count x, seed) pair: pick x slides at random, sample up
    to `patches_per_config` patches from them, and summarize the spread of
    per-patch mean hues. Raises if the manifest has fewer slides than
    max(slide_counts).
    """
    from stainshift.datakit.ops import load_image  # local import; avoids cycle

    by_slide: dict[str, list] = {}
    for rec in center.records:
        by_slide.setdefault(rec.slide_id, []).append(rec)
    all_slides = sorted(by_slide)
    if max(slide_counts) > len(all_slides):
        raise ValueError(
            f"center {center.center_id!r} has {len(all_slides)} slides, "
            f"fewer than requested {max(slide_counts)}"
        )

    summaries = []
    for n_slides in slide_counts:
        for seed in seeds:
            rng = np.random.default_rng(derive_seed(seed, "hue-var", n_slides))
            chosen = rng.choice(len(all_slides), size=n_slides, replace=False)
            pool = [rec for i in sorted(chosen) for rec in by_slide[all_slides[i]]]
            take = min(patches_per_config, len(pool))
            picked = rng.choice(len(pool), size=take, replace=False)
            means = [
                patch_hue_mean(load_image(pool[i].image_path),
                               circular=circular, mask_achromatic=mask_achromatic)
                for i in sorted(picked)
            ]
            hues = np.asarray(means)
            std = circular_hue_std(hues) if circular else float(hues.std())
            summaries.append(HueSummary(
                center_id=center.center_id,
                n_slides=n_slides,
                seed=seed,
                hue_std=std,
                n_patches=take,
                per_patch_hue_means=[float(m) for m in means],
            ))
    return summaries


def write_hue_summary_csv(summaries: list[HueSummary], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["center", "n_slides", "seed", "hue_std", "n_patches"])
        for s in summaries:
            writer.writerow([s.center_id, s.n_slides, s.seed,
                             f"{s.hue_std:.6f}", s.n_patches])
