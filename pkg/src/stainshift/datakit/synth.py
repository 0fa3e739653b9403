"""Procedural stained-tissue patches with controllable color statistics.

A patch is a field of soft elliptical blobs over a background: nucleus
blobs, whose density sets the class label (dense = IC, sparse = REST, with
a forbidden middle band), and distractor blobs at a different hue, whose
density is drawn independently of the label from the full density range.
Each patch is then pushed through a per-domain color pipeline: 3x3 color
matrix, HSV shift, additive noise, clamp. Nucleus and distractor blobs
share shape, size, saturation and value statistics and differ only in hue,
and density alone never reveals which population is which, so reading the
label requires identifying blob hue: rotating the hue circle between
domains therefore produces a real domain shift that a color-blind shortcut
can only partially bypass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from stainshift.datakit.records import (
    DatasetManifest,
    PatchRecord,
    relocate,
    write_label_map,
)
from stainshift.stainstats.hsv import hsv_to_rgb, rgb_to_hsv
from stainshift.util import derive_seed

# The three palette hues are equally spaced on the hue circle, so every
# hue band sits between two equally distant neighbours: a classifier that
# reads blob hue cannot be more tolerant than a sixth of the circle, and a
# translator that mis-renders a hue by more than that lands in the wrong
# band.
BACKGROUND_HSV = (0.22, 0.50, 0.82)
NUCLEUS_HSV = (0.55, 0.50, 0.82)
DISTRACTOR_HSV = (0.88, 0.50, 0.82)
# Nucleus density is bimodal with a forbidden middle band — REST patches
# draw from [0.02, 0.14], IC patches from [0.36, 0.50], and no patch ever
# has nucleus-hue blobs at a density inside (0.14, 0.36). Distractor
# density is drawn independently of the label from the full [0.02, 0.50]
# range, middle band included. The asymmetry anchors unpaired translation:
# a map that exchanges the two blob hues renders distractor-density blobs
# in the nucleus hue, and those fall inside the forbidden band in a large
# fraction of patches, producing images unlike any real one. At the same
# time a single blob population's density says nothing about its role, so
# telling nucleus from distractor requires reading hue.
REST_DENSITY = (0.02, 0.14)
IC_DENSITY = (0.36, 0.50)
DISTRACTOR_DENSITY = (0.02, 0.50)
IC_DENSITY_THRESHOLD = 0.25


def _identity_matrix() -> list[list[float]]:
    return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


@dataclass
class SynthStainParams:
    """Color pipeline of one synthetic staining domain."""

    hue_shift: float = 0.0
    saturation_scale: float = 1.0
    value_scale: float = 1.0
    color_matrix: list[list[float]] = field(default_factory=_identity_matrix)
    noise_sigma: float = 0.01
    nucleus_hue_offset: float = 0.0
    texture_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.hue_shift < 1.0:
            raise ValueError(f"hue_shift must be in [0, 1), got {self.hue_shift}")
        if not -0.5 < self.nucleus_hue_offset < 0.5:
            raise ValueError(
                f"nucleus_hue_offset must be in (-0.5, 0.5), got "
                f"{self.nucleus_hue_offset}"
            )
        if self.saturation_scale <= 0 or self.value_scale <= 0:
            raise ValueError("saturation_scale and value_scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        matrix = np.asarray(self.color_matrix, dtype=np.float64)
        if matrix.shape != (3, 3) or not np.isfinite(matrix).all():
            raise ValueError("color_matrix must be a finite 3x3 matrix")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.color_matrix, dtype=np.float64)

    @property
    def is_identity_pipeline(self) -> bool:
        return (
            self.hue_shift == 0.0
            and self.saturation_scale == 1.0
            and self.value_scale == 1.0
            and np.array_equal(self.matrix, np.eye(3))
            and self.noise_sigma == 0.0
        )


def _smooth_field(rng: np.random.Generator, size: int, grid: int) -> np.ndarray:
    """Bilinearly upsampled uniform(-1, 1) grid; smooth spatial modulation."""
    coarse = rng.uniform(-1.0, 1.0, size=(grid, grid))
    pos = np.linspace(0.0, grid - 1.0, size)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, grid - 1)
    frac = pos - lo
    rows = coarse[lo][:, lo] * np.outer(1 - frac, 1 - frac)
    rows += coarse[lo][:, hi] * np.outer(1 - frac, frac)
    rows += coarse[hi][:, lo] * np.outer(frac, 1 - frac)
    rows += coarse[hi][:, hi] * np.outer(frac, frac)
    return rows


def _blob_coverage(rng: np.random.Generator, size: int,
                   density: float) -> np.ndarray:
    """Soft coverage in [0, 1] of a field of random elliptical blobs."""
    mean_radius = 0.085 * size
    n_blobs = int(round(density * size * size / (np.pi * mean_radius**2)))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    transparency = np.ones((size, size))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, size, size=2)
        radius = rng.uniform(0.06, 0.11) * size
        stretch = rng.uniform(0.7, 1.3)
        angle = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dy * np.cos(angle) + dx * np.sin(angle)
        v = -dy * np.sin(angle) + dx * np.cos(angle)
        dist = np.sqrt((u / stretch) ** 2 + (v * stretch) ** 2)
        alpha = 1.0 / (1.0 + np.exp((dist - radius) / (0.12 * radius)))
        transparency *= 1.0 - alpha
    return 1.0 - transparency


def base_texture(rng: np.random.Generator, size: int, blob_density: float,
                 nucleus_hue_offset: float = 0.0,
                 distractor_density: float | None = None) -> np.ndarray:
    """Blob field in the fixed palette, before any domain color pipeline.

    `blob_density` controls nucleus blobs only; `distractor_density`
    defaults to a draw from DISTRACTOR_DENSITY on the caller's rng, so it
    is independent of the label. `nucleus_hue_offset` rotates the nucleus
    hue alone, leaving background and distractors untouched; it models
    uneven nuclear stain uptake, the one kind of color drift that a
    whole-image color transform cannot express.
    """
    if not 0.0 <= blob_density <= 0.9:
        raise ValueError(f"blob_density must be in [0, 0.9], got {blob_density}")
    if distractor_density is None:
        distractor_density = rng.uniform(*DISTRACTOR_DENSITY)
    elif not 0.0 <= distractor_density <= 0.9:
        raise ValueError(
            f"distractor_density must be in [0, 0.9], got {distractor_density}"
        )
    nucleus_cov = _blob_coverage(rng, size, blob_density)
    distractor_cov = _blob_coverage(rng, size, distractor_density)

    bg_rgb = hsv_to_rgb(np.array([[BACKGROUND_HSV]], dtype=np.float64))[0, 0]
    nuc_hsv = ((NUCLEUS_HSV[0] + nucleus_hue_offset) % 1.0,) + NUCLEUS_HSV[1:]
    nuc_rgb = hsv_to_rgb(np.array([[nuc_hsv]], dtype=np.float64))[0, 0]
    dis_rgb = hsv_to_rgb(np.array([[DISTRACTOR_HSV]], dtype=np.float64))[0, 0]
    w_nuc = nucleus_cov
    w_dis = distractor_cov * (1.0 - nucleus_cov)
    w_bg = (1.0 - nucleus_cov) * (1.0 - distractor_cov)
    rgb = (w_nuc[..., None] * nuc_rgb + w_dis[..., None] * dis_rgb
           + w_bg[..., None] * bg_rgb)

    # smooth brightness and saturation modulation, drawn after the blobs
    v_field = 1.0 + 0.06 * _smooth_field(rng, size, grid=5)
    s_field = 1.0 + 0.05 * _smooth_field(rng, size, grid=5)
    hsv = rgb_to_hsv(np.clip(rgb, 0.0, 1.0))
    hsv[..., 1] = np.clip(hsv[..., 1] * s_field, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * v_field, 0.0, 1.0)
    return hsv_to_rgb(hsv).astype(np.float32)


def apply_stain(image: np.ndarray, params: SynthStainParams,
                rng: np.random.Generator) -> np.ndarray:
    """Run one patch through a domain's color pipeline."""
    out = np.asarray(image, dtype=np.float64)
    matrix = params.matrix
    if not np.array_equal(matrix, np.eye(3)):
        out = np.clip(out @ matrix.T, 0.0, 1.0)
    if (params.hue_shift != 0.0 or params.saturation_scale != 1.0
            or params.value_scale != 1.0):
        hsv = rgb_to_hsv(out)
        hsv[..., 0] = (hsv[..., 0] + params.hue_shift) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * params.saturation_scale, 0.0, 1.0)
        hsv[..., 2] = np.clip(hsv[..., 2] * params.value_scale, 0.0, 1.0)
        out = hsv_to_rgb(hsv)
    if params.noise_sigma > 0.0:
        out = out + rng.normal(0.0, params.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synth_patch(params: SynthStainParams, rng_seed: int, size: int = 64,
                blob_density: float = 0.05) -> np.ndarray:
    """One synthetic patch, deterministic per (params, rng_seed, size, density).

    With an all-identity pipeline (identity matrix, zero hue shift, unit
    scales, zero noise) the returned patch is exactly the base texture.
    """
    rng = np.random.default_rng(
        derive_seed(params.texture_seed, "patch", rng_seed)
    )
    patch = base_texture(rng, size, blob_density, params.nucleus_hue_offset)
    if params.is_identity_pipeline:
        return patch
    return apply_stain(patch, params, rng)


def density_label(blob_density: float) -> str:
    return "IC" if blob_density >= IC_DENSITY_THRESHOLD else "REST"


def _slide_params(base: SynthStainParams, jitter: float,
                  rng: np.random.Generator,
                  nucleus_jitter: float = 0.0,
                  hue_levels: int = 0) -> SynthStainParams:
    """Per-slide staining variation around a domain's base parameters."""
    params = base
    if jitter > 0.0 and hue_levels >= 2:
        levels = np.linspace(-jitter, jitter, hue_levels)
        hue = (base.hue_shift + levels[rng.integers(hue_levels)]) % 1.0
        params = replace(params, hue_shift=hue)
    elif jitter > 0.0:
        hue = (base.hue_shift + rng.uniform(-jitter, jitter)) % 1.0
        sat = base.saturation_scale * (1.0 + rng.uniform(-jitter / 2, jitter / 2))
        val = base.value_scale * (1.0 + rng.uniform(-jitter / 2, jitter / 2))
        params = replace(params, hue_shift=hue, saturation_scale=sat,
                         value_scale=val)
    if nucleus_jitter > 0.0:
        offset = base.nucleus_hue_offset + rng.uniform(-nucleus_jitter,
                                                       nucleus_jitter)
        params = replace(params, nucleus_hue_offset=offset)
    return params


def sample_patches(params: SynthStainParams, n: int, seed: int, *,
                   size: int = 64, ic_fraction: float = 0.5,
                   stream: str = "sample") -> tuple[np.ndarray, np.ndarray]:
    """In-memory batch of labeled patches from one domain; no files written."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(derive_seed(seed, stream, "labels"))
    n_ic = int(round(n * ic_fraction))
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:n_ic]] = 1
    images = np.empty((n, size, size, 3), dtype=np.float32)
    for i, lab in enumerate(labels):
        lo, hi = IC_DENSITY if lab == 1 else REST_DENSITY
        density = rng.uniform(lo, hi)
        images[i] = synth_patch(params, derive_seed(seed, stream, i), size, density)
    return images, labels


def generate_center(
    out_dir: str | Path,
    center_id: str,
    n_slides: int,
    patches_per_slide: int,
    seed: int,
    *,
    size: int = 64,
    base_params: SynthStainParams | None = None,
    slide_hue_jitter: float = 0.0,
    slide_hue_levels: int = 0,
    nucleus_hue_jitter: float = 0.0,
    ic_fraction: float = 0.5,
    slides_per_case: int = 2,
) -> DatasetManifest:
    """Write one center's dataset: images/, label_map.csv, manifest.json.

    Slides are grouped into cases of `slides_per_case`; each slide draws its
    own stain parameters by jittering the center's base hue (plus smaller
    saturation/value wobble) and, with `nucleus_hue_jitter`, the nucleus hue
    alone. These are the knobs for intra-center stain variability; nucleus
    jitter is the stronger one because no global color transform can undo
    it. With `slide_hue_levels >= 2` the per-slide hue offset is drawn from
    that many evenly spaced values in [-jitter, +jitter] instead of a
    continuum (and saturation/value stay fixed), modeling centers whose
    variability comes from a few discrete staining protocols or scanner
    batches rather than continuous drift. Returns the manifest with image
    paths resolved to out_dir.
    """
    if n_slides < 1 or patches_per_slide < 1:
        raise ValueError("n_slides and patches_per_slide must be positive")
    if not 0.0 <= slide_hue_jitter < 0.5:
        raise ValueError(
            f"slide_hue_jitter must be in [0, 0.5), got {slide_hue_jitter}"
        )
    if slide_hue_levels < 0 or slide_hue_levels == 1:
        raise ValueError(
            "slide_hue_levels must be 0 (continuous) or >= 2, got "
            f"{slide_hue_levels}"
        )
    if not 0.0 <= nucleus_hue_jitter < 0.5:
        raise ValueError(
            f"nucleus_hue_jitter must be in [0, 0.5), got {nucleus_hue_jitter}"
        )
    base_params = base_params or SynthStainParams()
    center_dir = Path(out_dir) / center_id
    image_dir = center_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for s in range(n_slides):
        slide_rng = np.random.default_rng(
            derive_seed(seed, "center", center_id, "slide", s)
        )
        params = _slide_params(base_params, slide_hue_jitter, slide_rng,
                               nucleus_hue_jitter, slide_hue_levels)
        slide_id = f"{center_id}_s{s:03d}"
        case_id = f"{center_id}_c{s // slides_per_case:03d}"
        n_ic = int(round(patches_per_slide * ic_fraction))
        labels = np.zeros(patches_per_slide, dtype=np.int64)
        labels[slide_rng.permutation(patches_per_slide)[:n_ic]] = 1
        for i, lab in enumerate(labels):
            lo, hi = IC_DENSITY if lab == 1 else REST_DENSITY
            density = slide_rng.uniform(lo, hi)
            patch_seed = derive_seed(seed, "center", center_id, "patch", s, i)
            patch = synth_patch(params, patch_seed, size, density)
            patch_id = f"{slide_id}_p{i:03d}"
            rel_path = f"images/{patch_id}.png"
            save_png(patch, center_dir / rel_path)
            records.append(PatchRecord(
                patch_id=patch_id,
                case_id=case_id,
                slide_id=slide_id,
                label=density_label(density),
                image_path=rel_path,
                width=size,
                height=size,
            ))

    manifest = DatasetManifest(center_id=center_id, records=records, seed=seed)
    write_label_map(center_dir / "label_map.csv", records)
    manifest.save(center_dir / "manifest.json")
    return relocate(manifest, center_dir)


def save_png(image: np.ndarray, path: str | Path) -> None:
    """Write a float [0, 1] RGB array as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.clip(np.round(np.asarray(image) * 255.0), 0, 255)
    Image.fromarray(quantized.astype(np.uint8), mode="RGB").save(path)
