"""Manifest construction, case-level splitting, balancing, and image loading."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from stainshift.datakit.records import DatasetManifest, PatchRecord, read_label_map
from stainshift.util import derive_seed
from stainshift.validation import check_image_batch

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


@dataclass
class ManifestBuildResult:
    """Manifest plus everything that went wrong while building it."""

    manifest: DatasetManifest
    skipped_images: list[str] = field(default_factory=list)
    unmatched_ids: list[str] = field(default_factory=list)
    row_errors: list[str] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped_images)


def build_manifest(image_dir: str | Path, center_id: str,
                   label_map_path: str | Path) -> ManifestBuildResult:
    """Scan a directory of patch images and join them with a label map.

    Missing directory or label map is fatal. Images without a label row are
    skipped (reported in `skipped_images`); label rows without an image are
    reported in `unmatched_ids`; malformed rows in `row_errors`.
    """
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    label_map = read_label_map(label_map_path)

    image_paths = sorted(
        p for p in image_dir.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    records = []
    skipped = []
    seen_ids = set()
    for path in image_paths:
        patch_id = path.stem
        if patch_id not in label_map.rows:
            skipped.append(str(path))
            continue
        if patch_id in seen_ids:
            raise ValueError(
                f"duplicate patch id from multiple files: {patch_id!r}"
            )
        seen_ids.add(patch_id)
        case_id, slide_id, label = label_map.rows[patch_id]
        with Image.open(path) as img:
            width, height = img.size
        records.append(PatchRecord(
            patch_id=patch_id,
            case_id=case_id,
            slide_id=slide_id,
            label=label,
            image_path=str(path),
            width=width,
            height=height,
        ))
    unmatched = sorted(set(label_map.rows) - seen_ids)
    manifest = DatasetManifest(center_id=center_id, records=records)
    return ManifestBuildResult(
        manifest=manifest,
        skipped_images=skipped,
        unmatched_ids=unmatched,
        row_errors=list(label_map.row_errors),
    )


def split_by_case(manifest: DatasetManifest, test_fraction: float,
                  seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Split into train/test with every case entirely on one side.

    Cases are sorted, shuffled with the seed, and the first round(n * f)
    cases (at least 1, at most n - 1) become the test side.
    """
    if manifest.split_tag != "unsplit":
        raise ValueError(
            f"manifest already carries split_tag {manifest.split_tag!r}"
        )
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    cases = manifest.case_ids()
    if len(cases) < 2:
        raise ValueError(
            f"need at least 2 cases to split, got {len(cases)}"
        )
    rng = np.random.default_rng(derive_seed(seed, "split-by-case"))
    order = rng.permutation(len(cases))
    n_test = int(round(len(cases) * test_fraction))
    n_test = min(max(n_test, 1), len(cases) - 1)
    test_cases = {cases[i] for i in order[:n_test]}
    train_records = [r for r in manifest.records if r.case_id not in test_cases]
    test_records = [r for r in manifest.records if r.case_id in test_cases]
    train = manifest.with_records(train_records, split_tag="train", seed=seed)
    test = manifest.with_records(test_records, split_tag="test", seed=seed)
    return train, test


def balance_labels(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Subsample the majority label down to the minority count."""
    counts = manifest.label_counts()
    missing = [label for label, n in counts.items() if n == 0]
    if missing:
        raise ValueError(
            f"cannot balance: no patches with label {missing[0]!r} in "
            f"center {manifest.center_id!r}"
        )
    n_keep = min(counts.values())
    rng = np.random.default_rng(derive_seed(seed, "balance-labels"))
    kept_ids = set()
    for label in counts:
        ids = [r.patch_id for r in manifest.records if r.label == label]
        chosen = rng.choice(len(ids), size=n_keep, replace=False)
        kept_ids.update(ids[i] for i in chosen)
    records = [r for r in manifest.records if r.patch_id in kept_ids]
    return manifest.with_records(records, seed=seed)


def subsample_slides(manifest: DatasetManifest, n_slides: int,
                     n_patches: int, seed: int) -> DatasetManifest:
    """Restrict to n_slides random slides, then n_patches random patches."""
    slides = manifest.slide_ids()
    if n_slides < 1 or n_patches < 1:
        raise ValueError("n_slides and n_patches must be positive")
    if n_slides > len(slides):
        raise ValueError(
            f"requested {n_slides} slides but center "
            f"{manifest.center_id!r} has only {len(slides)}"
        )
    rng = np.random.default_rng(derive_seed(seed, "subsample-slides"))
    chosen = rng.choice(len(slides), size=n_slides, replace=False)
    keep_slides = {slides[i] for i in chosen}
    pool = [r for r in manifest.records if r.slide_id in keep_slides]
    if n_patches > len(pool):
        raise ValueError(
            f"requested {n_patches} patches but the {n_slides} chosen "
            f"slides hold only {len(pool)} (short by {n_patches - len(pool)})"
        )
    picked = rng.choice(len(pool), size=n_patches, replace=False)
    records = [pool[i] for i in sorted(picked)]
    return manifest.with_records(records, seed=seed)


def load_image(path: str | Path) -> np.ndarray:
    """Load one RGB image as float32 in [0, 1], shape (h, w, 3)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def load_images(manifest: DatasetManifest, *,
                size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Load every patch of a manifest.

    Returns (images, labels): (n, h, w, 3) float32 in [0, 1] and (n,) int64
    with IC encoded as 1, REST as 0.
    """
    if len(manifest) == 0:
        raise ValueError(f"manifest for center {manifest.center_id!r} is empty")
    images = np.stack([load_image(rec.image_path) for rec in manifest.records])
    labels = np.asarray([rec.label_index for rec in manifest.records], dtype=np.int64)
    images = check_image_batch(images, size=size, name="manifest images")
    return images, labels
