"""Patch records and dataset manifests.

A manifest is the unit of data exchange: it lists every patch of one center
(or one split of a center) together with its case, slide, and label, and it
round-trips through JSON byte-identically.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from stainshift.util import read_json, write_json

MANIFEST_VERSION = 1
LABELS = ("REST", "IC")
SPLIT_TAGS = ("unsplit", "train", "test")
LABEL_MAP_HEADER = ["patch_id", "case_id", "slide_id", "label"]


@dataclass(frozen=True)
class PatchRecord:
    """One image patch with its provenance and label."""

    patch_id: str
    case_id: str
    slide_id: str
    label: str
    image_path: str
    width: int
    height: int

    def __post_init__(self):
        for name in ("patch_id", "case_id", "slide_id"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.width != self.height or self.width <= 0:
            raise ValueError(
                f"patches must be square with positive size, got "
                f"{self.width}x{self.height} for {self.patch_id!r}"
            )

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


@dataclass
class DatasetManifest:
    """All patches of one center (optionally one split of it)."""

    center_id: str
    records: list[PatchRecord]
    split_tag: str = "unsplit"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.center_id:
            raise ValueError("center_id must be non-empty")
        if self.split_tag not in SPLIT_TAGS:
            raise ValueError(
                f"split_tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}"
            )
        seen: set[str] = set()
        dupes: set[str] = set()
        for rec in self.records:
            if rec.patch_id in seen:
                dupes.add(rec.patch_id)
            seen.add(rec.patch_id)
        if dupes:
            raise ValueError(f"duplicate patch ids: {sorted(dupes)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def case_ids(self) -> list[str]:
        return sorted({rec.case_id for rec in self.records})

    def slide_ids(self) -> list[str]:
        return sorted({rec.slide_id for rec in self.records})

    def label_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in LABELS}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def with_records(self, records: list[PatchRecord], *,
                     split_tag: str | None = None,
                     seed: int | None = None) -> "DatasetManifest":
        return DatasetManifest(
            center_id=self.center_id,
            records=list(records),
            split_tag=self.split_tag if split_tag is None else split_tag,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "center_id": self.center_id,
            "split_tag": self.split_tag,
            "seed": self.seed,
            "records": [
                {
                    "patch_id": r.patch_id,
                    "case_id": r.case_id,
                    "slide_id": r.slide_id,
                    "label": r.label,
                    "image_path": r.image_path,
                    "width": r.width,
                    "height": r.height,
                }
                for r in self.records
            ],
        }

    def save(self, path: str | Path) -> None:
        """Write JSON with image paths re-anchored relative to `path`'s
        directory, so the manifest loads correctly from its new location."""
        path = Path(path)
        base = path.resolve().parent
        data = self.to_dict()
        for rec in data["records"]:
            p = Path(rec["image_path"])
            if not p.is_absolute():
                if (base / p).is_file():
                    continue  # already relative to the manifest location
                p = p.resolve()
            rec["image_path"] = os.path.relpath(p, base)
        write_json(path, data)

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        version = data.get("version")
        if version != MANIFEST_VERSION:
            raise ValueError(
                f"unsupported manifest version {version!r}, "
                f"expected {MANIFEST_VERSION}"
            )
        records = [PatchRecord(**rec) for rec in data["records"]]
        return cls(
            center_id=data["center_id"],
            records=records,
            split_tag=data.get("split_tag", "unsplit"),
            seed=data.get("seed", 0),
        )

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        """Load a manifest; relative image paths resolve against its directory."""
        path = Path(path)
        return relocate(cls.from_dict(read_json(path)), path.parent)


@dataclass
class LabelMap:
    """Parsed label-map CSV: patch_id -> (case_id, slide_id, label)."""

    rows: dict[str, tuple[str, str, str]] = field(default_factory=dict)
    row_errors: list[str] = field(default_factory=list)


def read_label_map(path: str | Path) -> LabelMap:
    """Read a patch_id,case_id,slide_id,label CSV.

    Malformed rows (wrong arity, empty fields, unknown labels, duplicate
    patch ids) are collected in `row_errors` rather than raised, so callers
    can report every bad line at once.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label map not found: {path}")
    result = LabelMap()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LABEL_MAP_HEADER:
            raise ValueError(
                f"label map header must be {','.join(LABEL_MAP_HEADER)}, "
                f"got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                result.row_errors.append(f"line {lineno}: expected 4 fields, got {len(row)}")
                continue
            patch_id, case_id, slide_id, label = (field.strip() for field in row)
            if not patch_id or not case_id or not slide_id:
                result.row_errors.append(f"line {lineno}: empty identifier field")
                continue
            if label not in LABELS:
                result.row_errors.append(f"line {lineno}: unknown label {label!r}")
                continue
            if patch_id in result.rows:
                result.row_errors.append(f"line {lineno}: duplicate patch_id {patch_id!r}")
                continue
            result.rows[patch_id] = (case_id, slide_id, label)
    return result


def write_label_map(path: str | Path, records: list[PatchRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LABEL_MAP_HEADER)
        for rec in records:
            writer.writerow([rec.patch_id, rec.case_id, rec.slide_id, rec.label])


def relocate(manifest: DatasetManifest, root: str | Path) -> DatasetManifest:
    """Return a copy whose relative image paths are anchored at `root`."""
    root = Path(root)
    records = [
        replace(rec, image_path=str(root / rec.image_path))
        if not Path(rec.image_path).is_absolute() else rec
        for rec in manifest.records
    ]
    return manifest.with_records(records)
