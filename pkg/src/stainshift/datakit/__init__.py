"""Dataset layer: patch records, manifests, splits, and synthetic centers."""

from stainshift.datakit.records import (
    LABELS,
    DatasetManifest,
    LabelMap,
    PatchRecord,
    read_label_map,
    relocate,
    write_label_map,
)
from stainshift.datakit.ops import (
    ManifestBuildResult,
    balance_labels,
    build_manifest,
    load_image,
    load_images,
    split_by_case,
    subsample_slides,
)
from stainshift.datakit.synth import (
    SynthStainParams,
    apply_stain,
    base_texture,
    density_label,
    generate_center,
    sample_patches,
    save_png,
    synth_patch,
)

__all__ = [
    "LABELS",
    "DatasetManifest",
    "LabelMap",
    "ManifestBuildResult",
    "PatchRecord",
    "SynthStainParams",
    "apply_stain",
    "balance_labels",
    "base_texture",
    "build_manifest",
    "density_label",
    "generate_center",
    "load_image",
    "load_images",
    "read_label_map",
    "relocate",
    "sample_patches",
    "save_png",
    "split_by_case",
    "subsample_slides",
    "synth_patch",
    "write_label_map",
]
