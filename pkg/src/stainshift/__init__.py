"""Stain-invariant histopathology patch classification via unpaired stain
translation.

Layers: `datakit` (manifests, splits, synthetic centers), `translator`
(unpaired translation networks and training), `fidmon` (FID and the
patience stopper), `classifier` (IC/REST patch models), `adapt` (MDS1,
MDS2, UDA protocols), `metrics` (patch and slide evaluation),
`stainstats` (HSV tools and hue variability), and the `stainshift` CLI.
"""

from stainshift.adapt import AdaptationPlan, run_plan, uda_stream
from stainshift.classifier import AugmentParams, ClassifierConfig, PatchClassifier
from stainshift.datakit import (
    DatasetManifest,
    PatchRecord,
    SynthStainParams,
    generate_center,
    synth_patch,
)
from stainshift.fidmon import FidMonitor, compute_fid, frechet_distance, gaussian_stats
from stainshift.metrics import EvalReport, auc, precision_recall, slide_level
from stainshift.stainstats import hue_variability, rgb_to_hsv, shift_hue
from stainshift.translator import StainTranslator, TranslatorConfig, TranslatorPair

__version__ = "0.1.0"

__all__ = [
    "AdaptationPlan",
    "AugmentParams",
    "ClassifierConfig",
    "DatasetManifest",
    "EvalReport",
    "FidMonitor",
    "PatchClassifier",
    "PatchRecord",
    "StainTranslator",
    "SynthStainParams",
    "TranslatorConfig",
    "TranslatorPair",
    "auc",
    "compute_fid",
    "frechet_distance",
    "gaussian_stats",
    "generate_center",
    "hue_variability",
    "precision_recall",
    "rgb_to_hsv",
    "run_plan",
    "shift_hue",
    "slide_level",
    "synth_patch",
    "uda_stream",
]
