"""IC/REST patch classification: augmentations, backbones, training."""

from stainshift.classifier.augment import AugmentParams, augment_batch, augment_patch
from stainshift.classifier.network import (
    BACKBONES,
    SmallCnn,
    build_backbone,
    init_classifier_weights,
    register_backbone,
)
from stainshift.classifier.train import (
    ClassifierConfig,
    PatchClassifier,
    train_on_manifest,
)

__all__ = [
    "AugmentParams",
    "BACKBONES",
    "ClassifierConfig",
    "PatchClassifier",
    "SmallCnn",
    "augment_batch",
    "augment_patch",
    "build_backbone",
    "init_classifier_weights",
    "register_backbone",
    "train_on_manifest",
]
