"""Adaptation protocols: inference-time translation, translated training,
and translation-as-augmentation."""

from stainshift.adapt.protocols import (
    DEFAULT_AUGMENT_PROBABILITY,
    PROTOCOLS,
    UDA_ROTATIONS,
    AdaptationPlan,
    mds1_predict,
    mds2_train,
    run_plan,
    run_uda_rotations,
    uda_rotation_plans,
    uda_stream,
)

__all__ = [
    "AdaptationPlan",
    "DEFAULT_AUGMENT_PROBABILITY",
    "PROTOCOLS",
    "UDA_ROTATIONS",
    "mds1_predict",
    "mds2_train",
    "run_plan",
    "run_uda_rotations",
    "uda_rotation_plans",
    "uda_stream",
]
