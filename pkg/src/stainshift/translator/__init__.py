"""Unpaired stain translation: networks, losses, training, estimator."""

from stainshift.translator.estimator import StainTranslator
from stainshift.translator.losses import (
    cycle_loss,
    identity_loss,
    lsgan_disc_loss,
    lsgan_gen_loss,
)
from stainshift.translator.networks import (
    PatchDiscriminator,
    ResidualBlock,
    ResnetGenerator,
    TranslatorConfig,
    build_discriminator,
    build_generator,
    init_weights,
)
from stainshift.translator.pool import ImagePool
from stainshift.translator.training import (
    STOP_FID_PATIENCE,
    STOP_MAX_EPOCHS,
    STOP_MONITOR_ERROR,
    StepReport,
    TrainingDiverged,
    TrainResult,
    TranslatorPair,
    to_numpy,
    to_torch,
    train_step,
    train_translator,
    translate,
)

__all__ = [
    "ImagePool",
    "PatchDiscriminator",
    "ResidualBlock",
    "ResnetGenerator",
    "STOP_FID_PATIENCE",
    "STOP_MAX_EPOCHS",
    "STOP_MONITOR_ERROR",
    "StainTranslator",
    "StepReport",
    "TrainResult",
    "TrainingDiverged",
    "TranslatorConfig",
    "TranslatorPair",
    "build_discriminator",
    "build_generator",
    "cycle_loss",
    "identity_loss",
    "init_weights",
    "lsgan_disc_loss",
    "lsgan_gen_loss",
    "to_numpy",
    "to_torch",
    "train_step",
    "train_translator",
    "translate",
]
