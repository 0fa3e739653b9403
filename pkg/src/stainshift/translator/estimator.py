"""Scikit-learn style wrapper around translator training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from stainshift.fidmon.monitor import DEFAULT_PATIENCE, FidMonitor
from stainshift.translator.networks import TranslatorConfig
from stainshift.translator.training import TranslatorPair, train_translator
from stainshift.validation import check_image_batch


class StainTranslator(BaseEstimator, TransformerMixin):
    """Unpaired image-to-image translator between two staining domains.

    fit(X, y) takes images with a two-valued domain label in y; the
    lexicographically smaller label becomes domain A. transform maps A to B
    by default (`direction` controls this); inverse_transform maps the
    other way. With `patience` set, training stops early on stalled FID and
    keeps the best-FID weights.
    """

    def __init__(self, image_size: int = 64, base_channels: int = 32,
                 n_residual_blocks: int = 3, lambda_cycle: float = 10.0,
                 use_identity_loss: bool = False, learning_rate: float = 2e-4,
                 beta1: float = 0.5, batch_size: int = 4,
                 steps_per_epoch: int | None = None, fake_pool_size: int = 50,
                 max_epochs: int = 20, patience: int | None = DEFAULT_PATIENCE,
                 fid_samples: int | None = None, direction: str = "a_to_b",
                 seed: int = 0):
        self.image_size = image_size
        self.base_channels = base_channels
        self.n_residual_blocks = n_residual_blocks
        self.lambda_cycle = lambda_cycle
        self.use_identity_loss = use_identity_loss
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.batch_size = batch_size
        self.steps_per_epoch = steps_per_epoch
        self.fake_pool_size = fake_pool_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.fid_samples = fid_samples
        self.direction = direction
        self.seed = seed

    def _config(self) -> TranslatorConfig:
        return TranslatorConfig(
            image_size=self.image_size,
            base_channels=self.base_channels,
            n_residual_blocks=self.n_residual_blocks,
            lambda_cycle=self.lambda_cycle,
            use_identity_loss=self.use_identity_loss,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            batch_size=self.batch_size,
            steps_per_epoch=self.steps_per_epoch,
            fake_pool_size=self.fake_pool_size,
        )

    def fit(self, X, y):
        """Train on images X labeled by domain in y (exactly two values)."""
        X = check_image_batch(X, size=self.image_size)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"length mismatch: {len(X)} images, {len(y)} labels")
        domains = sorted({str(v) for v in y})
        if len(domains) != 2:
            raise ValueError(
                f"y must contain exactly 2 distinct domains, got {domains}"
            )
        labels = np.asarray([str(v) for v in y])
        monitor = (FidMonitor(patience=self.patience)
                   if self.patience is not None else None)
        pair, result = train_translator(
            X[labels == domains[0]],
            X[labels == domains[1]],
            self._config(),
            monitor=monitor,
            max_epochs=self.max_epochs,
            seed=self.seed,
            fid_samples=self.fid_samples,
            domain_a_id=domains[0],
            domain_b_id=domains[1],
        )
        self.domains_ = domains
        self.pair_ = pair
        self.result_ = result
        return self

    def _check_fitted(self):
        if not hasattr(self, "pair_"):
            raise RuntimeError("this StainTranslator is not fitted yet")

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return self.pair_.translate(X, direction=self.direction)

    def inverse_transform(self, X) -> np.ndarray:
        self._check_fitted()
        opposite = "b_to_a" if self.direction == "a_to_b" else "a_to_b"
        return self.pair_.translate(X, direction=opposite)

    def translate(self, X, direction: str = "a_to_b") -> np.ndarray:
        self._check_fitted()
        return self.pair_.translate(X, direction=direction)

    def save(self, out_dir) -> None:
        self._check_fitted()
        self.pair_.save(out_dir)

    @classmethod
    def from_checkpoint(cls, checkpoint_dir) -> "StainTranslator":
        pair = TranslatorPair.load(checkpoint_dir)
        cfg = pair.cfg
        est = cls(image_size=cfg.image_size, base_channels=cfg.base_channels,
                  n_residual_blocks=cfg.n_residual_blocks,
                  lambda_cycle=cfg.lambda_cycle,
                  use_identity_loss=cfg.use_identity_loss,
                  learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                  batch_size=cfg.batch_size,
                  steps_per_epoch=cfg.steps_per_epoch,
                  fake_pool_size=cfg.fake_pool_size)
        est.pair_ = pair
        est.domains_ = [pair.domain_a, pair.domain_b]
        est.result_ = None
        return est
