"""Patch classifier training and the scikit-learn style estimator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin

from stainshift.classifier.augment import AugmentParams, augment_batch
from stainshift.classifier.network import build_backbone
from stainshift.util import derive_seed, read_json, write_json
from stainshift.validation import check_image_batch, check_labels

N_CLASSES = 2  # IC versus REST


@dataclass
class ClassifierConfig:
    """Training settings; `baseline()` is the full-protocol preset (150
    epochs with the standard augmentations), the defaults are desk scale."""

    backbone: str = "small_cnn"
    base_channels: int = 16
    image_size: int = 64
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def baseline(cls, **overrides) -> "ClassifierConfig":
        params = dict(epochs=150)
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "base_channels": self.base_channels,
            "image_size": self.image_size,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "augment": self.augment,
        }


class PatchClassifier(BaseEstimator, ClassifierMixin):
    """Binary IC/REST patch classifier (IC = 1).

    fit(X, y) trains on labeled images; fit_stream consumes a (possibly
    infinite) stream of (image, label) pairs, which is how
    translation-augmented training is driven. predict_proba returns
    (n, 2) class probabilities; predictions are per-sample deterministic
    and independent of batch composition.
    """

    def __init__(self, backbone: str = "small_cnn", base_channels: int = 16,
                 image_size: int = 64, epochs: int = 10, batch_size: int = 32,
                 learning_rate: float = 1e-3,
                 augment: AugmentParams | bool | None = True, seed: int = 0):
        self.backbone = backbone
        self.base_channels = base_channels
        self.image_size = image_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.augment = augment
        self.seed = seed

    def _augment_params(self) -> AugmentParams | None:
        if self.augment is True:
            return AugmentParams()
        if self.augment is False or self.augment is None:
            return None
        return self.augment

    def _config(self) -> ClassifierConfig:
        return ClassifierConfig(
            backbone=self.backbone, base_channels=self.base_channels,
            image_size=self.image_size, epochs=self.epochs,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            augment=self._augment_params() is not None,
        )

    def _init_training(self):
        self._config()  # validates settings
        net = build_backbone(self.backbone, self.base_channels, N_CLASSES,
                             derive_seed(self.seed, "classifier-init"))
        opt = torch.optim.Adam(net.parameters(), lr=self.learning_rate)
        self.net_ = net
        self.classes_ = np.array([0, 1])
        self.history_ = []
        return net, opt

    def _train_batch(self, net, opt, images: np.ndarray,
                     labels: np.ndarray) -> tuple[float, int]:
        x = torch.from_numpy(
            np.ascontiguousarray(images.transpose(0, 3, 1, 2))
        ) * 2.0 - 1.0
        y = torch.from_numpy(labels.astype(np.int64))
        opt.zero_grad()
        logits = net(x)
        loss = F.cross_entropy(logits, y)
        loss.backward()
        opt.step()
        correct = int((logits.argmax(dim=1) == y).sum())
        return loss.item() * len(labels), correct

    def fit(self, X, y):
        """Train on images X with binary labels y; both classes required."""
        X = check_image_batch(X, size=self.image_size)
        y = check_labels(y)
        if len(X) != len(y):
            raise ValueError(f"length mismatch: {len(X)} images, {len(y)} labels")
        if len(np.unique(y)) < 2:
            raise ValueError(
                "training labels contain a single class; need both IC and REST"
            )
        net, opt = self._init_training()
        params = self._augment_params()
        order_rng = np.random.default_rng(derive_seed(self.seed, "batch-order"))
        aug_rng = np.random.default_rng(derive_seed(self.seed, "augment"))
        net.train()
        for epoch in range(1, self.epochs + 1):
            order = order_rng.permutation(len(X))
            total_loss, total_correct = 0.0, 0
            for start in range(0, len(X), self.batch_size):
                idx = order[start:start + self.batch_size]
                batch = X[idx]
                if params is not None:
                    batch = augment_batch(batch, params, aug_rng)
                loss_sum, correct = self._train_batch(net, opt, batch, y[idx])
                total_loss += loss_sum
                total_correct += correct
            self.history_.append({
                "epoch": epoch,
                "loss": total_loss / len(X),
                "accuracy": total_correct / len(X),
            })
        net.eval()
        return self

    def fit_stream(self, stream, *, epochs: int | None = None,
                   steps_per_epoch: int = 50):
        """Train from an iterator of (image, label) pairs.

        Pulls batch_size pairs per step. Augmentation params still apply on
        top of whatever the stream does. Raises if the stream runs dry.
        """
        if steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        epochs = self.epochs if epochs is None else epochs
        if epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {epochs}")
        net, opt = self._init_training()
        params = self._augment_params()
        aug_rng = np.random.default_rng(derive_seed(self.seed, "augment"))
        iterator = iter(stream)
        net.train()
        for epoch in range(1, epochs + 1):
            total_loss, total_correct, total_n = 0.0, 0, 0
            for _ in range(steps_per_epoch):
                pairs = []
                for _ in range(self.batch_size):
                    try:
                        pairs.append(next(iterator))
                    except StopIteration:
                        raise ValueError(
                            "sample stream exhausted at epoch "
                            f"{epoch}; provide an endless stream or fewer steps"
                        ) from None
                batch = check_image_batch(
                    np.stack([np.asarray(img) for img, _ in pairs]),
                    size=self.image_size, name="stream images")
                labels = check_labels([int(lab) for _, lab in pairs])
                if params is not None:
                    batch = augment_batch(batch, params, aug_rng)
                loss_sum, correct = self._train_batch(net, opt, batch, labels)
                total_loss += loss_sum
                total_correct += correct
                total_n += len(labels)
            self.history_.append({
                "epoch": epoch,
                "loss": total_loss / total_n,
                "accuracy": total_correct / total_n,
            })
        net.eval()
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("this PatchClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_image_batch(X, size=self.image_size)
        self.net_.eval()
        probs = []
        with torch.no_grad():
            for start in range(0, len(X), 256):
                chunk = X[start:start + 256]
                x = torch.from_numpy(
                    np.ascontiguousarray(chunk.transpose(0, 3, 1, 2))
                ) * 2.0 - 1.0
                probs.append(torch.softmax(self.net_(x), dim=1).numpy())
        return np.concatenate(probs, axis=0).astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def score(self, X, y) -> float:
        y = check_labels(y)
        return float((self.predict(X) == y).mean())

    def write_history_csv(self, path: str | Path) -> None:
        self._check_fitted()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "accuracy"])
            for row in self.history_:
                writer.writerow([row["epoch"], f"{row['loss']:.6f}",
                                 f"{row['accuracy']:.6f}"])

    def save(self, out_dir: str | Path) -> Path:
        self._check_fitted()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        torch.save(self.net_.state_dict(), out_dir / "classifier.pt")
        augment = self._augment_params()
        write_json(out_dir / "metadata.json", {
            "params": {
                "backbone": self.backbone,
                "base_channels": self.base_channels,
                "image_size": self.image_size,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "seed": self.seed,
            },
            "augment": None if augment is None else augment.to_dict(),
            "history": self.history_,
        })
        return out_dir

    @classmethod
    def load(cls, out_dir: str | Path) -> "PatchClassifier":
        out_dir = Path(out_dir)
        meta = read_json(out_dir / "metadata.json")
        augment = meta.get("augment")
        est = cls(**meta["params"],
                  augment=AugmentParams(**augment) if augment else False)
        net = build_backbone(est.backbone, est.base_channels, N_CLASSES, 0)
        state = torch.load(out_dir / "classifier.pt", weights_only=True)
        net.load_state_dict(state)
        net.eval()
        est.net_ = net
        est.classes_ = np.array([0, 1])
        est.history_ = meta.get("history", [])
        return est


def train_on_manifest(manifest, config: ClassifierConfig, *,
                      seed: int = 0) -> PatchClassifier:
    """Train a PatchClassifier on a labeled manifest."""
    from stainshift.datakit.ops import load_images

    X, y = load_images(manifest, size=config.image_size)
    clf = PatchClassifier(
        backbone=config.backbone, base_channels=config.base_channels,
        image_size=config.image_size, epochs=config.epochs,
        batch_size=config.batch_size, learning_rate=config.learning_rate,
        augment=config.augment, seed=seed,
    )
    return clf.fit(X, y)
