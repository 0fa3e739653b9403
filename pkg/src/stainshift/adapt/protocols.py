"""Adaptation protocols built on stain translation.

Three ways to reuse labels from a source center on differently stained
target centers:

- MDS1: keep the source-trained classifier; at inference, translate target
  patches into the source stain and classify those.
- MDS2: translate the labeled source training set into the target stain
  (labels carry over) and train a fresh classifier on the result.
- UDA: train one classifier on the source set while randomly replacing
  each drawn patch, with some probability, by its translation into one of
  the target stains; translation acts as a data augmentation and the model
  is evaluated on every center, including ones never translated to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stainshift.classifier.train import ClassifierConfig, PatchClassifier
from stainshift.metrics.report import (
    CenterMetrics,
    EvalReport,
    evaluate_predictions,
    evaluate_slides,
)
from stainshift.translator.training import TranslatorPair
from stainshift.util import config_hash, derive_seed, read_json, write_json
from stainshift.validation import check_image_batch

PROTOCOLS = ("MDS1", "MDS2", "UDA")
DEFAULT_AUGMENT_PROBABILITY = 0.5

# Held-one-out rotations over three non-source centers: train with
# translations to the first two, test generalization on the third.
UDA_ROTATIONS = ((0, 1, 2), (2, 0, 1), (2, 1, 0))


@dataclass
class AdaptationPlan:
    """What to adapt: protocol, centers, and the translators to use."""

    protocol: str
    source_center: str
    target_centers: list[str]
    translator_checkpoints: dict[str, str] = field(default_factory=dict)
    augment_probability: float = DEFAULT_AUGMENT_PROBABILITY

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(
                f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}"
            )
        if not self.source_center:
            raise ValueError("source_center must be non-empty")
        if self.protocol in ("MDS1", "MDS2") and len(self.target_centers) != 1:
            raise ValueError(
                f"{self.protocol} takes exactly one target center, "
                f"got {self.target_centers}"
            )
        if self.protocol == "UDA" and not self.target_centers:
            raise ValueError("UDA needs at least one target center")
        if self.source_center in self.target_centers:
            raise ValueError("source center cannot be a target center")
        if not 0.0 <= self.augment_probability <= 1.0:
            raise ValueError(
                f"augment_probability must be in [0, 1], got "
                f"{self.augment_probability}"
            )
        missing = [c for c in self.target_centers
                   if c not in self.translator_checkpoints]
        if missing:
            raise ValueError(
                f"no translator checkpoint for target centers: {missing}"
            )

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "source_center": self.source_center,
            "target_centers": list(self.target_centers),
            "translator_checkpoints": dict(self.translator_checkpoints),
            "augment_probability": self.augment_probability,
        }

    def save(self, path: str | Path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "AdaptationPlan":
        return cls(**read_json(path))

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


def _resolve_translator(ref) -> TranslatorPair:
    if isinstance(ref, TranslatorPair):
        return ref
    return TranslatorPair.load(ref)


def mds1_predict(baseline: PatchClassifier, translator,
                 target_images: np.ndarray, *,
                 batch_size: int = 64) -> np.ndarray:
    """Class probabilities for target patches via the source classifier.

    Target patches are translated into the source stain (direction B to A)
    and the unmodified source classifier scores the translations.
    """
    translator = _resolve_translator(translator)
    target_images = check_image_batch(target_images)
    translated = translator.translate(target_images, direction="b_to_a",
                                      batch_size=batch_size)
    return baseline.predict_proba(translated)


def mds2_train(config: ClassifierConfig, translator, source_train, *,
               seed: int = 0, batch_size: int = 64) -> PatchClassifier:
    """Train a target-stain classifier on translated source data.

    The labeled source training set is translated A to B; labels carry over
    unchanged, and a fresh classifier is trained on the translations.
    """
    from stainshift.datakit.ops import load_images

    translator = _resolve_translator(translator)
    if isinstance(source_train, tuple):
        X, y = source_train
        X = check_image_batch(X, size=config.image_size)
    else:
        X, y = load_images(source_train, size=config.image_size)
    translated = translator.translate(X, direction="a_to_b",
                                      batch_size=batch_size)
    clf = PatchClassifier(
        backbone=config.backbone, base_channels=config.base_channels,
        image_size=config.image_size, epochs=config.epochs,
        batch_size=config.batch_size, learning_rate=config.learning_rate,
        augment=config.augment, seed=seed,
    )
    return clf.fit(translated, np.asarray(y))


def uda_stream(source_train, translators: dict[str, object],
               p_translate: float, rng: np.random.Generator, *,
               chunk_size: int = 32):
    """Endless stream of (image, label) pairs with translation augmentation.

    Each draw picks a uniformly random labeled source patch; with
    probability `p_translate` it is emitted translated into a uniformly
    chosen target stain, otherwise raw. Labels always carry over. With
    p_translate = 0 the stream reduces to plain source sampling and no
    translator is touched.
    """
    from stainshift.datakit.ops import load_images

    if not 0.0 <= p_translate <= 1.0:
        raise ValueError(f"p_translate must be in [0, 1], got {p_translate}")
    if p_translate > 0 and not translators:
        raise ValueError("p_translate > 0 requires at least one translator")
    if isinstance(source_train, tuple):
        X, y = source_train
        X = check_image_batch(X)
        y = np.asarray(y)
    else:
        X, y = load_images(source_train)
    centers = sorted(translators)
    pairs = {c: _resolve_translator(translators[c]) for c in centers} \
        if p_translate > 0 else {}

    while True:
        idx = rng.integers(len(X), size=chunk_size)
        translate_mask = rng.random(chunk_size) < p_translate
        choices = (rng.integers(len(centers), size=chunk_size)
                   if centers else np.zeros(chunk_size, dtype=int))
        images = X[idx].copy()
        for center_pos in set(choices[translate_mask]):
            sel = translate_mask & (choices == center_pos)
            if not sel.any():
                continue
            pair = pairs[centers[center_pos]]
            images[sel] = pair.translate(images[sel], direction="a_to_b")
        for i in range(chunk_size):
            yield images[i], int(y[idx[i]])


def uda_rotation_plans(source_center: str, other_centers: list[str],
                       translator_checkpoints: dict[str, str], *,
                       augment_probability: float = DEFAULT_AUGMENT_PROBABILITY,
                       ) -> list[tuple[AdaptationPlan, str]]:
    """The three held-one-out UDA configurations over three other centers.

    Returns (plan, held_out_center) pairs: train with translations into two
    centers, keep the third unseen for the generalization measurement.
    """
    if len(other_centers) != 3:
        raise ValueError(
            f"rotations are defined over exactly 3 non-source centers, "
            f"got {other_centers}"
        )
    plans = []
    for i, j, k in UDA_ROTATIONS:
        train_centers = [other_centers[i], other_centers[j]]
        held_out = other_centers[k]
        plans.append((AdaptationPlan(
            protocol="UDA",
            source_center=source_center,
            target_centers=train_centers,
            translator_checkpoints={
                c: translator_checkpoints[c] for c in train_centers
            },
            augment_probability=augment_probability,
        ), held_out))
    return plans


def _dataset_split(datasets: dict, center: str, split: str):
    if center not in datasets:
        raise ValueError(f"no datasets given for center {center!r}")
    entry = datasets[center]
    if split not in entry or entry[split] is None:
        raise ValueError(f"center {center!r} has no {split!r} manifest")
    return entry[split]


def run_plan(plan: AdaptationPlan, datasets: dict, config: ClassifierConfig, *,
             baseline: PatchClassifier | None = None, seed: int = 0,
             uda_epochs: int | None = None, uda_steps_per_epoch: int = 50,
             out_dir: str | Path | None = None) -> EvalReport:
    """Execute one adaptation plan and evaluate per center.

    `datasets` maps center id to {"train": manifest-or-None, "test":
    manifest}; manifests may be replaced by (images, labels) tuples. All
    referenced inputs (checkpoints included) are validated before any
    training starts. The report carries patch metrics for every center with
    a test set - for UDA that includes centers never translated to - plus
    slide-level metrics where slide ids are available.
    """
    from stainshift.datakit.ops import load_images
    from stainshift.datakit.records import DatasetManifest

    # fail fast: every referenced artifact must resolve before training
    for center, ref in plan.translator_checkpoints.items():
        if not isinstance(ref, TranslatorPair) and \
                not (Path(ref) / "metadata.json").is_file():
            raise FileNotFoundError(
                f"translator checkpoint for center {center!r} not found: {ref}"
            )
    _dataset_split(datasets, plan.source_center, "train")
    for center in plan.target_centers:
        _dataset_split(datasets, center, "test")

    def _load(split_obj):
        if isinstance(split_obj, tuple):
            return check_image_batch(split_obj[0]), np.asarray(split_obj[1]), None
        X, y = load_images(split_obj, size=config.image_size)
        slide_ids = [r.slide_id for r in split_obj.records] \
            if isinstance(split_obj, DatasetManifest) else None
        return X, y, slide_ids

    source_train = _dataset_split(datasets, plan.source_center, "train")

    if plan.protocol == "MDS1":
        if baseline is None:
            X, y, _ = _load(source_train)
            baseline = PatchClassifier(
                backbone=config.backbone, base_channels=config.base_channels,
                image_size=config.image_size, epochs=config.epochs,
                batch_size=config.batch_size,
                learning_rate=config.learning_rate,
                augment=config.augment, seed=seed,
            ).fit(X, y)
        model = baseline
        target = plan.target_centers[0]
        translator = _resolve_translator(plan.translator_checkpoints[target])

        def predict(center: str, X: np.ndarray) -> np.ndarray:
            if center == target:
                return mds1_predict(model, translator, X)[:, 1]
            return model.predict_proba(X)[:, 1]

        eval_centers = sorted({plan.source_center, target} & set(datasets))
    elif plan.protocol == "MDS2":
        target = plan.target_centers[0]
        translator = _resolve_translator(plan.translator_checkpoints[target])
        model = mds2_train(config, translator, source_train, seed=seed)

        def predict(center: str, X: np.ndarray) -> np.ndarray:
            return model.predict_proba(X)[:, 1]

        eval_centers = [target]
    else:  # UDA
        translators = {c: _resolve_translator(plan.translator_checkpoints[c])
                       for c in plan.target_centers}
        stream = uda_stream(
            source_train, translators, plan.augment_probability,
            np.random.default_rng(derive_seed(seed, "uda-stream")),
        )
        model = PatchClassifier(
            backbone=config.backbone, base_channels=config.base_channels,
            image_size=config.image_size, epochs=config.epochs,
            batch_size=config.batch_size, learning_rate=config.learning_rate,
            augment=config.augment, seed=seed,
        ).fit_stream(stream, epochs=uda_epochs or config.epochs,
                     steps_per_epoch=uda_steps_per_epoch)

        def predict(center: str, X: np.ndarray) -> np.ndarray:
            return model.predict_proba(X)[:, 1]

        eval_centers = sorted(
            c for c in datasets
            if "test" in datasets[c] and datasets[c]["test"] is not None
        )

    report = EvalReport(protocol=plan.protocol, config_hash=plan.hash)
    for center in eval_centers:
        X, y, slide_ids = _load(_dataset_split(datasets, center, "test"))
        probs = predict(center, X)
        report.per_center[center] = evaluate_predictions(y, probs)
        if slide_ids is not None:
            report.slide_level[center] = evaluate_slides(
                slide_ids, y, (probs >= 0.5).astype(int)
            )
    if out_dir is not None:
        out_dir = Path(out_dir)
        report.save(out_dir / "report.json")
        report.write_csv(out_dir / "report.csv")
    return report


def run_uda_rotations(source_center: str, other_centers: list[str],
                      translator_checkpoints: dict[str, str], datasets: dict,
                      config: ClassifierConfig, *,
                      augment_probability: float = DEFAULT_AUGMENT_PROBABILITY,
                      seed: int = 0, uda_epochs: int | None = None,
                      uda_steps_per_epoch: int = 50,
                      ) -> list[tuple[str, EvalReport]]:
    """Run all three UDA rotations; reports are tagged with the held-out
    center as UDA(i,j|k) and include its metrics."""
    results = []
    for plan, held_out in uda_rotation_plans(
            source_center, other_centers, translator_checkpoints,
            augment_probability=augment_probability):
        report = run_plan(plan, datasets, config, seed=seed,
                          uda_epochs=uda_epochs,
                          uda_steps_per_epoch=uda_steps_per_epoch)
        report.protocol = (
            f"UDA({','.join(plan.target_centers)}|{held_out})"
        )
        results.append((held_out, report))
    return results
