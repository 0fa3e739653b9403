"""Augmentations, backbone construction, and the patch classifier."""

from __future__ import annotations

import csv
import itertools

import numpy as np
import pytest
import torch
from sklearn.base import clone

from stainshift.classifier import (
    BACKBONES,
    AugmentParams,
    ClassifierConfig,
    PatchClassifier,
    SmallCnn,
    augment_batch,
    augment_patch,
    build_backbone,
    register_backbone,
    train_on_manifest,
)


def toy_data(n: int = 40, seed: int = 0, size: int = 16):
    """Linearly separable images: label 1 = bright, label 0 = dark."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = np.empty((n, size, size, 3), dtype=np.float32)
    for i, label in enumerate(y):
        base = 0.8 if label else 0.0
        X[i] = base + 0.2 * rng.random((size, size, 3))
    return X.astype(np.float32), y.astype(np.int64)


def quick_classifier(**overrides) -> PatchClassifier:
    params = dict(base_channels=4, image_size=16, epochs=6, batch_size=16,
                  augment=False, seed=0)
    params.update(overrides)
    return PatchClassifier(**params)


class TestAugmentParams:
    def test_validation(self):
        with pytest.raises(ValueError, match="p_flip"):
            AugmentParams(p_flip=1.5)
        with pytest.raises(ValueError, match="hue_amplitude"):
            AugmentParams(hue_amplitude=0.6)
        with pytest.raises(ValueError, match="noise_sigma"):
            AugmentParams(noise_sigma=-0.1)

    def test_round_trip_dict(self):
        params = AugmentParams(hue_amplitude=0.2, p_noise=0.0)
        assert AugmentParams(**params.to_dict()) == params


class TestAugmentPatch:
    def quiet(self, **overrides) -> AugmentParams:
        fields = dict(p_flip=0.0, p_rotate=0.0, p_jitter=0.0, p_noise=0.0)
        fields.update(overrides)
        return AugmentParams(**fields)

    def test_flip_only(self):
        img = np.random.default_rng(0).random((8, 8, 3)).astype(np.float32)
        out = augment_patch(img, self.quiet(p_flip=1.0),
                            np.random.default_rng(1))
        np.testing.assert_array_equal(out, img[:, ::-1, :])

    def test_rotation_only_is_some_quarter_turn(self):
        img = np.random.default_rng(2).random((8, 8, 3)).astype(np.float32)
        out = augment_patch(img, self.quiet(p_rotate=1.0),
                            np.random.default_rng(3))
        turns = [np.rot90(img, k=k, axes=(0, 1)) for k in (1, 2, 3)]
        assert any(np.array_equal(out, t) for t in turns)

    def test_zero_amplitude_jitter_is_identity(self):
        img = np.random.default_rng(4).random((8, 8, 3)).astype(np.float32)
        params = self.quiet(p_jitter=1.0, hue_amplitude=0.0,
                            saturation_amplitude=0.0, brightness_amplitude=0.0)
        out = augment_patch(img, params, np.random.default_rng(5))
        np.testing.assert_allclose(out, img, atol=1e-6)

    def test_output_contract(self):
        img = np.random.default_rng(6).random((8, 8, 3)).astype(np.float32)
        out = augment_patch(img, AugmentParams(), np.random.default_rng(7))
        assert out.dtype == np.float32
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert out.flags["C_CONTIGUOUS"]

    def test_deterministic_per_rng_state(self):
        img = np.random.default_rng(8).random((8, 8, 3)).astype(np.float32)
        a = augment_patch(img, AugmentParams(), np.random.default_rng(9))
        b = augment_patch(img, AugmentParams(), np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_batch_shape(self):
        X = np.random.default_rng(10).random((5, 8, 8, 3)).astype(np.float32)
        out = augment_batch(X, AugmentParams(), np.random.default_rng(11))
        assert out.shape == X.shape


class TestBackbones:
    def test_output_shape(self):
        net = SmallCnn(base_channels=4, n_classes=2)
        out = net(torch.rand(3, 3, 16, 16))
        assert out.shape == (3, 2)

    def test_group_norm_accepts_any_channel_width(self):
        # channel counts not divisible by 8 must still construct
        for base in (2, 4, 6, 12):
            net = build_backbone("small_cnn", base, 2, seed=0)
            assert net(torch.rand(1, 3, 16, 16)).shape == (1, 2)

    def test_per_sample_normalization(self):
        net = build_backbone("small_cnn", 4, 2, seed=1).eval()
        x = torch.rand(4, 3, 16, 16)
        with torch.no_grad():
            whole = net(x)
            single = net(x[1:2])
        torch.testing.assert_close(whole[1:2], single, atol=1e-5, rtol=1e-5)

    def test_seeded_init(self):
        a = build_backbone("small_cnn", 4, 2, seed=3)
        b = build_backbone("small_cnn", 4, 2, seed=3)
        c = build_backbone("small_cnn", 4, 2, seed=4)
        for pa, pb in zip(a.parameters(), b.parameters()):
            torch.testing.assert_close(pa, pb)
        assert any(not torch.equal(pa, pc)
                   for pa, pc in zip(a.parameters(), c.parameters()))

    def test_registry(self):
        with pytest.raises(ValueError, match="unknown backbone"):
            build_backbone("resnet152", 4, 2, seed=0)
        register_backbone("for_test", lambda c, n, s: SmallCnn(c, n))
        try:
            with pytest.raises(ValueError, match="already registered"):
                register_backbone("for_test", lambda c, n, s: SmallCnn(c, n))
            assert build_backbone("for_test", 4, 2, 0)(
                torch.rand(1, 3, 16, 16)).shape == (1, 2)
        finally:
            BACKBONES.pop("for_test")


class TestClassifierConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="epochs"):
            ClassifierConfig(epochs=0)
        with pytest.raises(ValueError, match="learning_rate"):
            ClassifierConfig(learning_rate=0.0)

    def test_baseline_preset(self):
        cfg = ClassifierConfig.baseline()
        assert cfg.epochs == 150 and cfg.augment is True
        assert ClassifierConfig.baseline(epochs=3).epochs == 3


class TestPatchClassifier:
    def test_sklearn_params_contract(self):
        est = quick_classifier(epochs=9)
        assert est.get_params()["epochs"] == 9
        assert clone(est).get_params() == est.get_params()
        est.set_params(seed=3)
        assert est.seed == 3

    def test_learns_separable_data(self):
        X, y = toy_data()
        clf = quick_classifier().fit(X, y)
        X_new, y_new = toy_data(seed=99)
        proba = clf.predict_proba(X_new)
        assert proba.shape == (len(X_new), 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-6)
        assert clf.score(X_new, y_new) == 1.0
        np.testing.assert_array_equal(clf.predict(X_new),
                                      (proba[:, 1] >= 0.5).astype(int))
        assert [row["epoch"] for row in clf.history_] == list(range(1, 7))
        assert clf.history_[-1]["accuracy"] >= clf.history_[0]["accuracy"]

    def test_seeded_fit_reproducible(self):
        X, y = toy_data(n=16)
        p1 = quick_classifier(epochs=2, augment=True).fit(X, y).predict_proba(X)
        p2 = quick_classifier(epochs=2, augment=True).fit(X, y).predict_proba(X)
        np.testing.assert_array_equal(p1, p2)

    def test_predictions_batch_independent(self):
        X, y = toy_data(n=16)
        clf = quick_classifier(epochs=1).fit(X, y)
        whole = clf.predict_proba(X)
        np.testing.assert_allclose(whole[3], clf.predict_proba(X[3:4])[0],
                                   atol=1e-5)

    def test_fit_validation(self):
        X, y = toy_data(n=8)
        with pytest.raises(ValueError, match="single class"):
            quick_classifier().fit(X, np.zeros(8, dtype=int))
        with pytest.raises(ValueError, match="length mismatch"):
            quick_classifier().fit(X, y[:4])
        with pytest.raises(RuntimeError, match="not fitted"):
            quick_classifier().predict(X)

    def test_fit_stream_endless(self):
        X, y = toy_data(n=20)

        def endless():
            for i in itertools.count():
                j = i % len(X)
                yield X[j], y[j]

        clf = quick_classifier(batch_size=8)
        clf.fit_stream(endless(), epochs=3, steps_per_epoch=5)
        assert len(clf.history_) == 3
        assert clf.score(*toy_data(n=10, seed=5)) == 1.0

    def test_fit_stream_exhaustion_rejected(self):
        X, y = toy_data(n=4)
        stream = iter(list(zip(X, y)))
        with pytest.raises(ValueError, match="exhausted"):
            quick_classifier(batch_size=4).fit_stream(stream, epochs=1,
                                                      steps_per_epoch=5)

    def test_save_load_round_trip(self, tmp_path):
        X, y = toy_data(n=16)
        aug = AugmentParams(hue_amplitude=0.0, p_noise=0.0)
        clf = quick_classifier(epochs=1, augment=aug).fit(X, y)
        clf.save(tmp_path / "clf")
        loaded = PatchClassifier.load(tmp_path / "clf")
        np.testing.assert_array_equal(loaded.predict_proba(X),
                                      clf.predict_proba(X))
        assert loaded.history_ == clf.history_
        assert isinstance(loaded.augment, AugmentParams)
        assert loaded.augment.to_dict() == aug.to_dict()
        assert loaded.base_channels == clf.base_channels

    def test_history_csv(self, tmp_path):
        X, y = toy_data(n=16)
        clf = quick_classifier(epochs=2).fit(X, y)
        clf.write_history_csv(tmp_path / "hist.csv")
        with open(tmp_path / "hist.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["epoch", "loss", "accuracy"]
        assert len(rows) == 3
        assert rows[1][0] == "1"
        float(rows[1][1]), float(rows[1][2])  # formatted as numbers


class TestTrainOnManifest:
    def test_trains_from_manifest(self, tmp_path):
        from stainshift.datakit import generate_center

        manifest = generate_center(tmp_path, "TC", n_slides=2,
                                   patches_per_slide=8, seed=4, size=16)
        cfg = ClassifierConfig(base_channels=4, image_size=16, epochs=1,
                               batch_size=8, augment=False)
        clf = train_on_manifest(manifest, cfg, seed=1)
        X = np.zeros((2, 16, 16, 3), dtype=np.float32)
        assert clf.predict_proba(X).shape == (2, 2)
        np.testing.assert_array_equal(clf.classes_, [0, 1])
