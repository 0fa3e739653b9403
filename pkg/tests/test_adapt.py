"""Adaptation protocols: plans, per-protocol behavior, and UDA rotations."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from stainshift.adapt import (
    DEFAULT_AUGMENT_PROBABILITY,
    UDA_ROTATIONS,
    AdaptationPlan,
    mds1_predict,
    mds2_train,
    run_plan,
    run_uda_rotations,
    uda_rotation_plans,
    uda_stream,
)
from stainshift.classifier import ClassifierConfig, PatchClassifier
from stainshift.metrics import EvalReport
from stainshift.translator import TranslatorConfig, TranslatorPair

TINY_T = TranslatorConfig(image_size=16, base_channels=4, n_residual_blocks=1,
                          batch_size=2, steps_per_epoch=2)
TINY_C = ClassifierConfig(base_channels=4, image_size=16, epochs=1,
                          batch_size=8, augment=False)


def domain(seed: int, n: int = 16):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = np.empty((n, 16, 16, 3), dtype=np.float32)
    for i, label in enumerate(y):
        X[i] = (0.7 if label else 0.0) + 0.3 * rng.random((16, 16, 3))
    return X.astype(np.float32), y.astype(np.int64)


def quick_baseline(X, y, seed=0) -> PatchClassifier:
    return PatchClassifier(base_channels=4, image_size=16, epochs=2,
                           batch_size=8, augment=False, seed=seed).fit(X, y)


def make_plan(**overrides) -> AdaptationPlan:
    fields = dict(protocol="MDS1", source_center="A", target_centers=["B"],
                  translator_checkpoints={"B": TranslatorPair(TINY_T, seed=0)})
    fields.update(overrides)
    return AdaptationPlan(**fields)


class TestAdaptationPlan:
    def test_valid(self):
        plan = make_plan()
        assert plan.augment_probability == DEFAULT_AUGMENT_PROBABILITY

    def test_unknown_protocol(self):
        with pytest.raises(ValueError, match="protocol"):
            make_plan(protocol="MDS3")

    def test_mds_takes_single_target(self):
        pair = TranslatorPair(TINY_T, seed=0)
        with pytest.raises(ValueError, match="exactly one target"):
            make_plan(target_centers=["B", "C"],
                      translator_checkpoints={"B": pair, "C": pair})

    def test_uda_needs_targets(self):
        with pytest.raises(ValueError, match="at least one"):
            make_plan(protocol="UDA", target_centers=[],
                      translator_checkpoints={})

    def test_source_cannot_be_target(self):
        with pytest.raises(ValueError, match="source center"):
            make_plan(source_center="B")

    def test_every_target_needs_a_translator(self):
        with pytest.raises(ValueError, match="no translator checkpoint"):
            make_plan(translator_checkpoints={})

    def test_augment_probability_bounds(self):
        with pytest.raises(ValueError, match="augment_probability"):
            make_plan(augment_probability=1.5)

    def test_save_load_round_trip(self, tmp_path):
        plan = make_plan(translator_checkpoints={"B": "/ckpts/b"},
                         augment_probability=0.25)
        plan.save(tmp_path / "plan.json")
        loaded = AdaptationPlan.load(tmp_path / "plan.json")
        assert loaded.to_dict() == plan.to_dict()
        assert loaded.hash == plan.hash

    def test_hash_tracks_content(self):
        a = make_plan(translator_checkpoints={"B": "/ckpts/b"})
        b = make_plan(translator_checkpoints={"B": "/ckpts/b"},
                      augment_probability=0.9)
        assert a.hash != b.hash


class TestMds1:
    def test_scores_translated_patches(self):
        X, y = domain(0)
        baseline = quick_baseline(X, y)
        pair = TranslatorPair(TINY_T, seed=1)
        XB, _ = domain(1)
        got = mds1_predict(baseline, pair, XB)
        want = baseline.predict_proba(
            pair.translate(XB, direction="b_to_a"))
        np.testing.assert_array_equal(got, want)


class TestMds2:
    def test_trains_on_translated_source(self):
        X, y = domain(0)
        pair = TranslatorPair(TINY_T, seed=1)
        clf = mds2_train(TINY_C, pair, (X, y), seed=3)
        manual = PatchClassifier(
            base_channels=4, image_size=16, epochs=1, batch_size=8,
            augment=False, seed=3,
        ).fit(pair.translate(X, direction="a_to_b"), y)
        probe, _ = domain(9)
        np.testing.assert_array_equal(clf.predict_proba(probe),
                                      manual.predict_proba(probe))

    def test_accepts_manifest(self, tmp_path):
        from stainshift.datakit import generate_center

        manifest = generate_center(tmp_path, "S", 2, 8, seed=5, size=16)
        pair = TranslatorPair(TINY_T, seed=0)
        clf = mds2_train(TINY_C, pair, manifest, seed=0)
        assert hasattr(clf, "net_")


class TestUdaStream:
    def test_zero_probability_passes_source_through(self):
        X, y = domain(0, n=8)
        stream = uda_stream((X, y), {}, 0.0, np.random.default_rng(0),
                            chunk_size=4)
        for img, label in itertools.islice(stream, 10):
            matches = [i for i in range(len(X))
                       if np.array_equal(img, X[i])]
            assert matches, "yielded image must be an untouched source patch"
            assert label == y[matches[0]]

    def test_full_probability_yields_translations(self):
        X, y = domain(0, n=8)
        pair = TranslatorPair(TINY_T, seed=2)
        translated = pair.translate(X, direction="a_to_b")
        stream = uda_stream((X, y), {"B": pair}, 1.0,
                            np.random.default_rng(1), chunk_size=4)
        for img, label in itertools.islice(stream, 10):
            matches = [i for i in range(len(X))
                       if np.allclose(img, translated[i], atol=1e-5)]
            assert matches, "yielded image must be a translated source patch"
            assert label == y[matches[0]]

    def test_validation(self):
        X, y = domain(0, n=4)
        with pytest.raises(ValueError, match="p_translate"):
            next(uda_stream((X, y), {}, 1.5, np.random.default_rng(0)))
        with pytest.raises(ValueError, match="at least one translator"):
            next(uda_stream((X, y), {}, 0.5, np.random.default_rng(0)))


class TestUdaRotationPlans:
    def test_three_held_one_out_rotations(self):
        ckpts = {c: f"/ckpts/{c}" for c in ("B", "C", "D")}
        plans = uda_rotation_plans("A", ["B", "C", "D"], ckpts)
        assert len(plans) == 3
        seen_held_out = set()
        for (plan, held_out), (i, j, k) in zip(plans, UDA_ROTATIONS):
            others = ["B", "C", "D"]
            assert plan.protocol == "UDA"
            assert plan.target_centers == [others[i], others[j]]
            assert held_out == others[k]
            assert held_out not in plan.target_centers
            assert set(plan.translator_checkpoints) == set(plan.target_centers)
            seen_held_out.add(held_out)
        assert len(seen_held_out) == 3  # every center held out once

    def test_requires_exactly_three_others(self):
        with pytest.raises(ValueError, match="exactly 3"):
            uda_rotation_plans("A", ["B", "C"], {})


def tiny_datasets(extra_center: bool = False):
    XA, yA = domain(0)
    XB, yB = domain(1)
    datasets = {
        "A": {"train": (XA, yA), "test": domain(10, n=8)},
        "B": {"test": (XB, yB)},
    }
    if extra_center:
        datasets["C"] = {"test": domain(11, n=8)}
    return datasets


class TestRunPlan:
    def test_mds1_report_covers_source_and_target(self):
        report = run_plan(make_plan(), tiny_datasets(), TINY_C, seed=0)
        assert report.protocol == "MDS1"
        assert sorted(report.per_center) == ["A", "B"]
        for metrics in report.per_center.values():
            assert 0.0 <= metrics.auc <= 1.0
            assert metrics.n_patches > 0

    def test_mds1_uses_given_baseline(self):
        from stainshift.metrics import evaluate_predictions

        datasets = tiny_datasets()
        XA, yA = datasets["A"]["train"]
        baseline = quick_baseline(XA, yA, seed=4)
        pair = TranslatorPair(TINY_T, seed=0)
        plan = make_plan(translator_checkpoints={"B": pair})
        report = run_plan(plan, datasets, TINY_C, baseline=baseline, seed=0)
        XB, yB = datasets["B"]["test"]
        want = evaluate_predictions(
            yB, mds1_predict(baseline, pair, XB)[:, 1])
        assert report.per_center["B"].auc == want.auc
        assert report.per_center["B"].precision == want.precision

    def test_mds2_evaluates_target_only(self):
        report = run_plan(make_plan(protocol="MDS2"), tiny_datasets(),
                          TINY_C, seed=0)
        assert report.protocol == "MDS2"
        assert sorted(report.per_center) == ["B"]

    def test_uda_evaluates_every_center_with_a_test_set(self):
        plan = make_plan(protocol="UDA")
        report = run_plan(plan, tiny_datasets(extra_center=True), TINY_C,
                          seed=0, uda_epochs=1, uda_steps_per_epoch=2)
        # C was never translated to, but still gets evaluated
        assert sorted(report.per_center) == ["A", "B", "C"]

    def test_missing_center_rejected(self):
        datasets = tiny_datasets()
        del datasets["B"]
        with pytest.raises(ValueError, match="no datasets given"):
            run_plan(make_plan(), datasets, TINY_C)

    def test_missing_split_rejected(self):
        datasets = tiny_datasets()
        datasets["A"] = {"test": datasets["A"]["test"]}
        with pytest.raises(ValueError, match="has no 'train'"):
            run_plan(make_plan(), datasets, TINY_C)

    def test_missing_checkpoint_path_rejected(self):
        plan = make_plan(translator_checkpoints={"B": "/nonexistent/ckpt"})
        with pytest.raises(FileNotFoundError, match="translator checkpoint"):
            run_plan(plan, tiny_datasets(), TINY_C)

    def test_report_files_written(self, tmp_path):
        run_plan(make_plan(), tiny_datasets(), TINY_C, seed=0,
                 out_dir=tmp_path)
        assert (tmp_path / "report.json").is_file()
        assert (tmp_path / "report.csv").is_file()
        loaded = EvalReport.load(tmp_path / "report.json")
        assert loaded.protocol == "MDS1"

    def test_slide_level_metrics_from_manifests(self, tmp_path):
        from stainshift.datakit import generate_center, split_by_case

        source = generate_center(tmp_path / "a", "A", 4, 6, seed=7, size=16)
        target = generate_center(tmp_path / "b", "B", 4, 6, seed=8, size=16)
        tr_a, te_a = split_by_case(source, 0.5, seed=0)
        _, te_b = split_by_case(target, 0.5, seed=0)
        datasets = {"A": {"train": tr_a, "test": te_a},
                    "B": {"test": te_b}}
        report = run_plan(make_plan(), datasets, TINY_C, seed=0)
        assert set(report.slide_level) == {"A", "B"}
        assert report.slide_level["B"].n_slides == len(te_b.slide_ids())


class TestRunUdaRotations:
    def test_three_reports_tagged_with_held_out_center(self):
        pairs = {c: TranslatorPair(TINY_T, domain_a="A", domain_b=c, seed=i)
                 for i, c in enumerate(("B", "C", "D"))}
        datasets = {
            "A": {"train": domain(0), "test": domain(1, n=8)},
            "B": {"test": domain(2, n=8)},
            "C": {"test": domain(3, n=8)},
            "D": {"test": domain(4, n=8)},
        }
        results = run_uda_rotations("A", ["B", "C", "D"], pairs, datasets,
                                    TINY_C, seed=0, uda_epochs=1,
                                    uda_steps_per_epoch=2)
        assert [held for held, _ in results] == ["D", "C", "B"]
        for held_out, report in results:
            assert report.protocol.startswith("UDA(")
            assert report.protocol.endswith(f"|{held_out})")
            assert held_out in report.per_center
