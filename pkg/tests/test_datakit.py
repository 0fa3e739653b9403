"""Dataset records, manifest operations, and the synthetic patch generator."""

from __future__ import annotations

import csv
import dataclasses

import numpy as np
import pytest

from stainshift.datakit import (
    DatasetManifest,
    PatchRecord,
    SynthStainParams,
    balance_labels,
    build_manifest,
    generate_center,
    load_image,
    load_images,
    read_label_map,
    sample_patches,
    split_by_case,
    subsample_slides,
    synth_patch,
    write_label_map,
)
from stainshift.datakit.records import relocate
from stainshift.datakit.synth import (
    BACKGROUND_HSV,
    DISTRACTOR_DENSITY,
    DISTRACTOR_HSV,
    IC_DENSITY,
    IC_DENSITY_THRESHOLD,
    NUCLEUS_HSV,
    REST_DENSITY,
    _slide_params,
    base_texture,
    density_label,
    save_png,
)
from stainshift.stainstats import rgb_to_hsv


def make_record(i: int = 0, **overrides) -> PatchRecord:
    fields = dict(patch_id=f"p{i}", case_id=f"c{i % 3}", slide_id=f"s{i % 5}",
                  label="IC" if i % 2 else "REST", image_path=f"images/p{i}.png",
                  width=32, height=32)
    fields.update(overrides)
    return PatchRecord(**fields)


class TestPatchRecord:
    def test_valid_record(self):
        rec = make_record(1)
        assert rec.label_index == 1
        assert make_record(2).label_index == 0

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            make_record(label="TUMOR")

    def test_rejects_empty_ids(self):
        with pytest.raises(ValueError, match="non-empty"):
            make_record(patch_id="")

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            make_record(width=32, height=64)

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            make_record().label = "IC"


class TestDatasetManifest:
    def test_duplicate_patch_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate patch ids"):
            DatasetManifest(center_id="C", records=[make_record(1), make_record(1)])

    def test_summaries(self):
        m = DatasetManifest(center_id="C", records=[make_record(i) for i in range(6)])
        assert len(m) == 6
        assert m.case_ids() == ["c0", "c1", "c2"]
        assert m.slide_ids() == ["s0", "s1", "s2", "s3", "s4"]
        assert m.label_counts() == {"REST": 3, "IC": 3}

    def test_round_trip_preserves_everything(self, tmp_path):
        m = DatasetManifest(center_id="C", records=[make_record(i) for i in range(4)],
                            seed=9)
        path = tmp_path / "manifest.json"
        m.save(path)
        loaded = DatasetManifest.load(path)
        assert loaded.center_id == "C"
        assert loaded.seed == 9
        assert loaded.split_tag == "unsplit"
        assert len(loaded) == 4
        got = {r.patch_id: (r.case_id, r.slide_id, r.label, r.width)
               for r in loaded}
        want = {r.patch_id: (r.case_id, r.slide_id, r.label, r.width) for r in m}
        assert got == want

    def test_save_rewrites_relative_paths_against_manifest_dir(self, tmp_path):
        # an image that exists relative to the cwd keeps working after the
        # manifest is saved into an unrelated directory
        img_dir = tmp_path / "data" / "images"
        img_dir.mkdir(parents=True)
        save_png(np.zeros((8, 8, 3), dtype=np.float32), img_dir / "p0.png")
        rec = make_record(0, image_path=str(img_dir / "p0.png"), width=8, height=8)
        m = DatasetManifest(center_id="C", records=[rec])
        elsewhere = tmp_path / "runs" / "manifests" / "m.json"
        m.save(elsewhere)
        loaded = DatasetManifest.load(elsewhere)
        assert load_image(loaded.records[0].image_path).shape == (8, 8, 3)

    def test_bad_split_tag_rejected(self):
        with pytest.raises(ValueError, match="split_tag"):
            DatasetManifest(center_id="C", records=[], split_tag="validation")


class TestLabelMap:
    def test_write_read_round_trip(self, tmp_path):
        records = [make_record(i) for i in range(5)]
        path = tmp_path / "labels.csv"
        write_label_map(path, records)
        lm = read_label_map(path)
        assert not lm.row_errors
        assert lm.rows["p3"] == ("c0", "s3", "IC")

    def test_collects_row_errors_without_raising(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text(
            "patch_id,case_id,slide_id,label\n"
            "p1,c1,s1,IC\n"
            "p2,c1,s1\n"            # wrong arity
            "p3,,s1,REST\n"          # empty field
            "p4,c1,s1,WEIRD\n"       # unknown label
            "p1,c9,s9,REST\n"        # duplicate id
        )
        lm = read_label_map(path)
        assert set(lm.rows) == {"p1"}
        assert len(lm.row_errors) == 4
        assert any("4 fields" in e for e in lm.row_errors)
        assert any("empty identifier" in e for e in lm.row_errors)
        assert any("WEIRD" in e for e in lm.row_errors)
        assert any("duplicate" in e for e in lm.row_errors)

    def test_bad_header_fatal(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,case,slide,label\n")
        with pytest.raises(ValueError, match="header"):
            read_label_map(path)

    def test_missing_file_fatal(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_label_map(tmp_path / "absent.csv")


class TestBuildManifest:
    def test_joins_images_with_labels(self, tmp_path):
        img_dir = tmp_path / "images"
        for pid in ("p0", "p1", "p2"):
            save_png(np.zeros((8, 8, 3)), img_dir / f"{pid}.png")
        write_label_map(tmp_path / "labels.csv", [
            make_record(0, patch_id="p0"), make_record(1, patch_id="p1"),
            make_record(2, patch_id="p9"),  # no image for this row
        ])
        result = build_manifest(img_dir, "C", tmp_path / "labels.csv")
        assert {r.patch_id for r in result.manifest} == {"p0", "p1"}
        assert result.unmatched_ids == ["p9"]
        assert result.n_skipped == 1  # p2.png has no label row
        assert result.skipped_images[0].endswith("p2.png")
        rec = next(iter(result.manifest))
        assert rec.width == rec.height == 8

    def test_missing_directory_fatal(self, tmp_path):
        write_label_map(tmp_path / "labels.csv", [make_record(0)])
        with pytest.raises(FileNotFoundError, match="image directory"):
            build_manifest(tmp_path / "nowhere", "C", tmp_path / "labels.csv")


def center_fixture(root, n_slides=6, patches_per_slide=4, seed=11, **kw):
    return generate_center(root, "T", n_slides, patches_per_slide, seed=seed,
                           size=16, **kw)


class TestSplitByCase:
    def test_case_disjoint_across_many_seeds(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=10)
        for seed in range(25):
            train, test = split_by_case(m, 0.3, seed=seed)
            assert set(train.case_ids()).isdisjoint(test.case_ids())
            assert len(train) + len(test) == len(m)
            assert train.split_tag == "train" and test.split_tag == "test"
            # no patch lost or duplicated
            ids = sorted(r.patch_id for r in train) + sorted(
                r.patch_id for r in test)
            assert sorted(ids) == sorted(r.patch_id for r in m)

    def test_deterministic(self, tmp_path):
        m = center_fixture(tmp_path)
        a = split_by_case(m, 0.4, seed=5)[1].case_ids()
        b = split_by_case(m, 0.4, seed=5)[1].case_ids()
        assert a == b

    def test_both_sides_nonempty_at_extreme_fractions(self, tmp_path):
        m = center_fixture(tmp_path)
        for fraction in (0.01, 0.99):
            train, test = split_by_case(m, fraction, seed=0)
            assert len(train.case_ids()) >= 1
            assert len(test.case_ids()) >= 1

    def test_already_split_rejected(self, tmp_path):
        m = center_fixture(tmp_path)
        train, _ = split_by_case(m, 0.3, seed=0)
        with pytest.raises(ValueError, match="split_tag"):
            split_by_case(train, 0.3, seed=0)


class TestBalanceAndSubsample:
    def test_balance_labels_equalizes(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=5, patches_per_slide=6,
                           ic_fraction=0.67)
        balanced = balance_labels(m, seed=0)
        counts = balanced.label_counts()
        assert counts["IC"] == counts["REST"]
        assert counts["IC"] == min(m.label_counts().values())

    def test_balance_missing_label_rejected(self, tmp_path):
        m = center_fixture(tmp_path, ic_fraction=1.0)
        with pytest.raises(ValueError, match="REST"):
            balance_labels(m, seed=0)

    def test_subsample_slides_counts(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=8, patches_per_slide=5)
        sub = subsample_slides(m, 3, 12, seed=4)
        assert len(sub.slide_ids()) == 3
        assert len(sub) == 12
        assert set(sub.slide_ids()) <= set(m.slide_ids())

    def test_subsample_shortfall_names_the_gap(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=4, patches_per_slide=3)
        with pytest.raises(ValueError, match="short by 3"):
            subsample_slides(m, 3, 12, seed=0)

    def test_subsample_too_many_slides_rejected(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=4)
        with pytest.raises(ValueError, match="only 4"):
            subsample_slides(m, 5, 4, seed=0)


class TestSynthPatch:
    def test_identity_pipeline_returns_exact_base_texture(self):
        params = SynthStainParams(noise_sigma=0.0, texture_seed=3)
        assert params.is_identity_pipeline
        patch = synth_patch(params, rng_seed=7, size=16, blob_density=0.3)
        from stainshift.util import derive_seed
        rng = np.random.default_rng(derive_seed(3, "patch", 7))
        expected = base_texture(rng, 16, 0.3, 0.0)
        np.testing.assert_array_equal(patch, expected)

    def test_deterministic(self):
        params = SynthStainParams(hue_shift=0.2, texture_seed=1)
        a = synth_patch(params, rng_seed=5, size=16)
        b = synth_patch(params, rng_seed=5, size=16)
        np.testing.assert_array_equal(a, b)
        c = synth_patch(params, rng_seed=6, size=16)
        assert np.abs(a - c).max() > 0.01

    def test_output_contract(self):
        patch = synth_patch(SynthStainParams(), rng_seed=0, size=24)
        assert patch.shape == (24, 24, 3)
        assert patch.dtype == np.float32
        assert patch.min() >= 0.0 and patch.max() <= 1.0

    def test_hue_shift_rotates_dominant_hue(self):
        base = SynthStainParams(noise_sigma=0.0, texture_seed=2)
        shifted = SynthStainParams(hue_shift=0.2, noise_sigma=0.0, texture_seed=2)
        p0 = synth_patch(base, rng_seed=1, size=16, blob_density=0.05)
        p1 = synth_patch(shifted, rng_seed=1, size=16, blob_density=0.05)
        h0 = rgb_to_hsv(p0.astype(np.float64))[..., 0]
        h1 = rgb_to_hsv(p1.astype(np.float64))[..., 0]
        diff = (h1 - h0) % 1.0
        # background dominates a sparse patch; its hue moves by the shift
        assert np.median(diff) == pytest.approx(0.2, abs=0.02)

    def test_nucleus_hue_offset_moves_only_blob_hue(self):
        plain = SynthStainParams(noise_sigma=0.0, texture_seed=4)
        moved = SynthStainParams(noise_sigma=0.0, texture_seed=4,
                                 nucleus_hue_offset=0.2)
        p0 = synth_patch(plain, rng_seed=2, size=32, blob_density=0.3)
        p1 = synth_patch(moved, rng_seed=2, size=32, blob_density=0.3)
        h0 = rgb_to_hsv(p0.astype(np.float64))[..., 0]
        h1 = rgb_to_hsv(p1.astype(np.float64))[..., 0]
        nucleus_pixels = np.abs(h0 - NUCLEUS_HSV[0]) < 0.02
        background_pixels = np.abs(h0 - BACKGROUND_HSV[0]) < 0.02
        assert nucleus_pixels.sum() > 20
        assert background_pixels.sum() > 20
        moved_amount = (h1 - h0 + 0.5) % 1.0 - 0.5  # signed circular difference
        assert np.median(moved_amount[nucleus_pixels]) == pytest.approx(
            0.2, abs=0.02)
        assert np.median(moved_amount[background_pixels]) == pytest.approx(
            0.0, abs=0.02)

    def test_blob_area_tracks_density_knob(self):
        # with the distractor budget disabled, more density = more blob area
        rng_lo = np.random.default_rng(10)
        rng_hi = np.random.default_rng(10)
        lo = base_texture(rng_lo, 32, 0.05, distractor_density=0.0)
        hi = base_texture(rng_hi, 32, 0.35, distractor_density=0.0)
        h_lo = rgb_to_hsv(lo.astype(np.float64))[..., 0]
        h_hi = rgb_to_hsv(hi.astype(np.float64))[..., 0]
        near_nucleus_lo = (np.abs(h_lo - NUCLEUS_HSV[0]) < 0.1).mean()
        near_nucleus_hi = (np.abs(h_hi - NUCLEUS_HSV[0]) < 0.1).mean()
        assert near_nucleus_hi > near_nucleus_lo + 0.1

    def test_distractor_blobs_present_on_average(self):
        rng = np.random.default_rng(11)
        fractions = []
        for _ in range(8):
            patch = base_texture(rng, 32, REST_DENSITY[0])
            hues = rgb_to_hsv(patch.astype(np.float64))[..., 0]
            fractions.append((np.abs(hues - DISTRACTOR_HSV[0]) < 0.1).mean())
        assert np.mean(fractions) > 0.08

    def test_density_label_threshold(self):
        assert density_label(IC_DENSITY_THRESHOLD) == "IC"
        assert density_label(IC_DENSITY_THRESHOLD - 1e-9) == "REST"
        assert density_label(REST_DENSITY[1]) == "REST"
        assert density_label(IC_DENSITY[0]) == "IC"

    def test_density_geometry(self):
        # the label bands sit either side of the threshold with a gap, and
        # the label-independent distractor range spans that gap, so density
        # alone cannot identify a blob population's role
        assert REST_DENSITY[1] < IC_DENSITY_THRESHOLD <= IC_DENSITY[0]
        assert DISTRACTOR_DENSITY[0] <= REST_DENSITY[1]
        assert DISTRACTOR_DENSITY[1] >= IC_DENSITY[0]

    def test_sample_patches_contract(self):
        X, y = sample_patches(SynthStainParams(), n=10, seed=3, size=16,
                              ic_fraction=0.3)
        assert X.shape == (10, 16, 16, 3)
        assert y.sum() == 3
        X2, y2 = sample_patches(SynthStainParams(), n=10, seed=3, size=16,
                                ic_fraction=0.3)
        np.testing.assert_array_equal(X, X2)
        np.testing.assert_array_equal(y, y2)


@pytest.fixture(scope="module")
def center(tmp_path_factory):
    root = tmp_path_factory.mktemp("gc")
    manifest = generate_center(root, "C1", n_slides=4, patches_per_slide=6,
                               seed=21, size=16, slides_per_case=2,
                               ic_fraction=0.5)
    return root, manifest


class TestGenerateCenter:
    def test_files_and_manifest_agree(self, center):
        root, manifest = center
        assert len(manifest) == 24
        assert len(manifest.slide_ids()) == 4
        assert len(manifest.case_ids()) == 2
        for rec in manifest:
            img = load_image(rec.image_path)
            assert img.shape == (16, 16, 3)
        label_map = read_label_map(root / "C1" / "label_map.csv")
        assert set(label_map.rows) == {r.patch_id for r in manifest}

    def test_reload_from_disk_matches(self, center):
        root, manifest = center
        loaded = relocate(DatasetManifest.load(root / "C1" / "manifest.json"),
                          root / "C1")
        assert {r.patch_id for r in loaded} == {r.patch_id for r in manifest}

    def test_labels_balanced_as_requested(self, center):
        _, manifest = center
        counts = manifest.label_counts()
        assert counts["IC"] == counts["REST"] == 12

    def test_per_slide_stain_jitter_spreads_slide_hues(self, tmp_path):
        from stainshift.stainstats import circular_hue_mean, circular_hue_std

        def slide_hue_spread(manifest) -> float:
            X, _ = load_images(manifest)
            by_slide: dict[str, list[float]] = {}
            for rec, img in zip(manifest, X):
                hue = circular_hue_mean(
                    rgb_to_hsv(img.astype(np.float64))[..., 0].ravel())
                by_slide.setdefault(rec.slide_id, []).append(hue)
            means = np.array([circular_hue_mean(np.array(v))
                              for v in by_slide.values()])
            return circular_hue_std(means)

        jittered = generate_center(tmp_path, "CJ", 6, 12, seed=5, size=16,
                                   slide_hue_jitter=0.25)
        flat = generate_center(tmp_path, "CF", 6, 12, seed=5, size=16,
                               slide_hue_jitter=0.0)
        assert slide_hue_spread(jittered) > 2.0 * slide_hue_spread(flat)

    def test_discrete_hue_levels_draw_from_level_grid(self):
        base = SynthStainParams(hue_shift=0.2, saturation_scale=0.9)
        rng = np.random.default_rng(3)
        expected = {(0.2 - 0.15) % 1.0, 0.2, (0.2 + 0.15) % 1.0}
        seen = set()
        for _ in range(60):
            p = _slide_params(base, 0.15, rng, hue_levels=3)
            assert any(abs(p.hue_shift - e) < 1e-12 for e in expected)
            assert p.saturation_scale == base.saturation_scale
            assert p.value_scale == base.value_scale
            seen.add(round(p.hue_shift, 6))
        assert len(seen) == 3

    def test_discrete_hue_levels_cluster_slide_hues(self, tmp_path):
        from stainshift.stainstats import circular_hue_mean

        manifest = generate_center(tmp_path, "CL", 15, 6, seed=11, size=16,
                                   slide_hue_jitter=0.15, slide_hue_levels=3)
        X, _ = load_images(manifest)
        by_slide: dict[str, list[float]] = {}
        for rec, img in zip(manifest, X):
            hue = circular_hue_mean(
                rgb_to_hsv(img.astype(np.float64))[..., 0].ravel())
            by_slide.setdefault(rec.slide_id, []).append(hue)
        slide_hues = [circular_hue_mean(np.array(v))
                      for v in by_slide.values()]
        anchor = slide_hues[0]
        offsets = sorted((h - anchor + 0.5) % 1.0 - 0.5 for h in slide_hues)
        clusters = [[offsets[0]]]
        for m in offsets[1:]:
            if m - clusters[-1][-1] > 0.05:
                clusters.append([])
            clusters[-1].append(m)
        assert len(clusters) == 3
        assert all(max(c) - min(c) < 0.08 for c in clusters)

    def test_single_hue_level_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="slide_hue_levels"):
            generate_center(tmp_path, "CB", 2, 2, seed=1, size=16,
                            slide_hue_jitter=0.1, slide_hue_levels=1)

    def test_regeneration_bit_identical(self, tmp_path):
        m1 = generate_center(tmp_path / "a", "C", 2, 3, seed=8, size=16)
        m2 = generate_center(tmp_path / "b", "C", 2, 3, seed=8, size=16)
        for r1, r2 in zip(m1, m2):
            assert r1.patch_id == r2.patch_id
            with open(r1.image_path, "rb") as f1, open(r2.image_path, "rb") as f2:
                assert f1.read() == f2.read()


class TestLoadImages:
    def test_images_and_labels_align(self, tmp_path):
        m = center_fixture(tmp_path, n_slides=2, patches_per_slide=4)
        X, y = load_images(m)
        assert X.shape == (8, 16, 16, 3)
        assert X.dtype == np.float32
        want = np.array([r.label_index for r in m])
        np.testing.assert_array_equal(y, want)
