"""Command-line experiment orchestration.

Every subcommand reads one JSON config, validates it (all referenced paths
must resolve), and writes its outputs under runs/{run_id}/ with this
layout:

    runs/{run_id}/config.json     frozen resolved config + input hashes
    runs/{run_id}/manifests/      dataset manifests produced or copied
    runs/{run_id}/checkpoints/    model weights
    runs/{run_id}/logs/           histories, timings, run log
    runs/{run_id}/reports/        metrics (JSON + CSV)

The runs root defaults to ./runs and can be overridden with the
STAINSHIFT_RUNS environment variable or --runs-root. Reruns with identical
inputs and seeds reproduce metrics files byte for byte (wall-clock timings
are kept out of reports and live under logs/). Exit codes: 0 success,
1 invalid config or failed run, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from stainshift.adapt.protocols import (
    DEFAULT_AUGMENT_PROBABILITY,
    AdaptationPlan,
    run_plan,
    run_uda_rotations,
)
from stainshift.classifier.train import ClassifierConfig, PatchClassifier, train_on_manifest
from stainshift.datakit.ops import build_manifest, load_images, split_by_case, subsample_slides
from stainshift.datakit.records import DatasetManifest
from stainshift.datakit.synth import SynthStainParams, generate_center
from stainshift.fidmon.frechet import DEFAULT_FID_SAMPLES, compute_fid
from stainshift.fidmon.monitor import DEFAULT_PATIENCE, FidMonitor
from stainshift.metrics.report import EvalReport, combined_csv, mds1_comparison, slide_csv
from stainshift.metrics.slides import IC_FRACTION_THRESHOLD, slide_level
from stainshift.translator.networks import TranslatorConfig
from stainshift.translator.training import TranslatorPair, train_translator
from stainshift.util import atomic_write_text, derive_seed, sha256_file, write_json

log = logging.getLogger("stainshift")

RUN_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
RUN_SUBDIRS = ("manifests", "checkpoints", "logs", "reports")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def runs_root(override: str | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("STAINSHIFT_RUNS", "runs"))


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            config = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {path}: {err}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"config must be a JSON object: {path}")
    return config


def require(config: dict, key: str, kind=None):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    value = config[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(
            f"config key {key!r} must be {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def resolve_path(config: dict, name: str) -> Path:
    paths = config.get("paths", {})
    if name not in paths:
        raise ConfigError(f"config paths section is missing {name!r}")
    path = Path(paths[name])
    if not path.exists():
        raise ConfigError(f"path {name!r} does not resolve: {path}")
    return path


class RunDir:
    """Filesystem layout of one run."""

    def __init__(self, root: Path, run_id: str):
        if not RUN_ID_PATTERN.match(run_id):
            raise ConfigError(
                f"run_id must be filesystem-safe ([A-Za-z0-9._-]), got {run_id!r}"
            )
        self.run_id = run_id
        self.path = root / run_id
        for sub in RUN_SUBDIRS:
            (self.path / sub).mkdir(parents=True, exist_ok=True)
        self.manifests = self.path / "manifests"
        self.checkpoints = self.path / "checkpoints"
        self.logs = self.path / "logs"
        self.reports = self.path / "reports"

    def freeze_config(self, config: dict, input_paths: dict[str, Path]) -> None:
        frozen = dict(config)
        frozen["input_hashes"] = {
            name: sha256_file(path)
            for name, path in sorted(input_paths.items())
            if path.is_file()
        }
        write_json(self.path / "config.json", frozen)

    def attach_log(self) -> None:
        handler = logging.FileHandler(self.logs / "run.log")
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(handler)


def start_run(config: dict, args) -> RunDir:
    run_id = require(config, "run_id", str)
    run = RunDir(runs_root(getattr(args, "runs_root", None)), run_id)
    run.attach_log()
    return run


def _seed(config: dict) -> int:
    return int(config.get("seed", 0))


def _manifest_inputs(config: dict, names: list[str]) -> dict[str, Path]:
    return {name: resolve_path(config, name) for name in names}


def _translator_config(config: dict) -> TranslatorConfig:
    try:
        return TranslatorConfig(**config.get("translator", {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid translator settings: {err}") from None


def _classifier_config(config: dict) -> ClassifierConfig:
    try:
        return ClassifierConfig(**config.get("classifier", {}))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid classifier settings: {err}") from None


def _monitor(config: dict) -> FidMonitor | None:
    settings = config.get("monitor", {})
    if not settings.get("enabled", True):
        return None
    return FidMonitor(patience=int(settings.get("patience", DEFAULT_PATIENCE)))


def _fid_samples(config: dict) -> int | None:
    settings = config.get("monitor", {})
    value = settings.get("fid_samples")
    return None if value is None else int(value)


# --------------------------------------------------------------------------
# subcommands


def cmd_synth_data(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    seed = _seed(config)
    out_dir = Path(require(config, "out_dir", str))
    patch_size = int(config.get("patch_size", 64))
    centers = require(config, "centers", list)
    if not centers:
        raise ConfigError("centers list is empty")
    run.freeze_config(config, {})
    for entry in centers:
        center_id = require(entry, "center_id", str)
        params = SynthStainParams(
            hue_shift=float(entry.get("hue_shift", 0.0)),
            saturation_scale=float(entry.get("saturation_scale", 1.0)),
            value_scale=float(entry.get("value_scale", 1.0)),
            noise_sigma=float(entry.get("noise_sigma", 0.01)),
            texture_seed=derive_seed(seed, "texture", center_id),
        )
        manifest = generate_center(
            out_dir, center_id,
            n_slides=int(require(entry, "n_slides", int)),
            patches_per_slide=int(require(entry, "patches_per_slide", int)),
            seed=derive_seed(seed, "synth", center_id),
            size=patch_size,
            base_params=params,
            slide_hue_jitter=float(entry.get("slide_hue_jitter", 0.0)),
            slide_hue_levels=int(entry.get("slide_hue_levels", 0)),
            ic_fraction=float(entry.get("ic_fraction", 0.5)),
            slides_per_case=int(entry.get("slides_per_case", 2)),
        )
        manifest.save(run.manifests / f"{center_id}.json")
        log.info("center %s: %d patches under %s", center_id, len(manifest),
                 out_dir / center_id)
    return 0


def cmd_build_manifest(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["image_dir", "label_map"])
    center_id = require(config, "center_id", str)
    run.freeze_config(config, {"label_map": inputs["label_map"]})
    result = build_manifest(inputs["image_dir"], center_id, inputs["label_map"])
    result.manifest.save(run.manifests / "manifest.json")
    write_json(run.reports / "build_report.json", {
        "n_records": len(result.manifest),
        "n_skipped_images": result.n_skipped,
        "skipped_images": result.skipped_images,
        "unmatched_ids": result.unmatched_ids,
        "row_errors": result.row_errors,
    })
    if result.n_skipped:
        log.warning("%d images had no label row", result.n_skipped)
    for err in result.row_errors:
        log.warning("label map: %s", err)
    return 0


def cmd_split(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["manifest"])
    test_fraction = float(config.get("test_fraction", 0.2))
    run.freeze_config(config, inputs)
    manifest = DatasetManifest.load(inputs["manifest"])
    train, test = split_by_case(manifest, test_fraction, _seed(config))
    train.save(run.manifests / "train.json")
    test.save(run.manifests / "test.json")
    log.info("split %d cases: %d train / %d test patches",
             len(manifest.case_ids()), len(train), len(test))
    return 0


def cmd_train_translator(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["domain_a", "domain_b"])
    cfg = _translator_config(config)
    run.freeze_config(config, inputs)
    started = time.monotonic()
    pair, result = train_translator(
        DatasetManifest.load(inputs["domain_a"]),
        DatasetManifest.load(inputs["domain_b"]),
        cfg,
        monitor=_monitor(config),
        max_epochs=int(config.get("max_epochs", 50)),
        seed=_seed(config),
        out_dir=run.checkpoints,
        fid_samples=_fid_samples(config),
        snapshot_epochs=tuple(config.get("snapshot_epochs", ())),
        domain_a_id=config.get("domain_a_id", "A"),
        domain_b_id=config.get("domain_b_id", "B"),
    )
    elapsed = time.monotonic() - started
    for name in ("history.csv", "fid_history.csv"):
        src = run.checkpoints / name
        if src.is_file():
            src.replace(run.logs / name)
    write_json(run.reports / "train_result.json", {
        "stop_epoch": result.stop_epoch,
        "stop_reason": result.stop_reason,
        "best_epoch": result.best_epoch,
        "best_fid": result.best_fid,
        "checkpoints": result.checkpoints,
        "monitor_error": result.monitor_error,
    })
    atomic_write_text(run.logs / "timing.csv",
                      f"stage,seconds\ntrain_translator,{elapsed:.3f}\n")
    log.info("stopped at epoch %d (%s), best epoch %d",
             result.stop_epoch, result.stop_reason, result.best_epoch)
    return 0


def cmd_compute_fid(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["real", "generated"])
    n_samples = int(config.get("n_samples", DEFAULT_FID_SAMPLES))
    run.freeze_config(config, inputs)
    fid = compute_fid(
        DatasetManifest.load(inputs["real"]),
        DatasetManifest.load(inputs["generated"]),
        n_samples=n_samples,
        seed=_seed(config),
    )
    write_json(run.reports / "fid.json",
               {"fid": fid, "n_samples": n_samples})
    log.info("fid = %.6f over %d samples per side", fid, n_samples)
    return 0


def cmd_train_classifier(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["train_manifest"])
    cfg = _classifier_config(config)
    run.freeze_config(config, inputs)
    clf = train_on_manifest(DatasetManifest.load(inputs["train_manifest"]),
                            cfg, seed=_seed(config))
    clf.save(run.checkpoints / "classifier")
    clf.write_history_csv(run.logs / "train_history.csv")
    log.info("final training accuracy %.4f", clf.history_[-1]["accuracy"])
    return 0


def _load_model(path: Path) -> PatchClassifier:
    return PatchClassifier.load(path)


def cmd_run_mds1(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(
        config, ["baseline_model", "translator_checkpoint", "target_test"])
    threshold = float(config.get("threshold", 0.5))
    run.freeze_config(config, {"target_test": inputs["target_test"]})
    baseline = _load_model(inputs["baseline_model"])
    translator = TranslatorPair.load(inputs["translator_checkpoint"])
    target_test = DatasetManifest.load(inputs["target_test"])
    comparison = mds1_comparison(baseline, translator, target_test,
                                 threshold=threshold)
    center = target_test.center_id
    raw = EvalReport(protocol="baseline", config_hash="",
                     per_center={center: comparison["raw"]})
    translated = EvalReport(protocol="MDS1", config_hash="",
                            per_center={center: comparison["translated"]})
    write_json(run.reports / "report.json", {
        "center": center,
        "raw": comparison["raw"].__dict__,
        "translated": comparison["translated"].__dict__,
    })
    combined_csv([raw, translated], run.reports / "report.csv")
    log.info("center %s: raw auc %.4f, translated auc %.4f", center,
             comparison["raw"].auc, comparison["translated"].auc)
    return 0


def cmd_run_mds2(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(
        config, ["translator_checkpoint", "source_train", "target_test"])
    cfg = _classifier_config(config)
    run.freeze_config(config, {k: inputs[k]
                               for k in ("source_train", "target_test")})
    target_test = DatasetManifest.load(inputs["target_test"])
    plan = AdaptationPlan(
        protocol="MDS2",
        source_center=DatasetManifest.load(inputs["source_train"]).center_id,
        target_centers=[target_test.center_id],
        translator_checkpoints={
            target_test.center_id: str(inputs["translator_checkpoint"])
        },
    )
    datasets = {
        plan.source_center: {"train": DatasetManifest.load(inputs["source_train"])},
        target_test.center_id: {"test": target_test},
    }
    report = run_plan(plan, datasets, cfg, seed=_seed(config))
    report.save(run.reports / "report.json")
    report.write_csv(run.reports / "report.csv")
    slide_csv([report], run.reports / "slide_metrics.csv")
    return 0


def cmd_run_uda(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    source_train_path = resolve_path(config, "source_train")
    checkpoints = require(config.get("paths", {}), "translator_checkpoints", dict)
    test_paths = require(config.get("paths", {}), "test_manifests", dict)
    for name, path in {**checkpoints, **test_paths}.items():
        if not Path(path).exists():
            raise ConfigError(f"path for center {name!r} does not resolve: {path}")
    cfg = _classifier_config(config)
    run.freeze_config(config, {"source_train": source_train_path,
                               **{f"test_{c}": Path(p)
                                  for c, p in test_paths.items()}})
    source_train = DatasetManifest.load(source_train_path)
    datasets = {source_train.center_id: {"train": source_train}}
    for center, path in test_paths.items():
        datasets.setdefault(center, {})["test"] = DatasetManifest.load(path)
    plan = AdaptationPlan(
        protocol="UDA",
        source_center=source_train.center_id,
        target_centers=sorted(checkpoints),
        translator_checkpoints={c: str(p) for c, p in checkpoints.items()},
        augment_probability=float(
            config.get("augment_probability", DEFAULT_AUGMENT_PROBABILITY)),
    )
    report = run_plan(
        plan, datasets, cfg, seed=_seed(config),
        uda_epochs=config.get("uda_epochs"),
        uda_steps_per_epoch=int(config.get("uda_steps_per_epoch", 50)),
    )
    report.save(run.reports / "report.json")
    report.write_csv(run.reports / "report.csv")
    slide_csv([report], run.reports / "slide_metrics.csv")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.plan)
    run = start_run(config, args)
    plan_section = require(config, "plan", dict)
    try:
        plan = AdaptationPlan(**plan_section)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid plan: {err}") from None
    datasets_section = require(config, "datasets", dict)
    cfg = _classifier_config(config)

    datasets = {}
    input_paths = {}
    for center, splits in datasets_section.items():
        datasets[center] = {}
        for split, path in splits.items():
            path = Path(path)
            if not path.is_file():
                raise ConfigError(
                    f"dataset path for {center}/{split} does not resolve: {path}"
                )
            datasets[center][split] = DatasetManifest.load(path)
            input_paths[f"{center}_{split}"] = path
    for center, ref in plan.translator_checkpoints.items():
        if not (Path(ref) / "metadata.json").is_file():
            raise ConfigError(
                f"translator checkpoint for center {center!r} does not "
                f"resolve: {ref}"
            )
    run.freeze_config(config, input_paths)

    baseline = None
    if config.get("baseline_model"):
        baseline = _load_model(Path(config["baseline_model"]))
    uda = config.get("uda", {})

    if config.get("rotations"):
        others = config.get("rotation_centers") or sorted(
            c for c in datasets if c != plan.source_center
        )
        results = run_uda_rotations(
            plan.source_center, others, plan.translator_checkpoints,
            datasets, cfg,
            augment_probability=plan.augment_probability,
            seed=_seed(config),
            uda_epochs=uda.get("epochs"),
            uda_steps_per_epoch=int(uda.get("steps_per_epoch", 50)),
        )
        reports = [report for _, report in results]
        write_json(run.reports / "report.json",
                   {"rotations": [{"held_out": held_out, **report.to_dict()}
                                  for held_out, report in results]})
    else:
        report = run_plan(
            plan, datasets, cfg, baseline=baseline, seed=_seed(config),
            uda_epochs=uda.get("epochs"),
            uda_steps_per_epoch=int(uda.get("steps_per_epoch", 50)),
        )
        reports = [report]
        report.save(run.reports / "report.json")
    combined_csv(reports, run.reports / "patch_metrics.csv")
    slide_csv(reports, run.reports / "slide_metrics.csv")
    return 0


def cmd_slide_eval(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["model", "test_manifest"])
    threshold = float(config.get("ic_fraction_threshold",
                                 IC_FRACTION_THRESHOLD))
    run.freeze_config(config, {"test_manifest": inputs["test_manifest"]})
    model = _load_model(inputs["model"])
    manifest = DatasetManifest.load(inputs["test_manifest"])
    X, y = load_images(manifest)
    if config.get("paths", {}).get("translator_checkpoint"):
        translator = TranslatorPair.load(
            resolve_path(config, "translator_checkpoint"))
        X = translator.translate(X, direction=config.get("direction", "b_to_a"))
    preds = model.predict(X)
    result = slide_level([r.slide_id for r in manifest.records], y, preds,
                         threshold)
    write_json(run.reports / "slide_report.json", {
        "center": manifest.center_id,
        "threshold": threshold,
        "precision": result.precision,
        "recall": result.recall,
        "f1": result.f1,
        "n_slides": result.n_slides,
        "slides": [row.__dict__ for row in result.rows],
    })
    rows = ["slide_id,n_patches,true_fraction,pred_fraction,true_label,pred_label"]
    rows += [
        f"{r.slide_id},{r.n_patches},{r.true_fraction:.6f},"
        f"{r.pred_fraction:.6f},{r.true_label},{r.pred_label}"
        for r in result.rows
    ]
    atomic_write_text(run.reports / "slide_metrics.csv", "\n".join(rows) + "\n")
    return 0


def cmd_stain_stats(args) -> int:
    from stainshift.stainstats.variability import (
        hue_variability,
        write_hue_summary_csv,
    )

    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["manifest"])
    slide_counts = [int(x) for x in config.get("slide_counts", [2, 5, 10, 25])]
    patches = int(config.get("patches_per_config", 100))
    seeds = [int(s) for s in config.get("seeds", [_seed(config)])]
    run.freeze_config(config, inputs)
    manifest = DatasetManifest.load(inputs["manifest"])
    summaries = hue_variability(
        manifest, slide_counts, patches, seeds,
        circular=bool(config.get("circular", True)),
        mask_achromatic=bool(config.get("mask_achromatic", False)),
    )
    write_hue_summary_csv(summaries, run.reports / "hue_variability.csv")
    write_json(run.reports / "hue_summary.json", [
        {"center": s.center_id, "n_slides": s.n_slides, "seed": s.seed,
         "hue_std": s.hue_std, "n_patches": s.n_patches}
        for s in summaries
    ])
    return 0


# --------------------------------------------------------------------------
# sweeps


def _slide_sweep_cell(payload: dict) -> dict:
    """One (n_slides, seed) cell of the slide-requirement sweep."""
    target_train = DatasetManifest.load(payload["target_train"])
    subset = subsample_slides(target_train, payload["n_slides"],
                              payload["n_patches"], payload["seed"])
    cfg = TranslatorConfig(**payload["translator"])
    monitor = (FidMonitor(patience=payload["patience"])
               if payload["patience"] else None)
    pair, result = train_translator(
        DatasetManifest.load(payload["source_train"]),
        subset,
        cfg,
        monitor=monitor,
        max_epochs=payload["max_epochs"],
        seed=payload["seed"],
        out_dir=Path(payload["out_dir"]),
        fid_samples=payload["fid_samples"],
    )
    baseline = PatchClassifier.load(payload["baseline_model"])
    comparison = mds1_comparison(
        baseline, pair, DatasetManifest.load(payload["target_test"]))
    return {
        "n_slides": payload["n_slides"],
        "seed": payload["seed"],
        "auc_raw": comparison["raw"].auc,
        "auc_translated": comparison["translated"].auc,
        "best_fid": result.best_fid,
        "stop_epoch": result.stop_epoch,
        "stop_reason": result.stop_reason,
    }


def cmd_slide_requirement_sweep(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(
        config, ["source_train", "target_train", "target_test",
                 "baseline_model"])
    slide_grid = [int(x) for x in config.get("slide_grid", [2, 5, 10, 25, 50, 75])]
    n_seeds = int(config.get("n_seeds", 3))
    n_patches = config.get("n_patches")
    cfg = _translator_config(config)
    run.freeze_config(config, {k: v for k, v in inputs.items()
                               if k != "baseline_model"})
    monitor_cfg = config.get("monitor", {})
    patience = (int(monitor_cfg.get("patience", DEFAULT_PATIENCE))
                if monitor_cfg.get("enabled", True) else 0)

    target_train = DatasetManifest.load(inputs["target_train"])
    per_slide = len(target_train) // max(len(target_train.slide_ids()), 1)
    cells = []
    for n_slides in slide_grid:
        for i in range(n_seeds):
            seed = derive_seed(_seed(config), "sweep", n_slides, i)
            cells.append({
                "n_slides": n_slides,
                "seed": seed,
                "n_patches": int(n_patches) if n_patches else n_slides * per_slide,
                "source_train": str(inputs["source_train"]),
                "target_train": str(inputs["target_train"]),
                "target_test": str(inputs["target_test"]),
                "baseline_model": str(inputs["baseline_model"]),
                "translator": cfg.to_dict(),
                "patience": patience,
                "max_epochs": int(config.get("max_epochs", 20)),
                "fid_samples": _fid_samples(config),
                "out_dir": str(run.checkpoints / f"n{n_slides:03d}_s{i}"),
            })
    started = time.monotonic()
    rows = _run_cells(_slide_sweep_cell, cells, args.parallel)
    elapsed = time.monotonic() - started
    rows.sort(key=lambda r: (r["n_slides"], r["seed"]))
    lines = ["n_slides,seed,auc_raw,auc_translated,best_fid,stop_epoch,stop_reason"]
    for r in rows:
        fid = "" if r["best_fid"] is None else f"{r['best_fid']:.6f}"
        lines.append(
            f"{r['n_slides']},{r['seed']},{r['auc_raw']:.6f},"
            f"{r['auc_translated']:.6f},{fid},{r['stop_epoch']},{r['stop_reason']}"
        )
    atomic_write_text(run.reports / "sweep.csv", "\n".join(lines) + "\n")
    atomic_write_text(run.logs / "timing.csv",
                      f"stage,seconds\nslide_requirement_sweep,{elapsed:.3f}\n")
    return 0


def _patch_sweep_cell(payload: dict) -> dict:
    """One patch-count cell: train with the FID monitor, record the outcome."""
    rng = np.random.default_rng(payload["seed"])
    sides = []
    for key in ("domain_a", "domain_b"):
        manifest = DatasetManifest.load(payload[key])
        if payload["n_patches"] > len(manifest):
            raise ValueError(
                f"{key} has {len(manifest)} patches, fewer than requested "
                f"{payload['n_patches']}"
            )
        picked = rng.choice(len(manifest), size=payload["n_patches"],
                            replace=False)
        records = [manifest.records[i] for i in np.sort(picked)]
        sides.append(manifest.with_records(records))
    cfg = TranslatorConfig(**payload["translator"])
    monitor = FidMonitor(patience=payload["patience"])
    started = time.monotonic()
    _, result = train_translator(
        sides[0], sides[1], cfg,
        monitor=monitor,
        max_epochs=payload["max_epochs"],
        seed=payload["seed"],
        out_dir=Path(payload["out_dir"]),
        fid_samples=payload["fid_samples"],
    )
    return {
        "n_patches": payload["n_patches"],
        "seed": payload["seed"],
        "best_fid": result.best_fid,
        "best_epoch": result.best_epoch,
        "stop_epoch": result.stop_epoch,
        "stop_reason": result.stop_reason,
        "seconds": time.monotonic() - started,
    }


def cmd_patch_count_sweep(args) -> int:
    config = load_config(args.config)
    run = start_run(config, args)
    inputs = _manifest_inputs(config, ["domain_a", "domain_b"])
    patch_grid = [int(x) for x in config.get("patch_grid", [100, 1000, 10000])]
    cfg = _translator_config(config)
    run.freeze_config(config, inputs)
    monitor_cfg = config.get("monitor", {})
    patience = int(monitor_cfg.get("patience", DEFAULT_PATIENCE))
    cells = [{
        "n_patches": n,
        "seed": derive_seed(_seed(config), "patch-sweep", n),
        "domain_a": str(inputs["domain_a"]),
        "domain_b": str(inputs["domain_b"]),
        "translator": cfg.to_dict(),
        "patience": patience,
        "max_epochs": int(config.get("max_epochs", 30)),
        "fid_samples": _fid_samples(config),
        "out_dir": str(run.checkpoints / f"p{n:05d}"),
    } for n in patch_grid]
    rows = _run_cells(_patch_sweep_cell, cells, args.parallel)
    rows.sort(key=lambda r: r["n_patches"])
    lines = ["n_patches,seed,best_fid,best_epoch,stop_epoch,stop_reason"]
    timing = ["n_patches,train_seconds"]
    for r in rows:
        fid = "" if r["best_fid"] is None else f"{r['best_fid']:.6f}"
        lines.append(f"{r['n_patches']},{r['seed']},{fid},"
                     f"{r['best_epoch']},{r['stop_epoch']},{r['stop_reason']}")
        timing.append(f"{r['n_patches']},{r['seconds']:.3f}")
    atomic_write_text(run.reports / "sweep.csv", "\n".join(lines) + "\n")
    atomic_write_text(run.logs / "timing.csv", "\n".join(timing) + "\n")
    return 0


def _run_cells(worker, cells: list[dict], parallel: int) -> list[dict]:
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(worker, cells))
    return [worker(cell) for cell in cells]


# --------------------------------------------------------------------------
# dispatch

COMMANDS = {
    "synth-data": (cmd_synth_data, "generate synthetic stained centers"),
    "build-manifest": (cmd_build_manifest, "index a patch directory with labels"),
    "split": (cmd_split, "case-level train/test split of a manifest"),
    "train-translator": (cmd_train_translator,
                         "train a stain translator with FID stopping"),
    "compute-fid": (cmd_compute_fid, "FID between two manifests"),
    "train-classifier": (cmd_train_classifier, "train a patch classifier"),
    "run-mds1": (cmd_run_mds1, "inference-time translation protocol"),
    "run-mds2": (cmd_run_mds2, "translated-training protocol"),
    "run-uda": (cmd_run_uda, "translation-as-augmentation protocol"),
    "eval": (cmd_eval, "run an adaptation plan end to end"),
    "slide-eval": (cmd_slide_eval, "slide-level evaluation of a classifier"),
    "stain-stats": (cmd_stain_stats, "hue variability versus slide count"),
    "slide-requirement-sweep": (cmd_slide_requirement_sweep,
                                "translator quality versus slide count"),
    "patch-count-sweep": (cmd_patch_count_sweep,
                          "FID stopping versus training-set size"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stainshift",
        description="Stain-invariant patch classification experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        if name == "eval":
            sub.add_argument("--plan", required=True,
                             help="JSON adaptation plan + datasets")
        else:
            sub.add_argument("--config", required=True, help="JSON run config")
        sub.add_argument("--runs-root", default=None,
                         help="override the runs directory (default: "
                              "$STAINSHIFT_RUNS or ./runs)")
        if name.endswith("-sweep"):
            sub.add_argument("--parallel", type=int, default=1,
                             help="fan out sweep cells across N processes")
        sub.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - single-line failure contract
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    finally:
        for handler in list(log.handlers):
            log.removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    sys.exit(main())
