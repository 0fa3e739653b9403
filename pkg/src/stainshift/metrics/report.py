"""Evaluation reports: per-center patch and slide metrics, JSON and CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

from stainshift.metrics.patch import auc, f1_score, precision_recall
from stainshift.metrics.slides import IC_FRACTION_THRESHOLD, slide_level
from stainshift.util import atomic_write_text, read_json, write_json

CSV_COLUMNS = ["center", "protocol", "precision", "recall", "auc", "f1", "n"]


@dataclass
class CenterMetrics:
    """Patch-level metrics of one model on one center's test set."""

    precision: float
    recall: float
    auc: float
    f1: float
    n_patches: int
    precision_defined: bool = True


@dataclass
class SlideMetrics:
    precision: float
    recall: float
    f1: float
    n_slides: int


@dataclass
class EvalReport:
    """One protocol run: metrics per evaluated center."""

    protocol: str
    config_hash: str
    per_center: dict[str, CenterMetrics] = field(default_factory=dict)
    slide_level: dict[str, SlideMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "config_hash": self.config_hash,
            "per_center": {c: asdict(m) for c, m in sorted(self.per_center.items())},
            "slide_level": {c: asdict(m) for c, m in sorted(self.slide_level.items())},
        }

    def save(self, path: str | Path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        data = read_json(path)
        return cls(
            protocol=data["protocol"],
            config_hash=data["config_hash"],
            per_center={c: CenterMetrics(**m) for c, m in data["per_center"].items()},
            slide_level={c: SlideMetrics(**m) for c, m in data["slide_level"].items()},
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for center in sorted(self.per_center):
            m = self.per_center[center]
            writer.writerow([
                center, self.protocol,
                f"{m.precision:.6f}", f"{m.recall:.6f}",
                f"{m.auc:.6f}", f"{m.f1:.6f}", m.n_patches,
            ])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        atomic_write_text(Path(path), self.csv_text())


def combined_csv(reports: list[EvalReport], path: str | Path) -> None:
    """One CSV holding the per-center rows of several reports."""
    lines = [",".join(CSV_COLUMNS)]
    for report in reports:
        body = report.csv_text().splitlines()[1:]
        lines.extend(body)
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


SLIDE_CSV_COLUMNS = ["center", "protocol", "precision", "recall", "f1", "n"]


def slide_csv(reports: list[EvalReport], path: str | Path) -> None:
    """Slide-level rows of one or more reports as a single CSV."""
    lines = [",".join(SLIDE_CSV_COLUMNS)]
    for report in reports:
        for center in sorted(report.slide_level):
            m = report.slide_level[center]
            lines.append(",".join([
                center, report.protocol,
                f"{m.precision:.6f}", f"{m.recall:.6f}",
                f"{m.f1:.6f}", str(m.n_slides),
            ]))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def evaluate_predictions(y_true, y_prob, *,
                         threshold: float = 0.5) -> CenterMetrics:
    """Patch metrics from probabilities of the positive class."""
    pr = precision_recall(y_true, y_prob, threshold)
    return CenterMetrics(
        precision=pr.precision,
        recall=pr.recall,
        auc=auc(y_true, y_prob),
        f1=f1_score(pr.precision, pr.recall),
        n_patches=len(y_prob),
        precision_defined=pr.precision_defined,
    )


def evaluate_slides(slide_ids, y_true, y_pred, *,
                    threshold: float = IC_FRACTION_THRESHOLD) -> SlideMetrics:
    res = slide_level(slide_ids, y_true, y_pred, threshold)
    return SlideMetrics(
        precision=res.precision,
        recall=res.recall,
        f1=res.f1,
        n_slides=res.n_slides,
    )


def mds1_comparison(baseline, translator, target_test, *,
                    threshold: float = 0.5,
                    batch_size: int = 64) -> dict[str, CenterMetrics]:
    """Baseline-on-raw versus baseline-on-translated for one target center.

    Returns {"raw": ..., "translated": ...}; the translated row is the
    inference-time protocol (translate target patches into the source stain,
    reuse the source classifier unchanged).
    """
    from stainshift.datakit.ops import load_images

    X, y = load_images(target_test)
    raw = evaluate_predictions(y, baseline.predict_proba(X)[:, 1],
                               threshold=threshold)
    X_src = translator.translate(X, direction="b_to_a", batch_size=batch_size)
    translated = evaluate_predictions(y, baseline.predict_proba(X_src)[:, 1],
                                      threshold=threshold)
    return {"raw": raw, "translated": translated}
