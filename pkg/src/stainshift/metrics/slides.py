"""Slide-level aggregation of patch predictions.

A slide is called positive when at least 10% of its patches are positive.
The same rule is applied to ground-truth patch labels and to predicted
patch labels, so slide-level truth and slide-level prediction are derived
identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stainshift.metrics.patch import f1_score
from stainshift.validation import check_labels

IC_FRACTION_THRESHOLD = 0.10


@dataclass
class SlideRow:
    slide_id: str
    n_patches: int
    true_fraction: float
    pred_fraction: float
    true_label: int
    pred_label: int


@dataclass
class SlideLevelResult:
    rows: list[SlideRow]
    precision: float
    recall: float
    f1: float
    precision_defined: bool
    recall_defined: bool

    @property
    def n_slides(self) -> int:
        return len(self.rows)


def slide_positive(fraction: float,
                   threshold: float = IC_FRACTION_THRESHOLD) -> int:
    """Slide label from its positive-patch fraction; the boundary counts."""
    return int(fraction >= threshold)


def slide_level(slide_ids, y_true, y_pred,
                threshold: float = IC_FRACTION_THRESHOLD) -> SlideLevelResult:
    """Aggregate patch labels and predictions to slide calls and metrics.

    `slide_ids`, `y_true`, `y_pred` are parallel per-patch arrays; labels
    and predictions are binary. Precision (or recall) over slides that is
    undefined is reported as 0.0 with its flag cleared.
    """
    slide_ids = [str(s) for s in slide_ids]
    y_true = check_labels(y_true, name="y_true")
    y_pred = check_labels(y_pred, name="y_pred")
    if not slide_ids:
        raise ValueError("no patches given")
    if not (len(slide_ids) == len(y_true) == len(y_pred)):
        raise ValueError(
            f"length mismatch: {len(slide_ids)} slide ids, "
            f"{len(y_true)} labels, {len(y_pred)} predictions"
        )
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")

    groups: dict[str, list[int]] = {}
    for i, sid in enumerate(slide_ids):
        groups.setdefault(sid, []).append(i)

    rows = []
    for sid in sorted(groups):
        idx = np.asarray(groups[sid])
        true_frac = float(y_true[idx].mean())
        pred_frac = float(y_pred[idx].mean())
        rows.append(SlideRow(
            slide_id=sid,
            n_patches=len(idx),
            true_fraction=true_frac,
            pred_fraction=pred_frac,
            true_label=slide_positive(true_frac, threshold),
            pred_label=slide_positive(pred_frac, threshold),
        ))

    truths = np.asarray([r.true_label for r in rows])
    preds = np.asarray([r.pred_label for r in rows])
    tp = int(np.sum((preds == 1) & (truths == 1)))
    fp = int(np.sum((preds == 1) & (truths == 0)))
    fn = int(np.sum((preds == 0) & (truths == 1)))
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if recall_defined else 0.0
    return SlideLevelResult(
        rows=rows,
        precision=float(precision),
        recall=float(recall),
        f1=f1_score(float(precision), float(recall)),
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )
