"""Patch-level classification metrics."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from stainshift.validation import check_labels, check_scores


class PrecisionRecall(NamedTuple):
    precision: float
    recall: float
    precision_defined: bool


def _check_pair(y_true, y_score):
    y_true = check_labels(y_true)
    y_score = check_scores(y_score, name="y_score")
    if len(y_true) != len(y_score):
        raise ValueError(
            f"length mismatch: {len(y_true)} labels vs {len(y_score)} scores"
        )
    return y_true, y_score


def precision_recall(y_true, y_score, threshold: float = 0.5) -> PrecisionRecall:
    """Precision and recall of `score >= threshold` against binary labels.

    Requires at least one positive label (recall is meaningless otherwise).
    With no predicted positives, precision is reported as 0.0 and
    `precision_defined` is False.
    """
    y_true, y_score = _check_pair(y_true, y_score)
    if y_true.sum() == 0:
        raise ValueError("recall undefined: no positive ground-truth labels")
    y_pred = y_score >= threshold
    tp = int(np.sum(y_pred & (y_true == 1)))
    fp = int(np.sum(y_pred & (y_true == 0)))
    fn = int(np.sum(~y_pred & (y_true == 1)))
    defined = (tp + fp) > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn)
    return PrecisionRecall(float(precision), float(recall), defined)


def auc(y_true, y_score) -> float:
    """Area under the ROC curve, with half credit for tied scores.

    Computed from the rank statistic: the sum of average ranks of the
    positives. Equals the fraction of (positive, negative) pairs ranked
    correctly, counting ties as half. Requires both classes present.
    """
    y_true, y_score = _check_pair(y_true, y_score)
    n_pos = int(y_true.sum())
    n_neg = len(y_true) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUC undefined with {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(y_score, kind="mergesort")
    sorted_scores = y_score[order]
    ranks = np.empty(len(y_score), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[y_true == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
