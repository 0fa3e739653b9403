"""Patch- and slide-level evaluation metrics and report containers."""

from stainshift.metrics.patch import PrecisionRecall, auc, f1_score, precision_recall
from stainshift.metrics.slides import (
    IC_FRACTION_THRESHOLD,
    SlideLevelResult,
    SlideRow,
    slide_level,
    slide_positive,
)
from stainshift.metrics.report import (
    CSV_COLUMNS,
    SLIDE_CSV_COLUMNS,
    CenterMetrics,
    EvalReport,
    SlideMetrics,
    combined_csv,
    evaluate_predictions,
    evaluate_slides,
    mds1_comparison,
    slide_csv,
)

__all__ = [
    "CSV_COLUMNS",
    "SLIDE_CSV_COLUMNS",
    "CenterMetrics",
    "EvalReport",
    "IC_FRACTION_THRESHOLD",
    "PrecisionRecall",
    "SlideLevelResult",
    "SlideMetrics",
    "SlideRow",
    "auc",
    "combined_csv",
    "evaluate_predictions",
    "evaluate_slides",
    "f1_score",
    "mds1_comparison",
    "precision_recall",
    "slide_csv",
    "slide_level",
    "slide_positive",
]
