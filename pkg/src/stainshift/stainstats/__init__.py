"""Color-space tools: RGB/HSV conversion and stain variability summaries."""

from stainshift.stainstats.hsv import hsv_to_rgb, rgb_to_hsv, shift_hue
from stainshift.stainstats.variability import (
    HueSummary,
    circular_hue_mean,
    circular_hue_std,
    hue_variability,
    patch_hue_mean,
    write_hue_summary_csv,
)

__all__ = [
    "HueSummary",
    "circular_hue_mean",
    "circular_hue_std",
    "hsv_to_rgb",
    "hue_variability",
    "patch_hue_mean",
    "rgb_to_hsv",
    "shift_hue",
    "write_hue_summary_csv",
]
