"""FID computation and patience-based training monitor."""

from stainshift.fidmon.embedder import (
    DEFAULT_EMBED_DIM,
    FeatureBatch,
    RandomConvEmbedder,
    default_embedder,
)
from stainshift.fidmon.frechet import (
    DEFAULT_FID_SAMPLES,
    GaussianStats,
    compute_fid,
    frechet_distance,
    gaussian_stats,
)
from stainshift.fidmon.monitor import (
    CONTINUE,
    DEFAULT_PATIENCE,
    STOP,
    FidMonitor,
    FidMonitorState,
    monitor_update,
)

__all__ = [
    "CONTINUE",
    "DEFAULT_EMBED_DIM",
    "DEFAULT_FID_SAMPLES",
    "DEFAULT_PATIENCE",
    "FeatureBatch",
    "FidMonitor",
    "FidMonitorState",
    "GaussianStats",
    "RandomConvEmbedder",
    "STOP",
    "compute_fid",
    "default_embedder",
    "frechet_distance",
    "gaussian_stats",
    "monitor_update",
]
