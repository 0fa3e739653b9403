"""Frechet distance between Gaussian fits of feature distributions.

The distance between N(mu_a, S_a) and N(mu_b, S_b) is

    |mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a^1/2 S_b S_a^1/2)^1/2)

computed with symmetric eigendecompositions only: the matrix square roots
come from eigh with negative eigenvalues clamped to zero, which keeps the
result real and non-negative even for near-singular covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stainshift.fidmon.embedder import FeatureBatch, default_embedder
from stainshift.util import derive_seed

JITTER = 1e-6
NEGATIVE_TOLERANCE = 1e-6
DEFAULT_FID_SAMPLES = 1000


@dataclass
class GaussianStats:
    """Mean and covariance of one feature distribution."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d):
            raise ValueError(
                f"sigma must be ({d}, {d}) to match mu, got {self.sigma.shape}"
            )
        if not (np.isfinite(self.mu).all() and np.isfinite(self.sigma).all()):
            raise ValueError("Gaussian stats contain non-finite values")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-10):
            raise ValueError("sigma must be symmetric (within 1e-10)")
        if np.any(np.diag(self.sigma) < -1e-12):
            raise ValueError("sigma has negative diagonal entries")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def gaussian_stats(features) -> GaussianStats:
    """Fit mean and unbiased covariance to features, (n, d) with n >= 2."""
    if isinstance(features, FeatureBatch):
        features = features.features
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError(f"features must be 2-d (n, d), got shape {feats.shape}")
    if feats.shape[0] < 2:
        raise ValueError(
            f"need at least 2 samples for a covariance, got {feats.shape[0]}"
        )
    if not np.isfinite(feats).all():
        raise ValueError("features contain non-finite values")
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (feats.shape[0] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return GaussianStats(mu=mu, sigma=sigma, n=feats.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _trace_sqrt_product(sigma_a: np.ndarray, sigma_b: np.ndarray) -> float:
    a_half = _psd_sqrt(sigma_a)
    inner = a_half @ sigma_b @ a_half
    inner = 0.5 * (inner + inner.T)
    vals = np.linalg.eigh(inner)[0]
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def frechet_distance(stats_a: GaussianStats, stats_b: GaussianStats) -> float:
    """Frechet distance between two Gaussian fits; non-negative scalar.

    On an eigendecomposition failure, 1e-6 * I is added to both covariances
    and the computation retried once; a second failure raises with the
    condition numbers of both matrices. Values within 1e-6 below zero are
    clipped to 0.
    """
    if stats_a.dim != stats_b.dim:
        raise ValueError(
            f"dimension mismatch: {stats_a.dim} vs {stats_b.dim}"
        )
    diff = stats_a.mu - stats_b.mu
    mean_term = float(diff @ diff)
    trace_a = float(np.trace(stats_a.sigma))
    trace_b = float(np.trace(stats_b.sigma))
    try:
        tr_sqrt = _trace_sqrt_product(stats_a.sigma, stats_b.sigma)
    except np.linalg.LinAlgError:
        eye = np.eye(stats_a.dim)
        try:
            tr_sqrt = _trace_sqrt_product(stats_a.sigma + JITTER * eye,
                                          stats_b.sigma + JITTER * eye)
            trace_a += JITTER * stats_a.dim
            trace_b += JITTER * stats_b.dim
        except np.linalg.LinAlgError as err:
            raise RuntimeError(
                "covariance square root failed even after jitter; condition "
                f"numbers: {np.linalg.cond(stats_a.sigma):.3e}, "
                f"{np.linalg.cond(stats_b.sigma):.3e}"
            ) from err
    value = mean_term + trace_a + trace_b - 2.0 * tr_sqrt
    if value < -NEGATIVE_TOLERANCE:
        raise RuntimeError(
            f"Frechet distance came out {value:.3e} < -{NEGATIVE_TOLERANCE}; "
            "inputs are numerically pathological"
        )
    return max(value, 0.0)


def _as_images(source) -> np.ndarray:
    """Accept an image array or a manifest and return (n, h, w, 3) floats."""
    if isinstance(source, np.ndarray):
        return source
    from stainshift.datakit.ops import load_images

    return load_images(source)[0]


def compute_fid(real, generated, n_samples: int = DEFAULT_FID_SAMPLES,
                seed: int = 0, embedder=None) -> float:
    """FID between two image sets, each subsampled to n_samples.

    Both sides use the same seeded subsample stream, so passing the same
    set for `real` and `generated` yields exactly 0. Raises if either side
    has fewer than n_samples images (and n_samples must be at least 2).
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be at least 2, got {n_samples}")
    embedder = embedder or default_embedder()
    sides = []
    for images in (_as_images(real), _as_images(generated)):
        if len(images) < n_samples:
            raise ValueError(
                f"need at least {n_samples} images per side, got {len(images)}"
            )
        rng = np.random.default_rng(derive_seed(seed, "fid-subsample"))
        picked = rng.choice(len(images), size=n_samples, replace=False)
        sides.append(images[np.sort(picked)])
    stats = [gaussian_stats(embedder.embed(side)) for side in sides]
    return frechet_distance(stats[0], stats[1])
