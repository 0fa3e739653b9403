"""Input validation helpers shared by the estimators and metric functions."""

from __future__ import annotations

import numpy as np


def check_image_batch(X, *, size: int | None = None, name: str = "X") -> np.ndarray:
    """Validate an image batch and return it as float32 (n, h, w, 3) in [0, 1].

    A single (h, w, 3) image is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n, h, w, 3), got {X.shape}")
    if size is not None and (X.shape[1] != size or X.shape[2] != size):
        raise ValueError(
            f"{name} has spatial size {X.shape[1]}x{X.shape[2]}, expected {size}x{size}"
        )
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return X


def check_labels(y, *, name: str = "y") -> np.ndarray:
    """Validate binary labels and return them as an int array of 0/1."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return y


def check_scores(scores, *, name: str = "scores") -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(scores).all():
        raise ValueError(f"{name} contains non-finite values")
    return scores


def check_probabilities(p, *, name: str = "y_prob") -> np.ndarray:
    p = check_scores(p, name=name)
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return p
