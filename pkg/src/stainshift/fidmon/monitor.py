"""Patience-based early stopping on FID.

Training stops once the FID between real source patches and translated
target patches has not improved for `patience` consecutive epochs. The
monitor tracks the best epoch so the caller can keep that checkpoint
rather than the last one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stainshift.fidmon.embedder import default_embedder
from stainshift.fidmon.frechet import frechet_distance, gaussian_stats

DEFAULT_PATIENCE = 15

CONTINUE = "continue"
STOP = "stop"


@dataclass
class FidMonitorState:
    """Everything the patience rule needs between epochs."""

    patience: int = DEFAULT_PATIENCE
    best_fid: float = float("inf")
    best_epoch: int = -1
    last_epoch: int = -1
    epochs_since_improve: int = 0
    history: list[tuple[int, float, float, int, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


def monitor_update(state: FidMonitorState, epoch: int, fid: float) -> str:
    """Feed one epoch's FID; returns "continue" or "stop".

    Epochs must be submitted in strictly increasing order. Improvement
    means strictly smaller FID; the stall counter is epochs since the best
    epoch, and stopping triggers once it reaches the patience.
    """
    if not np.isfinite(fid) or fid < 0:
        raise ValueError(f"fid must be finite and non-negative, got {fid}")
    if epoch <= state.last_epoch:
        raise ValueError(
            f"epochs must be strictly increasing: got {epoch} after "
            f"{state.last_epoch}"
        )
    state.last_epoch = epoch
    if fid < state.best_fid:
        state.best_fid = fid
        state.best_epoch = epoch
        state.epochs_since_improve = 0
    else:
        state.epochs_since_improve = epoch - state.best_epoch
    decision = STOP if state.epochs_since_improve >= state.patience else CONTINUE
    state.history.append(
        (epoch, float(fid), state.best_fid, state.epochs_since_improve, decision)
    )
    return decision


class FidMonitor:
    """Computes FID per epoch and applies the patience rule.

    The reference (real) side is embedded once and cached, since the
    default protocol evaluates against a fixed seeded sample for the whole
    run. Call `reset_reference()` if the reference images change.
    """

    def __init__(self, patience: int = DEFAULT_PATIENCE, embedder=None):
        self.embedder = embedder or default_embedder()
        self.state = FidMonitorState(patience=patience)
        self._reference_stats = None

    @property
    def best_fid(self) -> float:
        return self.state.best_fid

    @property
    def best_epoch(self) -> int:
        return self.state.best_epoch

    def reset_reference(self) -> None:
        self._reference_stats = None

    def evaluate(self, epoch: int, real_images: np.ndarray,
                 generated_images: np.ndarray) -> str:
        """FID(real, generated) for this epoch, fed through the patience rule."""
        if self._reference_stats is None:
            self._reference_stats = gaussian_stats(self.embedder.embed(real_images))
        generated_stats = gaussian_stats(self.embedder.embed(generated_images))
        fid = frechet_distance(self._reference_stats, generated_stats)
        return monitor_update(self.state, epoch, fid)

    def update(self, epoch: int, fid: float) -> str:
        """Feed an externally computed FID value."""
        return monitor_update(self.state, epoch, fid)

    def history_rows(self) -> list[dict]:
        return [
            {
                "epoch": epoch,
                "fid": fid,
                "best_fid": best,
                "epochs_since_improve": since,
                "decision": decision,
            }
            for epoch, fid, best, since, decision in self.state.history
        ]

    def write_history_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["epoch", "fid", "best_fid", "epochs_since_improve", "decision"]
            )
            for epoch, fid, best, since, decision in self.state.history:
                writer.writerow(
                    [epoch, f"{fid:.8f}", f"{best:.8f}", since, decision]
                )
