"""Least-squares adversarial losses and L1 consistency losses.

All functions accept torch tensors (keeping gradients) or array-likes and
return 0-dim torch tensors; wrap with float() for plain numbers.
"""

from __future__ import annotations

import torch


def _as_tensor(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x)
    if not t.is_floating_point():
        t = t.float()
    if t.numel() == 0:
        raise ValueError(f"{name} is empty")
    if torch.isnan(t.detach()).any():
        raise ValueError(f"{name} contains NaN")
    return t


def lsgan_disc_loss(real_scores, fake_scores) -> torch.Tensor:
    """Least-squares critic loss: real scores toward 1, fake toward 0.

    0.5 * mean((real - 1)^2) + 0.5 * mean(fake^2); zero exactly when every
    real score is 1 and every fake score is 0.
    """
    real = _as_tensor(real_scores, "real_scores")
    fake = _as_tensor(fake_scores, "fake_scores")
    return 0.5 * ((real - 1.0) ** 2).mean() + 0.5 * (fake**2).mean()


def lsgan_gen_loss(fake_scores) -> torch.Tensor:
    """Least-squares generator loss: fake scores pushed toward 1."""
    fake = _as_tensor(fake_scores, "fake_scores")
    return 0.5 * ((fake - 1.0) ** 2).mean()


def cycle_loss(original, reconstructed) -> torch.Tensor:
    """Mean absolute error between a batch and its round-trip translation."""
    orig = _as_tensor(original, "original")
    recon = _as_tensor(reconstructed, "reconstructed")
    if orig.shape != recon.shape:
        raise ValueError(
            f"shape mismatch: {tuple(orig.shape)} vs {tuple(recon.shape)}"
        )
    return (orig - recon).abs().mean()


def identity_loss(original, mapped) -> torch.Tensor:
    """Mean absolute error of mapping a domain's images through its own
    incoming generator; regularizes color drift."""
    return cycle_loss(original, mapped)
