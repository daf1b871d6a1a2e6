"""Latent-space video coding: motion estimation/compensation and residual codec.

The motion pair (estimator + compensator) predicts the current latent frame
from the reference latent. Initialization is chosen so the untrained coder
is exactly "predict = reference": the estimator's final conv starts at zero
(zero offset map) and the compensator adds a zero-initialized correction on
top of an explicit pass-through of the reference. Transmitter and receiver
instantiate the same architecture with independent weights.

The residual codec (1x1 channel projections) squeezes residuals from the
latent channel count down to the per-P-frame symbol budget and back.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .semcodec import _LEAKY_SLOPE, ResidualBlock


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


class MotionEstimator(nn.Module):
    """Concatenated (current, reference) latents -> per-position offset map."""

    def __init__(self, channels: int, offset_channels: int = 16, width: int = 32):
        super().__init__()
        self.offset_channels = offset_channels
        self.net = nn.Sequential(
            nn.Conv2d(2 * channels, width, 3, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
            nn.Conv2d(width, width, 3, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
        )
        self.head = nn.Conv2d(width, offset_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, current: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
        _check_same_shape(current, reference, "motion estimation inputs")
        return self.head(self.net(torch.cat([current, reference], dim=1)))


class MotionCompensator(nn.Module):
    """Reference latent + offset map -> predicted current latent."""

    def __init__(self, channels: int, offset_channels: int = 16, width: int = 32):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels + offset_channels, width, 3, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
            ResidualBlock(width),
            ResidualBlock(width),
        )
        self.head = nn.Conv2d(width, channels, 3, padding=1)
        # untrained compensator returns the reference exactly
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, reference: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
        if offsets.shape[-2:] != reference.shape[-2:] or offsets.shape[0] != reference.shape[0]:
            raise ShapeError(
                f"offset map {tuple(offsets.shape)} does not match reference "
                f"{tuple(reference.shape)}"
            )
        return reference + self.head(self.body(torch.cat([reference, offsets], dim=1)))


class VideoCoder(nn.Module):
    """One motion estimation & compensation unit (used twice: tx side and rx side)."""

    def __init__(self, channels: int, offset_channels: int = 16, width: int = 32):
        super().__init__()
        self.estimator = MotionEstimator(channels, offset_channels, width)
        self.compensator = MotionCompensator(channels, offset_channels, width)

    def forward(self, current: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
        offsets = self.estimator(current, reference)
        return self.compensator(reference, offsets)


class ResidualEncoder(nn.Module):
    """1x1 conv squeezing residual channels to the transmitted channel count."""

    def __init__(self, channels: int, compressed_channels: int, identity_init: bool = False):
        super().__init__()
        if compressed_channels > channels:
            raise ConfigError(
                f"compressed channels {compressed_channels} exceed latent channels {channels}"
            )
        self.conv = nn.Conv2d(channels, compressed_channels, 1)
        if identity_init:
            if compressed_channels != channels:
                raise ConfigError("identity init requires compressed_channels == channels")
            nn.init.dirac_(self.conv.weight)
            nn.init.zeros_(self.conv.bias)

    def forward(self, residual: torch.Tensor) -> torch.Tensor:
        return self.conv(residual)


class ResidualDecoder(nn.Module):
    """1x1 conv expanding the transmitted residual back to latent channels."""

    def __init__(self, channels: int, compressed_channels: int, identity_init: bool = False):
        super().__init__()
        self.conv = nn.Conv2d(compressed_channels, channels, 1)
        if identity_init:
            if compressed_channels != channels:
                raise ConfigError("identity init requires compressed_channels == channels")
            nn.init.dirac_(self.conv.weight)
            nn.init.zeros_(self.conv.bias)

    def forward(self, compressed: torch.Tensor) -> torch.Tensor:
        return self.conv(compressed)


def _single(f: torch.Tensor) -> bool:
    return f.ndim == 3


def estimate_motion(current, reference, estimator: MotionEstimator) -> torch.Tensor:
    if _single(current):
        return estimator(current.unsqueeze(0), reference.unsqueeze(0)).squeeze(0)
    return estimator(current, reference)


def compensate_motion(reference, offsets, compensator: MotionCompensator) -> torch.Tensor:
    if _single(reference):
        return compensator(reference.unsqueeze(0), offsets.unsqueeze(0)).squeeze(0)
    return compensator(reference, offsets)


def compute_residual(current: torch.Tensor, predicted: torch.Tensor) -> torch.Tensor:
    """r = current - predicted, so predicted + r reconstructs current bitwise."""
    _check_same_shape(current, predicted, "residual inputs")
    return current - predicted


def encode_residual(residual, encoder: ResidualEncoder) -> torch.Tensor:
    if _single(residual):
        return encoder(residual.unsqueeze(0)).squeeze(0)
    return encoder(residual)


def decode_residual(compressed, decoder: ResidualDecoder) -> torch.Tensor:
    if _single(compressed):
        return decoder(compressed.unsqueeze(0)).squeeze(0)
    return decoder(compressed)
