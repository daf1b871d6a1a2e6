"""Rayleigh fading simulation and per-symbol MMSE equalization.

Real-valued payloads are paired into I/Q complex symbols, power-normalized
to unit average symbol energy, faded, equalized, and denormalized, so an
average SNR of ``snr_db`` means noise variance ``sigma2 = 10**(-snr_db/10)``
relative to unit transmit power.

Fading and noise live in an explicit :class:`ChannelRealization` sampled
once per GoP; nothing here draws randomness after sampling, which keeps
transmissions reproducible and lets tests inject zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import CapacityError, ShapeError


@dataclass(frozen=True)
class ChannelRealization:
    """One sampled fading/noise draw shared by all transmissions of a GoP."""

    fading: np.ndarray  # complex, length max_symbols, CN(0, 1)
    noise: np.ndarray  # complex, length max_symbols, variance sigma2
    noise_variance: float
    snr_db: float

    @property
    def max_symbols(self) -> int:
        return self.fading.shape[0]


@dataclass(frozen=True)
class EqualizerGains:
    """Per-symbol MMSE gains: estimate = gain_signal * x + gain_noise * n."""

    gain_signal: np.ndarray  # real
    gain_noise: np.ndarray  # complex


@dataclass(frozen=True)
class SymbolBlock:
    """Complex symbols plus the power-normalization factor used to produce them."""

    symbols: np.ndarray
    scale: float

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


def snr_db_to_noise_variance(snr_db: float) -> float:
    return float(10.0 ** (-snr_db / 10.0))


def sample_channel(seed: int, max_symbols: int, snr_db: float) -> ChannelRealization:
    """Draw i.i.d. CN(0,1) fading and CN(0, sigma2) noise for ``max_symbols`` symbols."""
    if max_symbols < 1:
        raise ShapeError("max_symbols must be >= 1")
    sigma2 = snr_db_to_noise_variance(snr_db)
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal(max_symbols) + 1j * rng.standard_normal(max_symbols)) / np.sqrt(2.0)
    n = (rng.standard_normal(max_symbols) + 1j * rng.standard_normal(max_symbols)) * np.sqrt(
        sigma2 / 2.0
    )
    return ChannelRealization(fading=h, noise=n, noise_variance=sigma2, snr_db=float(snr_db))


def mmse_gains(realization: ChannelRealization, length: int, offset: int = 0) -> EqualizerGains:
    """Per-symbol MMSE equalizer gains for the leading ``length`` symbols.

    gain_signal = |h|^2 / (|h|^2 + sigma2), gain_noise = conj(h) / (|h|^2 + sigma2).
    A zero denominator (deep fade with sigma2 = 0) yields zero gains.
    """
    if length > realization.max_symbols - offset:
        raise CapacityError(
            f"requested {length} symbols at offset {offset}, "
            f"realization holds {realization.max_symbols}"
        )
    h = realization.fading[offset : offset + length]
    habs2 = np.abs(h) ** 2
    denom = habs2 + realization.noise_variance
    with np.errstate(divide="ignore", invalid="ignore"):
        gs = np.where(denom > 0, habs2 / denom, 0.0)
        gn = np.where(denom > 0, np.conj(h) / denom, 0.0 + 0.0j)
    return EqualizerGains(gain_signal=gs.astype(np.float64), gain_noise=gn)


def power_normalize(symbols: np.ndarray) -> SymbolBlock:
    """Scale a complex block to unit average symbol energy (all-zero keeps scale 1)."""
    power = float(np.mean(np.abs(symbols) ** 2)) if symbols.size else 0.0
    scale = float(np.sqrt(power)) if power > 0.0 else 1.0
    return SymbolBlock(symbols=symbols / scale, scale=scale)


def pair_to_complex(payload):
    """Interleave consecutive reals into complex I/Q symbols (torch or numpy)."""
    if payload.shape[-1] % 2:
        raise ShapeError(f"payload length {payload.shape[-1]} must be even")
    if torch.is_tensor(payload):
        return torch.complex(payload[..., 0::2], payload[..., 1::2])
    return payload[..., 0::2] + 1j * payload[..., 1::2]


def complex_to_pair(symbols):
    """Inverse of :func:`pair_to_complex`."""
    if torch.is_tensor(symbols):
        return torch.stack([symbols.real, symbols.imag], dim=-1).reshape(*symbols.shape[:-1], -1)
    return np.stack([symbols.real, symbols.imag], axis=-1).reshape(*symbols.shape[:-1], -1)


def apply_fading(symbols: np.ndarray, realization: ChannelRealization, offset: int = 0) -> np.ndarray:
    """Raw faded observation y = h * x + n (no equalization), for coherent receivers."""
    m = symbols.shape[0]
    if m > realization.max_symbols - offset:
        raise CapacityError(
            f"{m} symbols exceed realization capacity {realization.max_symbols - offset}"
        )
    h = realization.fading[offset : offset + m]
    n = realization.noise[offset : offset + m]
    return h * symbols + n


def transmit_vector(payload, realization: ChannelRealization, offset: int = 0):
    """Send a real vector over the fading channel and MMSE-equalize it.

    Pipeline: pair reals into complex symbols, power-normalize, fade with
    ``h[offset+m]`` and add ``n[offset+m]``, equalize, denormalize, unpair.
    The equalized estimate is computed in denormalized form,
    ``gs * x + scale * (gn * n)``, which is algebraically identical and
    makes the sigma2 = 0 path exactly lossless.

    Accepts numpy arrays or torch tensors; torch inputs keep their autograd
    graph (fading and noise enter as constants).
    """
    torch_in = torch.is_tensor(payload)
    x = payload if torch_in else torch.as_tensor(payload)
    if x.ndim != 1:
        raise ShapeError(f"payload must be 1-D, got shape {tuple(x.shape)}")
    if x.shape[0] % 2:
        raise ShapeError(f"payload length {x.shape[0]} must be even")
    n_sym = x.shape[0] // 2
    if offset < 0:
        raise CapacityError("offset must be >= 0")
    if n_sym > realization.max_symbols - offset:
        raise CapacityError(
            f"payload needs {n_sym} symbols at offset {offset}, "
            f"realization holds {realization.max_symbols}"
        )
    if n_sym == 0:
        return payload

    cdtype = torch.complex64 if x.dtype == torch.float32 else torch.complex128
    rdtype = x.dtype if x.dtype in (torch.float32, torch.float64) else torch.float64
    sym = torch.complex(x[0::2].to(rdtype), x[1::2].to(rdtype))

    power = (sym.real**2 + sym.imag**2).mean()
    scale = power.sqrt() if float(power.detach()) > 0.0 else torch.ones((), dtype=rdtype)

    h = torch.from_numpy(realization.fading[offset : offset + n_sym]).to(cdtype)
    n = torch.from_numpy(realization.noise[offset : offset + n_sym]).to(cdtype)
    sigma2 = torch.tensor(realization.noise_variance, dtype=rdtype)

    habs2 = h.real**2 + h.imag**2
    denom = habs2 + sigma2
    safe = denom > 0
    # guard the masked lanes so no inf/nan is ever materialized
    denom_safe = torch.where(safe, denom, torch.ones_like(denom))
    gs = torch.where(safe, habs2 / denom_safe, torch.zeros_like(denom))
    gn = torch.where(safe, h.conj() / denom_safe.to(cdtype), torch.zeros_like(h))

    equalized = gs * sym + scale * (gn * n)
    out = complex_to_pair(equalized)
    return out if torch_in else out.numpy()
