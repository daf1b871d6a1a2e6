"""Gray-mapped square QAM with exact max-log soft demapping.

Constellations are built from an odd-integer lattice per axis (Gray-coded
so axis neighbors differ in one bit) and scaled to unit average energy.
The integer lattice is kept alongside the float points so energy and
adjacency properties can be verified in exact arithmetic.

Soft demapping computes per-bit max-log LLRs under the faded Gaussian
model with perfect channel knowledge; positive LLR means bit 0. Magnitudes
are clamped at +-30.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelRealization, SymbolBlock
from ..errors import ConfigError, InputDataError

LLR_CLAMP = 30.0

SUPPORTED_ORDERS = (4, 16)


def _gray_to_index(g: int) -> int:
    """Inverse of the binary-reflected Gray code."""
    i = 0
    while g:
        i ^= g
        g >>= 1
    return i


@dataclass(frozen=True)
class Constellation:
    order: int
    bits_per_symbol: int
    points: np.ndarray  # complex128, indexed by symbol label, unit mean energy
    raw_points: np.ndarray  # integer lattice (complex), points = raw / sqrt(raw_energy)
    raw_energy: int  # exact mean |raw|^2 over the constellation

    def bit_of_symbol(self, symbols: np.ndarray, bit: int) -> np.ndarray:
        shift = self.bits_per_symbol - 1 - bit
        return (symbols >> shift) & 1


def make_constellation(order: int) -> Constellation:
    """Square Gray-mapped constellation of the given order (4 or 16)."""
    if order not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported constellation order {order}, expected {SUPPORTED_ORDERS}")
    k = int(np.log2(order))
    half = k // 2
    n_levels = 1 << half
    # level index i carries Gray label i ^ (i >> 1); invert to map bits -> level;
    # all-zero bits land on the positive extreme
    level_of_bits = np.empty(n_levels, dtype=np.int64)
    for bits in range(n_levels):
        level_of_bits[bits] = (n_levels - 1) - 2 * _gray_to_index(bits)

    raw = np.empty(order, dtype=np.complex128)
    for s in range(order):
        i_bits = s >> half
        q_bits = s & (n_levels - 1)
        raw[s] = level_of_bits[i_bits] + 1j * level_of_bits[q_bits]
    raw_energy_total = int(np.sum(raw.real.astype(np.int64) ** 2 + raw.imag.astype(np.int64) ** 2))
    assert raw_energy_total % order == 0
    raw_energy = raw_energy_total // order
    points = raw / np.sqrt(float(raw_energy))
    return Constellation(
        order=order,
        bits_per_symbol=k,
        points=points,
        raw_points=raw,
        raw_energy=raw_energy,
    )


def bits_to_symbols(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    k = constellation.bits_per_symbol
    bits = np.asarray(bits, dtype=np.uint8) & 1
    if bits.ndim != 1 or bits.size % k:
        raise InputDataError(f"bit count {bits.size} not divisible by {k}")
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits.reshape(-1, k) @ weights


def qam_modulate(bits: np.ndarray, constellation: Constellation) -> SymbolBlock:
    """Map a bit vector onto constellation points (MSB first per symbol)."""
    symbols = bits_to_symbols(bits, constellation)
    return SymbolBlock(symbols=constellation.points[symbols], scale=1.0)


def qam_hard_demodulate(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest-point decisions back to bits (no channel knowledge)."""
    d2 = np.abs(symbols[:, None] - constellation.points[None, :]) ** 2
    labels = d2.argmin(axis=1)
    k = constellation.bits_per_symbol
    out = np.empty(symbols.size * k, dtype=np.uint8)
    for b in range(k):
        out[b::k] = constellation.bit_of_symbol(labels, b)
    return out


def qam_demodulate_llr(
    symbols: np.ndarray,
    realization: ChannelRealization,
    constellation: Constellation,
    offset: int = 0,
    clamp: float = LLR_CLAMP,
) -> np.ndarray:
    """Max-log LLRs from faded observations with known per-symbol fading.

    For observation y with fading h: LLR_b = (min_{bit=1} |y - h p|^2
    - min_{bit=0} |y - h p|^2) / sigma2, clamped to +-clamp.
    """
    y = np.asarray(symbols, dtype=np.complex128)
    h = realization.fading[offset : offset + y.size]
    if h.size < y.size:
        raise InputDataError(
            f"{y.size} symbols exceed realization capacity {h.size} at offset {offset}"
        )
    sigma2 = max(realization.noise_variance, 1e-30)
    d2 = np.abs(y[:, None] - h[:, None] * constellation.points[None, :]) ** 2
    k = constellation.bits_per_symbol
    labels = np.arange(constellation.order)
    llrs = np.empty(y.size * k, dtype=np.float64)
    for b in range(k):
        ones = constellation.bit_of_symbol(labels, b).astype(bool)
        min0 = d2[:, ~ones].min(axis=1)
        min1 = d2[:, ones].min(axis=1)
        llrs[b::k] = (min1 - min0) / sigma2
    return np.clip(llrs, -clamp, clamp)
