"""Separated source/channel coding chain over the shared fading simulator.

source codec -> zero-padded k-bit blocks -> LDPC -> seeded bit interleaver
-> Gray QAM -> Rayleigh fading (coherent soft demapping with known per-
symbol fading, no equalizer) -> normalized min-sum -> reassembly -> source
decode with frame-freeze on corruption.

The bandwidth ratio counts real channel uses: cbr = 2 * complex symbols /
(I * H * W * 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..channel import apply_fading, sample_channel
from ..videoio import VideoGoP
from .dct_codec import Bitstream, DecodedGop, source_decode, source_encode
from .extern_codec import ExternalCodec
from .ldpc import LdpcCode, ldpc_decode_blocks, ldpc_encode_blocks
from .qam import Constellation, qam_demodulate_llr, qam_modulate

DEFAULT_INTERLEAVER_SEED = 0x1EAF


def sscc_symbol_count(n_source_bits: int, code, constellation) -> int:
    """Complex symbols needed to carry a source bitstream through the chain."""
    n_blocks = math.ceil(n_source_bits / code.k)
    coded_bits = n_blocks * code.n
    return math.ceil(coded_bits / constellation.bits_per_symbol)


@dataclass
class SsccResult:
    gop: VideoGoP
    cbr: float
    corrupted: bool
    frames_decoded: int
    n_symbols: int
    converged_blocks: int
    total_blocks: int
    interleaver_seed: int
    source_bits: int


def run_sscc(
    gop: VideoGoP,
    snr_db: float,
    code: LdpcCode,
    constellation: Constellation,
    quality: int,
    seed: int,
    max_iters: int = 50,
    interleaver_seed: int = DEFAULT_INTERLEAVER_SEED,
    external_codec: ExternalCodec | None = None,
) -> SsccResult:
    """Transmit one GoP through the classical chain and reconstruct it."""
    h, w = gop.frame_dims
    n_frames = gop.gop_size

    if external_codec is None:
        source_bits = source_encode(gop, quality).to_bits()
    else:
        source_bits = external_codec.encode_to_bits(gop, quality)
    n_source_bits = source_bits.size

    # chunk into k-bit information blocks, zero padded
    n_blocks = math.ceil(n_source_bits / code.k)
    info = np.zeros(n_blocks * code.k, dtype=np.uint8)
    info[:n_source_bits] = source_bits
    codewords = ldpc_encode_blocks(info.reshape(n_blocks, code.k), code)
    coded = codewords.reshape(-1)

    perm = np.random.default_rng(interleaver_seed).permutation(coded.size)
    tx_bits = coded[perm]
    bps = constellation.bits_per_symbol
    pad = (-tx_bits.size) % bps
    if pad:
        tx_bits = np.concatenate([tx_bits, np.zeros(pad, dtype=np.uint8)])

    block = qam_modulate(tx_bits, constellation)
    n_symbols = block.symbols.size
    realization = sample_channel(seed, n_symbols, snr_db)
    received = apply_fading(block.symbols, realization)
    llrs = qam_demodulate_llr(received, realization, constellation)[: coded.size]

    deinterleaved = np.empty_like(llrs)
    deinterleaved[perm] = llrs
    decoded, converged = ldpc_decode_blocks(
        deinterleaved.reshape(n_blocks, code.n), code, max_iters=max_iters
    )
    rx_info = decoded[:, code.info_cols].reshape(-1)[:n_source_bits]

    if external_codec is None:
        result: DecodedGop = source_decode(
            Bitstream.from_bits(rx_info), dims=(h, w), n_frames=n_frames
        )
    else:
        result = external_codec.decode_from_bits(rx_info, dims=(h, w), n_frames=n_frames)

    cbr = 2.0 * n_symbols / (n_frames * h * w * 3)
    return SsccResult(
        gop=result.gop,
        cbr=cbr,
        corrupted=result.corrupted,
        frames_decoded=result.frames_decoded,
        n_symbols=n_symbols,
        converged_blocks=int(converged.sum()),
        total_blocks=n_blocks,
        interleaver_seed=interleaver_seed,
        source_bits=int(n_source_bits),
    )
