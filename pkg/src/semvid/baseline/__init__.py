"""Classical separated source/channel coding baseline.

Block-DCT source codec, LDPC channel coding (alist-loadable, normalized
min-sum decoding), Gray-mapped QAM with max-log soft demapping, and the
composed transmission chain used for cliff-effect comparisons.
"""

from .dct_codec import source_decode, source_encode
from .ldpc import LdpcCode, ldpc_decode, ldpc_encode, load_alist, make_regular_code, write_alist
from .qam import Constellation, make_constellation, qam_demodulate_llr, qam_modulate
from .sscc import run_sscc

__all__ = [
    "Constellation",
    "LdpcCode",
    "ldpc_decode",
    "ldpc_encode",
    "load_alist",
    "make_constellation",
    "make_regular_code",
    "qam_demodulate_llr",
    "qam_modulate",
    "run_sscc",
    "source_decode",
    "source_encode",
    "write_alist",
]
