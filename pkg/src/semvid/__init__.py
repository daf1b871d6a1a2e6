"""Semantic-level wireless video transmission laboratory.

A desk-scale end-to-end system: a learned video transceiver that codes
groups of pictures in a latent feature space and sends them over a
simulated Rayleigh fading channel with MMSE equalization, a receiver-side
multi-frame attention compensator, a training harness, metrics, and a
classical separated source/channel coding baseline (block-DCT codec,
LDPC, QAM) for comparison sweeps.
"""

__version__ = "0.1.0"
