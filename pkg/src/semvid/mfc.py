"""Receiver-side multi-frame compensation via cross attention.

The received reference latent is polished toward the current frame using
the previously reconstructed latents of the same GoP. Latents are viewed
as token matrices: one token per spatial position, channels as embeddings.
History tokens are concatenated into a single "pre" stream; two cross
attentions exchange content between the reference stream and the pre
stream, the results are fused along the embedding axis, and a learnable
scalar (initialized to zero, so the untrained module is an exact
pass-through) gates the correction added back onto the reference.

A two-value channel descriptor (mean fading power, noise variance) is
embedded and added to every reference-stream token before projection, so
the module can condition its correction on channel quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ShapeError

DEFAULT_HISTORY_WINDOW = 3


@dataclass(frozen=True)
class ChannelDescriptor:
    """Per-GoP channel summary fed to the compensator."""

    mean_fading_power: float
    noise_variance: float

    def __post_init__(self):
        if not (self.mean_fading_power >= 0.0 and self.noise_variance >= 0.0):
            raise ShapeError("channel descriptor entries must be nonnegative and finite")


@dataclass
class FrameHistory:
    """Previously reconstructed latents of the current GoP, most recent first."""

    window: int = DEFAULT_HISTORY_WINDOW
    frames: list[torch.Tensor] = field(default_factory=list)

    def push(self, frame: torch.Tensor) -> None:
        self.frames.insert(0, frame)
        del self.frames[self.window :]

    def __len__(self) -> int:
        return len(self.frames)


def cross_attend(qa: torch.Tensor, ka: torch.Tensor, vb: torch.Tensor) -> torch.Tensor:
    """softmax(qa @ ka.T) @ vb with row-wise softmax.

    qa: (Ta, d), ka: (Tb, d), vb: (Tb, dv) -> (Ta, dv). Every attention row
    sums to one.
    """
    if qa.ndim != 2 or ka.ndim != 2 or vb.ndim != 2:
        raise ShapeError("cross_attend expects 2-D token matrices")
    if qa.shape[1] != ka.shape[1]:
        raise ShapeError(f"query dim {qa.shape[1]} != key dim {ka.shape[1]}")
    if ka.shape[0] != vb.shape[0]:
        raise ShapeError(f"key count {ka.shape[0]} != value count {vb.shape[0]}")
    attn = torch.softmax(qa @ ka.transpose(0, 1), dim=-1)
    return attn @ vb


class MultiFrameAttention(nn.Module):
    """Cross-attention fusion of the received reference with reconstruction history."""

    def __init__(self, channels: int, history_window: int = DEFAULT_HISTORY_WINDOW):
        super().__init__()
        self.channels = channels
        self.history_window = history_window
        self.q_ref = nn.Linear(channels, channels)
        self.k_ref = nn.Linear(channels, channels)
        self.v_ref = nn.Linear(channels, channels)
        self.q_pre = nn.Linear(channels, channels)
        self.k_pre = nn.Linear(channels, channels)
        self.v_pre = nn.Linear(channels, channels)
        self.fuse = nn.Linear(2 * channels, channels)
        self.csi_embed = nn.Linear(2, channels)
        # training starts from the exact pass-through of the received reference
        self.gamma = nn.Parameter(torch.zeros(()))

    @staticmethod
    def _tokens(latent: torch.Tensor) -> torch.Tensor:
        c = latent.shape[0]
        return latent.reshape(c, -1).transpose(0, 1)  # (h'*w', c)

    def forward(
        self,
        reference: torch.Tensor,
        history: FrameHistory | list[torch.Tensor],
        csi: ChannelDescriptor,
    ) -> torch.Tensor:
        if reference.ndim != 3 or reference.shape[0] != self.channels:
            raise ShapeError(
                f"reference latent must be ({self.channels}, h', w'), got "
                f"{tuple(reference.shape)}"
            )
        frames = history.frames if isinstance(history, FrameHistory) else list(history)
        for f in frames:
            if f.shape != reference.shape:
                raise ShapeError(
                    f"history latent {tuple(f.shape)} does not match reference "
                    f"{tuple(reference.shape)}"
                )
        if not frames:
            frames = [reference]  # degenerate-history fallback for the first P frame

        dtype = reference.dtype
        ref_tokens = self._tokens(reference)
        hw = ref_tokens.shape[0]
        csi_vec = self.csi_embed(
            torch.tensor([csi.mean_fading_power, csi.noise_variance], dtype=dtype)
        )
        ref_in = ref_tokens + csi_vec
        pre_in = torch.cat([self._tokens(f) for f in frames], dim=0)  # (J*hw, c)

        qr, kr, vr = self.q_ref(ref_in), self.k_ref(ref_in), self.v_ref(ref_in)
        qp, kp, vp = self.q_pre(pre_in), self.k_pre(pre_in), self.v_pre(pre_in)

        polished_ref = cross_attend(qr, kp, vp)  # (hw, c)
        polished_pre = cross_attend(qp, kr, vr)  # (J*hw, c)
        polished_pre = polished_pre.reshape(len(frames), hw, self.channels).mean(dim=0)

        fused = self.fuse(torch.cat([polished_pre, polished_ref], dim=-1))
        out_tokens = ref_tokens + self.gamma * fused
        return out_tokens.transpose(0, 1).reshape(reference.shape)


def compensate_reference(
    reference: torch.Tensor,
    history: FrameHistory | list[torch.Tensor],
    csi: ChannelDescriptor,
    mfa: MultiFrameAttention,
) -> torch.Tensor:
    """Polish the received reference latent toward the current frame."""
    return mfa(reference, history, csi)
