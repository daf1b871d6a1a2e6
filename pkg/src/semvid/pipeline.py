"""End-to-end learned transceiver over one GoP plus symbol-rate planning.

Per GoP: the first frame's latent (the reference) is transmitted whole over
the fading channel with MMSE equalization; every later frame is reduced to
a channel-compressed residual against a motion-compensated prediction from
the reference. One channel realization is sampled per GoP and shared by the
reference and all residual transmissions (residuals occupy the leading
symbol positions). At the receiver the reference is polished by the
multi-frame attention compensator using previously reconstructed latents,
re-predicted by the receiver-side motion coder, and completed with the
decoded residual.

The channel bandwidth ratio counts real channel uses:
    cbr = (L + (N - 1) * L1) / (N * H * W * 3)
with L / L1 the I-frame / per-P-frame real symbol budgets, both multiples
of the latent grid size (rate control is by latent channel count).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import torch
from torch import nn

from .channel import ChannelRealization, sample_channel, transmit_vector
from .errors import CapacityError, ConfigError, RateInfeasibleError, ShapeError
from .mfc import ChannelDescriptor, FrameHistory, MultiFrameAttention
from .metrics import config_hash
from .semcodec import DOWNSAMPLE_FACTOR, SemanticCodec
from .semvideo import ResidualDecoder, ResidualEncoder, VideoCoder
from .videoio import VideoGoP


def parse_ratio(ratio) -> Fraction:
    """Accept Fraction, int, (num, den), or '4:1' style strings."""
    if isinstance(ratio, Fraction):
        f = ratio
    elif isinstance(ratio, int):
        f = Fraction(ratio)
    elif isinstance(ratio, (tuple, list)) and len(ratio) == 2:
        f = Fraction(int(ratio[0]), int(ratio[1]))
    elif isinstance(ratio, str):
        num, _, den = ratio.partition(":")
        f = Fraction(int(num), int(den or "1"))
    else:
        raise ConfigError(f"cannot interpret rate ratio {ratio!r}")
    if f <= 0:
        raise ConfigError(f"rate ratio must be positive, got {f}")
    return f


def compute_cbr(L: int, L1: int, n_frames: int, dims: tuple[int, int]) -> float:
    """Channel bandwidth ratio in real channel uses per source dimension."""
    h, w = dims
    return (L + (n_frames - 1) * L1) / (n_frames * h * w * 3)


@dataclass(frozen=True)
class RatePlan:
    """Resolved per-frame symbol budgets under a target bandwidth ratio."""

    target_cbr: float
    ratio: Fraction
    granularity: int  # latent positions per channel: (H/4) * (W/4)
    n_frames: int
    frame_dims: tuple[int, int]
    L: int  # I-frame real symbols
    L1: int  # per-P-frame real symbols
    achieved_cbr: float

    @property
    def i_channels(self) -> int:
        return self.L // self.granularity

    @property
    def p_channels(self) -> int:
        return self.L1 // self.granularity

    def to_dict(self) -> dict:
        return {
            "target_cbr": self.target_cbr,
            "ratio": f"{self.ratio.numerator}:{self.ratio.denominator}",
            "granularity": self.granularity,
            "n_frames": self.n_frames,
            "frame_dims": list(self.frame_dims),
            "L": self.L,
            "L1": self.L1,
            "achieved_cbr": self.achieved_cbr,
        }


def latent_granularity(dims: tuple[int, int]) -> int:
    h, w = dims
    return (h // DOWNSAMPLE_FACTOR) * (w // DOWNSAMPLE_FACTOR)


def plan_rates(
    target_cbr: float,
    ratio,
    dims: tuple[int, int],
    n_frames: int,
    granularity: int | None = None,
) -> RatePlan:
    """Choose the largest (L, L1) with L/L1 = ratio, both even multiples of
    the granularity, whose bandwidth ratio stays within ``target_cbr``."""
    if target_cbr <= 0:
        raise ConfigError("target_cbr must be positive")
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    ratio = parse_ratio(ratio)
    g = latent_granularity(dims) if granularity is None else int(granularity)
    p, q = ratio.numerator, ratio.denominator
    h, w = dims
    denom = n_frames * h * w * 3
    per_unit = g * (p + (n_frames - 1) * q)  # real symbols per GoP at t = 1

    # smallest multiplier keeping both budgets even
    step = 1 if (p * g) % 2 == 0 and (q * g) % 2 == 0 else 2
    t_cap = int(target_cbr * denom // per_unit)
    t = (t_cap // step) * step
    if t < step:
        min_cbr = step * per_unit / denom
        raise RateInfeasibleError(
            f"target cbr {target_cbr} infeasible for ratio {p}:{q} at granularity {g}; "
            f"minimum achievable cbr is {min_cbr:.6g}",
            min_achievable_cbr=min_cbr,
        )
    L, L1 = p * t * g, q * t * g
    return RatePlan(
        target_cbr=float(target_cbr),
        ratio=ratio,
        granularity=g,
        n_frames=n_frames,
        frame_dims=(h, w),
        L=L,
        L1=L1,
        achieved_cbr=compute_cbr(L, L1, n_frames, dims),
    )


def plan_from_channels(
    i_channels: int,
    p_channels: int,
    dims: tuple[int, int],
    n_frames: int,
) -> RatePlan:
    """Rate plan implied by fixed latent/residual channel counts (used when
    re-evaluating a trained model at a different GoP size)."""
    g = latent_granularity(dims)
    L, L1 = i_channels * g, p_channels * g
    if L % 2 or L1 % 2:
        raise ConfigError(f"symbol budgets must be even, got L={L}, L1={L1}")
    achieved = compute_cbr(L, L1, n_frames, dims)
    return RatePlan(
        target_cbr=achieved,
        ratio=Fraction(i_channels, p_channels),
        granularity=g,
        n_frames=n_frames,
        frame_dims=tuple(dims),
        L=L,
        L1=L1,
        achieved_cbr=achieved,
    )


@dataclass
class TransceiverConfig:
    """Architecture hyperparameters for one trained system."""

    i_channels: int
    p_channels: int
    codec_width: int = 32
    coder_width: int = 32
    offset_channels: int = 16
    history_window: int = 3
    profile: str = "tiny"
    seed: int = 0
    identity_init: bool = False

    def __post_init__(self):
        if self.p_channels > self.i_channels:
            raise ConfigError("p_channels cannot exceed i_channels")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class VideoTransceiver(nn.Module):
    """All learnable pieces of the learned pipeline in one module."""

    def __init__(self, config: TransceiverConfig):
        super().__init__()
        torch.manual_seed(config.seed)
        self.config = config
        c = config.i_channels
        self.codec = SemanticCodec(c, width=config.codec_width, profile=config.profile)
        self.coder_tx = VideoCoder(c, config.offset_channels, config.coder_width)
        self.coder_rx = VideoCoder(c, config.offset_channels, config.coder_width)
        self.res_encoder = ResidualEncoder(c, config.p_channels, config.identity_init)
        self.res_decoder = ResidualDecoder(c, config.p_channels, config.identity_init)
        self.mfa = MultiFrameAttention(c, config.history_window)


def build_transceiver(config: TransceiverConfig) -> VideoTransceiver:
    return VideoTransceiver(config)


@dataclass
class FrameRecord:
    """Per-frame intermediates kept for analysis (detached tensors)."""

    latent: torch.Tensor  # f_i at the encoder
    latent_hat: torch.Tensor  # reconstructed latent at the receiver
    prediction_tx: torch.Tensor | None = None  # transmitter-side prediction
    prediction_rx: torch.Tensor | None = None  # receiver-side prediction
    polished: torch.Tensor | None = None  # compensated reference
    residual: torch.Tensor | None = None
    residual_hat: torch.Tensor | None = None


@dataclass
class GopTransmissionResult:
    raw_frames: torch.Tensor  # (I, 3, H, W), unclamped decoder output
    records: list[FrameRecord]
    realization: ChannelRealization
    plan: RatePlan
    snr_db: float
    seed: int
    symbols_used: int  # real channel uses consumed by this GoP
    _reconstructed: VideoGoP | None = field(default=None, repr=False)

    @property
    def reconstructed(self) -> VideoGoP:
        """Clamped [0,1] reconstruction as a numpy GoP."""
        if self._reconstructed is None:
            frames = (
                self.raw_frames.detach().clamp(0.0, 1.0).permute(0, 2, 3, 1).cpu().numpy()
            )
            self._reconstructed = VideoGoP(frames.astype(np.float32))
        return self._reconstructed


def _validate_plan(gop: VideoGoP, model: VideoTransceiver, plan: RatePlan) -> None:
    dims = gop.frame_dims
    if tuple(plan.frame_dims) != dims:
        raise ShapeError(f"plan dims {plan.frame_dims} differ from GoP dims {dims}")
    g = latent_granularity(dims)
    if plan.granularity != g:
        raise ConfigError(f"plan granularity {plan.granularity} != latent grid {g}")
    if plan.i_channels != model.config.i_channels or plan.p_channels != model.config.p_channels:
        raise ConfigError(
            f"plan channels ({plan.i_channels}, {plan.p_channels}) do not match model "
            f"({model.config.i_channels}, {model.config.p_channels})"
        )


def transmit_gop(
    gop: VideoGoP,
    model: VideoTransceiver,
    plan: RatePlan,
    snr_db: float,
    seed: int,
    training: bool = False,
    disable_mfc: bool = False,
    iframe_only: bool = False,
) -> GopTransmissionResult:
    """Send one GoP end to end and reconstruct it.

    ``training=True`` keeps the autograd graph on ``raw_frames`` (loss is
    taken on the unclamped decoder output); evaluation runs under no_grad.
    ``disable_mfc`` bypasses the attention compensator (reference passes
    through untouched); ``iframe_only`` transmits nothing but the reference
    and reconstructs every frame from it.
    """
    _validate_plan(gop, model, plan)
    n_frames = gop.gop_size
    dtype = next(model.parameters()).dtype
    max_symbols = max(plan.L, plan.L1) // 2
    if plan.L > 2 * max_symbols or plan.L1 > 2 * max_symbols:
        raise CapacityError("symbol budget exceeds sampled realization")
    realization = sample_channel(seed, max_symbols, snr_db)
    csi = ChannelDescriptor(
        mean_fading_power=float(np.mean(np.abs(realization.fading) ** 2)),
        noise_variance=realization.noise_variance,
    )

    ctx = torch.enable_grad() if training else torch.no_grad()
    with ctx:
        x = torch.from_numpy(gop.frames).to(dtype).permute(0, 3, 1, 2)
        latents = model.codec.encode(x)  # (I, c, h', w')
        c, lh, lw = latents.shape[1:]
        f_ref = latents[0]

        f_ref_hat = transmit_vector(f_ref.reshape(-1), realization).reshape(c, lh, lw)
        recon_latents = [f_ref_hat]
        records = [FrameRecord(latent=f_ref.detach(), latent_hat=f_ref_hat.detach())]
        symbols_used = plan.L

        history = FrameHistory(window=model.config.history_window)
        if not iframe_only and n_frames > 1:
            # transmitter side is history-free: batch it across P frames
            ref_batch = f_ref.unsqueeze(0).expand(n_frames - 1, c, lh, lw)
            predictions_tx = model.coder_tx(latents[1:], ref_batch)
            residuals = latents[1:] - predictions_tx
            compressed = model.res_encoder(residuals)

        for i in range(1, n_frames):
            if iframe_only:
                latent_hat = f_ref_hat
                records.append(
                    FrameRecord(latent=latents[i].detach(), latent_hat=latent_hat.detach())
                )
            else:
                rc_hat = transmit_vector(
                    compressed[i - 1].reshape(-1), realization
                ).reshape_as(compressed[i - 1])
                symbols_used += plan.L1
                if disable_mfc:
                    polished = f_ref_hat
                else:
                    polished = model.mfa(f_ref_hat, history, csi)
                prediction_rx = model.coder_rx(
                    polished.unsqueeze(0), f_ref_hat.unsqueeze(0)
                ).squeeze(0)
                residual_hat = model.res_decoder(rc_hat.unsqueeze(0)).squeeze(0)
                latent_hat = prediction_rx + residual_hat
                history.push(latent_hat)
                records.append(
                    FrameRecord(
                        latent=latents[i].detach(),
                        latent_hat=latent_hat.detach(),
                        prediction_tx=predictions_tx[i - 1].detach(),
                        prediction_rx=prediction_rx.detach(),
                        polished=polished.detach(),
                        residual=residuals[i - 1].detach(),
                        residual_hat=residual_hat.detach(),
                    )
                )
            recon_latents.append(latent_hat)

        raw = model.codec.decode(torch.stack(recon_latents, dim=0))

    return GopTransmissionResult(
        raw_frames=raw,
        records=records,
        realization=realization,
        plan=plan,
        snr_db=float(snr_db),
        seed=seed,
        symbols_used=symbols_used,
    )


def build_run_manifest(
    plan: RatePlan,
    snr_db,
    seeds: dict,
    config: dict,
    checkpoint: str | None = None,
    extra: dict | None = None,
) -> dict:
    """Reproducibility record written next to every evaluation output."""
    manifest = {
        "plan": plan.to_dict(),
        "snr_db": snr_db,
        "seeds": seeds,
        "config": config,
        "config_hash": config_hash(config),
        "checkpoint": checkpoint,
        "split_policy": "contiguous-by-gop",
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(manifest: dict, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2, default=str)
        f.write("\n")
    return path
