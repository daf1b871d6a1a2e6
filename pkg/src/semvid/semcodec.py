"""Semantic frame codec: maps RGB frames to/from spatial latent feature maps.

The latent grid is always (latent_channels, H/4, W/4); the flattened length
L = c * (H/4) * (W/4) is the per-frame symbol budget before channel pairing.
Rate control happens through ``latent_channels`` alone.

Two profiles:
  * ``tiny`` (default): two stride-2 conv stages with residual blocks and
    LeakyReLU, final 1x1 projection; decoder mirrors with nearest-neighbor
    upsampling. Trains in minutes on CPU.
  * ``windowed-attention`` (optional): the same downsampling skeleton with
    window-partitioned single-head self-attention blocks (2 per stage, 4
    stages). Heavier; not needed for the desk-scale experiments.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .videoio import DOWNSAMPLE_FACTOR

PROFILES = ("tiny", "windowed-attention")

_LEAKY_SLOPE = 0.2


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, zero_init_last: bool = False):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.LeakyReLU(_LEAKY_SLOPE)
        if zero_init_last:
            # block starts as an exact identity
            nn.init.zeros_(self.conv2.weight)
            nn.init.zeros_(self.conv2.bias)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class _WindowAttentionBlock(nn.Module):
    """Pre-norm single-head self-attention within non-overlapping square windows."""

    def __init__(self, channels: int, window: int):
        super().__init__()
        self.window = window
        self.norm1 = nn.LayerNorm(channels)
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)
        self.norm2 = nn.LayerNorm(channels)
        self.mlp = nn.Sequential(
            nn.Linear(channels, 2 * channels),
            nn.GELU(),
            nn.Linear(2 * channels, channels),
        )

    def forward(self, x):
        b, c, h, w = x.shape
        ws = self.window
        if h % ws or w % ws:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by window {ws}")
        # partition into (b * nWin, ws*ws, c) token groups
        t = x.reshape(b, c, h // ws, ws, w // ws, ws)
        t = t.permute(0, 2, 4, 3, 5, 1).reshape(-1, ws * ws, c)
        y = self.norm1(t)
        q, k, v = self.qkv(y).chunk(3, dim=-1)
        attn = torch.softmax(q @ k.transpose(-2, -1) / (c**0.5), dim=-1)
        t = t + self.proj(attn @ v)
        t = t + self.mlp(self.norm2(t))
        t = t.reshape(b, h // ws, w // ws, ws, ws, c).permute(0, 5, 1, 3, 2, 4)
        return t.reshape(b, c, h, w)


class _TinyEncoder(nn.Module):
    def __init__(self, width: int, out_channels: int):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
            ResidualBlock(width),
            ResidualBlock(width),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
            ResidualBlock(2 * width),
            ResidualBlock(2 * width),
        )
        self.head = nn.Conv2d(2 * width, out_channels, 1)

    def forward(self, x):
        return self.head(self.stem(x))


class _TinyDecoder(nn.Module):
    def __init__(self, width: int, in_channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, 2 * width, 1),
            ResidualBlock(2 * width),
            ResidualBlock(2 * width),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(2 * width, width, 3, padding=1),
            nn.LeakyReLU(_LEAKY_SLOPE),
            ResidualBlock(width),
            ResidualBlock(width),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(width, 3, 3, padding=1),
        )

    def forward(self, z):
        return self.body(z)


class _AttentionEncoder(nn.Module):
    def __init__(self, width: int, out_channels: int, window: int = 4):
        super().__init__()
        self.down1 = nn.Conv2d(3, width, 3, stride=2, padding=1)
        self.stage1 = nn.Sequential(*[_WindowAttentionBlock(width, window) for _ in range(2)])
        self.down2 = nn.Conv2d(width, 2 * width, 3, stride=2, padding=1)
        self.stages = nn.Sequential(
            *[_WindowAttentionBlock(2 * width, window) for _ in range(6)]
        )
        self.head = nn.Conv2d(2 * width, out_channels, 1)

    def forward(self, x):
        x = self.stage1(self.down1(x))
        x = self.stages(self.down2(x))
        return self.head(x)


class _AttentionDecoder(nn.Module):
    def __init__(self, width: int, in_channels: int, window: int = 4):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, 2 * width, 1)
        self.stages = nn.Sequential(
            *[_WindowAttentionBlock(2 * width, window) for _ in range(6)]
        )
        self.up1 = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(2 * width, width, 3, padding=1),
        )
        self.stage1 = nn.Sequential(*[_WindowAttentionBlock(width, window) for _ in range(2)])
        self.up2 = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(width, 3, 3, padding=1),
        )

    def forward(self, z):
        x = self.stages(self.proj(z))
        x = self.stage1(self.up1(x))
        return self.up2(x)


class SemanticCodec(nn.Module):
    """Encoder/decoder pair over the 4x-downsampled latent grid."""

    def __init__(self, latent_channels: int, width: int = 32, profile: str = "tiny"):
        super().__init__()
        if profile not in PROFILES:
            raise ConfigError(f"unknown codec profile {profile!r}, expected one of {PROFILES}")
        if latent_channels < 1:
            raise ConfigError("latent_channels must be >= 1")
        self.profile = profile
        self.latent_channels = latent_channels
        self.width = width
        if profile == "tiny":
            self.encoder = _TinyEncoder(width, latent_channels)
            self.decoder = _TinyDecoder(width, latent_channels)
        else:
            self.encoder = _AttentionEncoder(width, latent_channels)
            self.decoder = _AttentionDecoder(width, latent_channels)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, c, H/4, W/4)."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W), got {tuple(x.shape)}")
        if x.shape[2] % DOWNSAMPLE_FACTOR or x.shape[3] % DOWNSAMPLE_FACTOR:
            raise ShapeError(f"frame dims must be multiples of {DOWNSAMPLE_FACTOR}")
        return self.encoder(x)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """(B, c, h', w') -> (B, 3, 4h', 4w'), unclamped."""
        if z.ndim != 4 or z.shape[1] != self.latent_channels:
            raise ShapeError(
                f"expected (B, {self.latent_channels}, h', w'), got {tuple(z.shape)}"
            )
        return self.decoder(z)


def frame_to_tensor(frame: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, 3) [0,1] numpy frame -> (3, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(frame)).to(dtype).permute(2, 0, 1)


def tensor_to_frame(x: torch.Tensor) -> np.ndarray:
    """(3, H, W) tensor -> (H, W, 3) clamped numpy frame."""
    return x.detach().clamp(0.0, 1.0).permute(1, 2, 0).cpu().numpy()


def encode_frame(frame, codec: SemanticCodec) -> torch.Tensor:
    """Encode one frame (numpy (H,W,3) or tensor (3,H,W)) to a (c, h', w') latent."""
    if not torch.is_tensor(frame):
        frame = frame_to_tensor(frame, dtype=next(codec.parameters()).dtype)
    return codec.encode(frame.unsqueeze(0)).squeeze(0)


def decode_frame(latent: torch.Tensor, codec: SemanticCodec, clamp: bool = True):
    """Decode a (c, h', w') latent to an (H, W, 3) numpy frame (clamped) or raw tensor."""
    x = codec.decode(latent.unsqueeze(0)).squeeze(0)
    if clamp:
        return tensor_to_frame(x)
    return x
