"""Frame quality metrics and delimited report emission.

PSNR uses the [0, 1] pixel scale with zero-error results capped at 100 dB
(the cap value itself marks capped rows; infinities never reach the CSV).
MS-SSIM follows the standard 5-scale form (11x11 Gaussian window, sigma 1.5,
K1 = 0.01, K2 = 0.03, luminance at the coarsest scale only); inputs too
small for 5 scales automatically use the deepest feasible scale count with
the weights renormalized to sum to one.

A perceptual metric is a pluggable adapter: any callable mapping two frames
to a scalar. Nothing ships one; the report column stays empty without it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.signal import convolve2d

from .errors import ShapeError

PSNR_CAP_DB = 100.0

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_K1 = 0.01
_K2 = 0.03
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5

LpipsAdapter = Callable[[np.ndarray, np.ndarray], float]

CSV_HEADER = "axis,gop_index,frame_index,psnr,ms_ssim,lpips"


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) on the [0,1] scale, capped at 100 dB for zero error."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def _gaussian_kernel(size: int = _WINDOW_SIZE, sigma: float = _WINDOW_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(coords**2) / (2.0 * sigma**2))
    return k / k.sum()


def _blur_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    tmp = convolve2d(img, kernel[:, None], mode="valid")
    return convolve2d(tmp, kernel[None, :], mode="valid")


def _ssim_maps(a: np.ndarray, b: np.ndarray, kernel: np.ndarray):
    c1 = _K1**2
    c2 = _K2**2
    mu_a = _blur_valid(a, kernel)
    mu_b = _blur_valid(b, kernel)
    var_a = _blur_valid(a * a, kernel) - mu_a * mu_a
    var_b = _blur_valid(b * b, kernel) - mu_b * mu_b
    cov = _blur_valid(a * b, kernel) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def feasible_scales(height: int, width: int, max_scales: int = 5) -> int:
    """Deepest scale count for which the 11x11 window still fits."""
    m = 0
    d = min(height, width)
    while m < max_scales and d >= _WINDOW_SIZE:
        m += 1
        d //= 2
    if m == 0:
        raise ShapeError(
            f"frames of size {height}x{width} are below the {_WINDOW_SIZE}px window"
        )
    return m


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def _ms_ssim_single(a: np.ndarray, b: np.ndarray, kernel: np.ndarray, scales: int) -> float:
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales], dtype=np.float64)
    weights = weights / weights.sum()
    factors = []
    for level in range(scales):
        lum, cs = _ssim_maps(a, b, kernel)
        if level < scales - 1:
            factors.append(max(float(cs.mean()), 0.0))
            a, b = _downsample2(a), _downsample2(b)
        else:
            factors.append(max(float((lum * cs).mean()), 0.0))
    return float(np.prod(np.asarray(factors) ** weights))


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale structural similarity in [0, 1], averaged over RGB channels."""
    a, b = _check_pair(a, b)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) frames, got {a.shape}")
    scales = feasible_scales(a.shape[0], a.shape[1])
    kernel = _gaussian_kernel()
    vals = [_ms_ssim_single(a[:, :, c], b[:, :, c], kernel, scales) for c in range(3)]
    return float(np.mean(vals))


@dataclass(frozen=True)
class FrameMetrics:
    axis: float
    gop_index: int
    frame_index: int
    psnr: float
    ms_ssim: float
    lpips: Optional[float] = None


@dataclass(frozen=True)
class GopMetrics:
    axis: float
    gop_index: int
    psnr: float
    ms_ssim: float
    lpips: Optional[float] = None


@dataclass
class MetricsReport:
    """Per-frame and per-GoP quality rows over one sweep axis."""

    axis_name: str  # "snr_db", "cbr", or "gop_size"
    frame_rows: list[FrameMetrics] = field(default_factory=list)
    gop_rows: list[GopMetrics] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add_gop(
        self,
        axis: float,
        gop_index: int,
        original: np.ndarray,
        reconstructed: np.ndarray,
        lpips: Optional[LpipsAdapter] = None,
    ) -> None:
        """Score one reconstructed GoP (frame stacks of shape (I, H, W, 3))."""
        if original.shape != reconstructed.shape:
            raise ShapeError(
                f"GoP shapes differ: {original.shape} vs {reconstructed.shape}"
            )
        rows = []
        for i in range(original.shape[0]):
            rows.append(
                FrameMetrics(
                    axis=axis,
                    gop_index=gop_index,
                    frame_index=i,
                    psnr=psnr(original[i], reconstructed[i]),
                    ms_ssim=ms_ssim(original[i], reconstructed[i]),
                    lpips=float(lpips(original[i], reconstructed[i])) if lpips else None,
                )
            )
        self.frame_rows.extend(rows)
        self.gop_rows.append(
            GopMetrics(
                axis=axis,
                gop_index=gop_index,
                psnr=float(np.mean([r.psnr for r in rows])),
                ms_ssim=float(np.mean([r.ms_ssim for r in rows])),
                lpips=float(np.mean([r.lpips for r in rows])) if lpips else None,
            )
        )

    def mean_psnr(self, axis: Optional[float] = None) -> float:
        rows = [r for r in self.gop_rows if axis is None or r.axis == axis]
        return float(np.mean([r.psnr for r in rows]))

    def axis_values(self) -> list[float]:
        seen = []
        for r in self.gop_rows:
            if r.axis not in seen:
                seen.append(r.axis)
        return seen


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.6f}"


def content_hash(data: bytes) -> str:
    """Git-style blob hash of raw bytes."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def config_hash(config: dict) -> str:
    return content_hash(json.dumps(config, sort_keys=True, default=str).encode())


def write_report(report: MetricsReport, path: str) -> str:
    """Write the fixed-schema CSV plus a JSON sidecar manifest.

    Row order is deterministic: all per-frame rows in insertion order, then
    all per-GoP aggregate rows (empty frame_index). Reruns over identical
    inputs produce byte-identical files.
    """
    lines = [CSV_HEADER]
    for r in report.frame_rows:
        lines.append(
            f"{_fmt(r.axis)},{r.gop_index},{r.frame_index},"
            f"{_fmt(r.psnr)},{_fmt(r.ms_ssim)},{_fmt(r.lpips)}"
        )
    for r in report.gop_rows:
        lines.append(f"{_fmt(r.axis)},{r.gop_index},,{_fmt(r.psnr)},{_fmt(r.ms_ssim)},{_fmt(r.lpips)}")
    body = "\n".join(lines) + "\n"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(body)
        manifest = {
            "axis_name": report.axis_name,
            "config": report.config,
            "config_hash": config_hash(report.config),
            "n_frame_rows": len(report.frame_rows),
            "n_gop_rows": len(report.gop_rows),
        }
        manifest_path = os.path.splitext(path)[0] + ".manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing report to {path!r}: {exc}") from exc
    return path
