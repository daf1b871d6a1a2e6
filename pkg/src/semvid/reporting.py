"""Figure rendering for report CSVs.

Derived solely from the delimited output: every evaluate/sweep command that
writes a report CSV also renders PSNR and MS-SSIM curves against the sweep
axis next to it (per-GoP points plus the mean line).
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InputDataError

_AXIS_LABELS = {"snr_db": "SNR (dB)", "cbr": "channel bandwidth ratio", "gop_size": "GoP size"}


def read_report_csv(path: str) -> tuple[list[dict], list[dict]]:
    """Split a report CSV into (frame rows, aggregate rows) of parsed dicts."""
    frame_rows, agg_rows = [], []
    with open(path, newline="", encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            row = {
                "axis": float(raw["axis"]),
                "gop_index": int(raw["gop_index"]),
                "frame_index": int(raw["frame_index"]) if raw["frame_index"] != "" else None,
                "psnr": float(raw["psnr"]),
                "ms_ssim": float(raw["ms_ssim"]),
                "lpips": float(raw["lpips"]) if raw["lpips"] != "" else None,
            }
            (agg_rows if row["frame_index"] is None else frame_rows).append(row)
    if not agg_rows:
        raise InputDataError(f"report {path!r} has no aggregate rows")
    return frame_rows, agg_rows


def _figure(agg_rows: list[dict], metric: str, axis_name: str, out_path: str) -> str:
    by_axis: dict[float, list[float]] = defaultdict(list)
    for row in agg_rows:
        by_axis[row["axis"]].append(row[metric])
    axes = sorted(by_axis)
    means = [float(np.mean(by_axis[a])) for a in axes]

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for a in axes:
        ax.plot([a] * len(by_axis[a]), by_axis[a], "o", color="#7aa6c2", alpha=0.45, ms=4)
    ax.plot(axes, means, "-o", color="#1f4e79", lw=1.8, ms=5, label="mean over GoPs")
    ax.set_xlabel(_AXIS_LABELS.get(axis_name, axis_name))
    ax.set_ylabel("PSNR (dB)" if metric == "psnr" else "MS-SSIM")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)
    return out_path


def render_report_figures(csv_path: str, axis_name: str | None = None) -> list[str]:
    """Render <stem>_psnr.png and <stem>_ms_ssim.png next to the CSV."""
    _, agg_rows = read_report_csv(csv_path)
    if axis_name is None:
        manifest = os.path.splitext(csv_path)[0] + ".manifest.json"
        axis_name = "axis"
        if os.path.exists(manifest):
            import json

            axis_name = json.load(open(manifest)).get("axis_name", "axis")
    stem = os.path.splitext(csv_path)[0]
    return [
        _figure(agg_rows, "psnr", axis_name, stem + "_psnr.png"),
        _figure(agg_rows, "ms_ssim", axis_name, stem + "_ms_ssim.png"),
    ]
