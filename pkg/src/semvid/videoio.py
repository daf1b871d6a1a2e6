"""Dataset ingestion, synthetic clip generation, GoP grouping, and splits.

Frames are numpy arrays of shape (H, W, 3) with float values in [0, 1].
8-bit image files are divided by 255 on load so every downstream loss and
metric lives on a single scale. Frame dimensions must be multiples of
``DOWNSAMPLE_FACTOR`` (the latent grid of the semantic codec is H/4 x W/4).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import InputDataError

DOWNSAMPLE_FACTOR = 4

IMAGE_EXTENSIONS = (".png", ".bmp")


def _validate_frames(frames: np.ndarray) -> None:
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise InputDataError(f"expected (I, H, W, 3) frame stack, got {frames.shape}")
    h, w = frames.shape[1], frames.shape[2]
    if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR or h == 0 or w == 0:
        raise InputDataError(
            f"frame dims {h}x{w} must be positive multiples of {DOWNSAMPLE_FACTOR}"
        )
    if not np.isfinite(frames).all():
        raise InputDataError("frames contain non-finite values")
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise InputDataError("frame values must lie in [0, 1]")


@dataclass
class VideoGoP:
    """One group of pictures: the transmission unit. frames: (I, H, W, 3)."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        _validate_frames(self.frames)

    @property
    def gop_size(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_dims(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass
class VideoSequence:
    """An ordered list of GoPs sharing gop_size and frame dimensions."""

    gops: list[VideoGoP] = field(default_factory=list)

    def __post_init__(self):
        if not self.gops:
            raise InputDataError("a video sequence needs at least one GoP")
        size = self.gops[0].gop_size
        dims = self.gops[0].frame_dims
        for g in self.gops:
            if g.gop_size != size or g.frame_dims != dims:
                raise InputDataError("all GoPs must share gop_size and frame dims")

    @property
    def n(self) -> int:
        return len(self.gops)

    @property
    def gop_size(self) -> int:
        return self.gops[0].gop_size

    @property
    def frame_dims(self) -> tuple[int, int]:
        return self.gops[0].frame_dims

    def all_frames(self) -> np.ndarray:
        return np.concatenate([g.frames for g in self.gops], axis=0)


def _list_image_files(path: str) -> list[str]:
    try:
        names = sorted(os.listdir(path))
    except OSError as exc:
        raise InputDataError(f"cannot list frame directory {path!r}: {exc}") from exc
    files = [os.path.join(path, n) for n in names if n.lower().endswith(IMAGE_EXTENSIONS)]
    if not files:
        raise InputDataError(f"no image files ({'/'.join(IMAGE_EXTENSIONS)}) in {path!r}")
    return files


def load_sequence(
    path: str,
    gop_size: int,
    crop: tuple[int, int] | None = None,
    seed: int = 0,
) -> VideoSequence:
    """Load lexicographically ordered frames and group them into GoPs.

    Trailing frames that do not fill a whole GoP are dropped. When ``crop``
    is given, one random crop offset is drawn per GoP (from ``seed``) and
    applied to every frame of that GoP.
    """
    if gop_size < 1:
        raise InputDataError("gop_size must be >= 1")
    files = _list_image_files(path)
    frames = []
    dims = None
    for f in files:
        with Image.open(f) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        if dims is None:
            dims = arr.shape
        elif arr.shape != dims:
            raise InputDataError(
                f"frame {f!r} has shape {arr.shape}, expected {dims} (all frames equal)"
            )
        frames.append(arr.astype(np.float32) / 255.0)
    if len(frames) < gop_size:
        raise InputDataError(
            f"{len(frames)} frames cannot fill a single GoP of size {gop_size}"
        )
    stack = np.stack(frames, axis=0)
    n_gops = stack.shape[0] // gop_size
    stack = stack[: n_gops * gop_size]

    rng = np.random.default_rng(seed)
    gops = []
    for gi in range(n_gops):
        chunk = stack[gi * gop_size : (gi + 1) * gop_size]
        if crop is not None:
            ch, cw = crop
            h, w = chunk.shape[1], chunk.shape[2]
            if ch > h or cw > w:
                raise InputDataError(f"crop {crop} exceeds frame dims {(h, w)}")
            oy = int(rng.integers(0, h - ch + 1))
            ox = int(rng.integers(0, w - cw + 1))
            chunk = chunk[:, oy : oy + ch, ox : ox + cw, :]
        gops.append(VideoGoP(np.ascontiguousarray(chunk)))
    return VideoSequence(gops)


def _draw_rect(canvas: np.ndarray, y: int, x: int, h: int, w: int, color: np.ndarray) -> None:
    hh, ww = canvas.shape[:2]
    y0, y1 = max(y, 0), min(y + h, hh)
    x0, x1 = max(x, 0), min(x + w, ww)
    if y0 < y1 and x0 < x1:
        canvas[y0:y1, x0:x1, :] = color


def _synthesize_gop(
    rng: np.random.Generator,
    gop_size: int,
    dims: tuple[int, int],
    static: bool,
) -> tuple[np.ndarray, dict]:
    h, w = dims
    background = rng.uniform(0.15, 0.85, size=3)
    n_shapes = int(rng.integers(1, 4))
    if static:
        velocity = (0, 0)
    else:
        # nonzero per-GoP velocity so motion estimation always has signal
        while True:
            velocity = (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
            if velocity != (0, 0):
                break
    shapes = []
    for _ in range(n_shapes):
        sh = int(rng.integers(max(3, h // 8), max(4, h // 3) + 1))
        sw = int(rng.integers(max(3, w // 8), max(4, w // 3) + 1))
        while True:
            color = rng.uniform(0.0, 1.0, size=3)
            if np.abs(color - background).max() >= 0.25:
                break
        y0 = int(rng.integers(0, h - sh + 1))
        x0 = int(rng.integers(0, w - sw + 1))
        shapes.append({"y0": y0, "x0": x0, "h": sh, "w": sw, "color": color})

    frames = np.empty((gop_size, h, w, 3), dtype=np.float32)
    for t in range(gop_size):
        canvas = np.broadcast_to(background, (h, w, 3)).astype(np.float32).copy()
        for s in shapes:
            _draw_rect(
                canvas,
                s["y0"] + t * velocity[0],
                s["x0"] + t * velocity[1],
                s["h"],
                s["w"],
                s["color"].astype(np.float32),
            )
        frames[t] = canvas
    meta = {"background": background, "velocity": velocity, "shapes": shapes}
    return frames, meta


def synthesize_moving_shapes(
    seed: int,
    n_gops: int,
    gop_size: int,
    dims: tuple[int, int] = (32, 32),
    static: bool = False,
) -> VideoSequence:
    """Deterministic synthetic clips: 1-3 rectangles gliding over a flat background.

    Each GoP draws its own background, shapes, and a constant integer
    pixel velocity shared by all shapes, so consecutive frames are related
    by small translational motion. ``static=True`` forces zero velocity.
    """
    seq, _ = synthesize_moving_shapes_with_meta(seed, n_gops, gop_size, dims, static)
    return seq


def synthesize_moving_shapes_with_meta(
    seed: int,
    n_gops: int,
    gop_size: int,
    dims: tuple[int, int] = (32, 32),
    static: bool = False,
) -> tuple[VideoSequence, list[dict]]:
    """Same as :func:`synthesize_moving_shapes` but also returns per-GoP shape metadata."""
    if n_gops < 1:
        raise InputDataError("n_gops must be >= 1")
    if gop_size < 1:
        raise InputDataError("gop_size must be >= 1")
    h, w = dims
    if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
        raise InputDataError(f"dims {dims} must be multiples of {DOWNSAMPLE_FACTOR}")
    rng = np.random.default_rng(seed)
    gops, metas = [], []
    for _ in range(n_gops):
        frames, meta = _synthesize_gop(rng, gop_size, dims, static)
        gops.append(VideoGoP(frames))
        metas.append(meta)
    return VideoSequence(gops), metas


def split_train_test(seq: VideoSequence, ratio: float) -> tuple[VideoSequence, VideoSequence]:
    """Split a sequence into (train, test) at GoP granularity.

    ``ratio`` is the train fraction. The split is contiguous and
    deterministic: the first GoPs train, the rest test, each side nonempty.
    """
    if not 0.0 < ratio < 1.0:
        raise InputDataError(f"ratio must be in (0, 1), got {ratio}")
    if seq.n < 2:
        raise InputDataError("need at least 2 GoPs to split")
    n_train = int(round(ratio * seq.n))
    n_train = min(max(n_train, 1), seq.n - 1)
    return VideoSequence(seq.gops[:n_train]), VideoSequence(seq.gops[n_train:])


def materialize_frames(seq: VideoSequence, directory: str) -> list[str]:
    """Write every frame of the sequence as 8-bit PNGs in GoP order.

    Returns the written file paths. Filenames are zero-padded so the
    lexicographic order of :func:`load_sequence` reproduces frame order.
    """
    os.makedirs(directory, exist_ok=True)
    paths = []
    idx = 0
    for gop in seq.gops:
        for frame in gop.frames:
            data = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
            p = os.path.join(directory, f"frame_{idx:06d}.png")
            Image.fromarray(data).save(p)
            paths.append(p)
            idx += 1
    return paths
