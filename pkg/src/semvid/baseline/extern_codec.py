"""Adapter for an external video codec binary behind the builtin interface.

The adapter exchanges raw 8-bit RGB frames through a temporary directory:
encode writes ``frame_%06d.rgb`` files (row-major RGB24) plus their
geometry, invokes the configured encode command, and reads back one
bitstream file; decode goes the other way. Command templates receive
``{input_dir}``, ``{output}``, ``{input}``, ``{output_dir}``, ``{width}``,
``{height}``, ``{frames}``, and ``{quality}`` placeholders. Every executed
command line is recorded for the run manifest.

Transported payloads are framed with a small CRC header so channel
corruption downgrades to a gray GoP with the corruption flag instead of
undefined decoder behavior (frame-level freeze needs the builtin codec).
"""

from __future__ import annotations

import os
import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputDataError, StreamError
from ..videoio import VideoGoP
from .dct_codec import DecodedGop

_WRAP_FMT = "<4sII"  # magic, payload length, payload crc32
_WRAP_MAGIC = b"SVXC"
_WRAP_LEN = struct.calcsize(_WRAP_FMT)


@dataclass
class ExternalCodec:
    """Subprocess-backed source codec (e.g. an H.264/H.265 encoder)."""

    encode_command: list[str]
    decode_command: list[str]
    command_log: list[str] = field(default_factory=list)

    def _run(self, template: list[str], mapping: dict) -> None:
        cmd = [part.format(**mapping) for part in template]
        self.command_log.append(" ".join(cmd))
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise InputDataError(
                f"external codec command failed ({proc.returncode}): "
                f"{' '.join(cmd)}\n{proc.stderr[-500:]}"
            )

    def encode(self, gop: VideoGoP, quality: int) -> bytes:
        h, w = gop.frame_dims
        with tempfile.TemporaryDirectory(prefix="semvid_xc_") as tmp:
            in_dir = os.path.join(tmp, "frames")
            os.makedirs(in_dir)
            for i, frame in enumerate(gop.frames):
                raw = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
                raw.tofile(os.path.join(in_dir, f"frame_{i:06d}.rgb"))
            out_file = os.path.join(tmp, "stream.bin")
            self._run(
                self.encode_command,
                {
                    "input_dir": in_dir,
                    "output": out_file,
                    "width": w,
                    "height": h,
                    "frames": gop.gop_size,
                    "quality": quality,
                },
            )
            with open(out_file, "rb") as f:
                return f.read()

    def decode(self, payload: bytes, dims: tuple[int, int], n_frames: int) -> VideoGoP:
        h, w = dims
        with tempfile.TemporaryDirectory(prefix="semvid_xc_") as tmp:
            in_file = os.path.join(tmp, "stream.bin")
            with open(in_file, "wb") as f:
                f.write(payload)
            out_dir = os.path.join(tmp, "frames")
            os.makedirs(out_dir)
            self._run(
                self.decode_command,
                {
                    "input": in_file,
                    "output_dir": out_dir,
                    "width": w,
                    "height": h,
                    "frames": n_frames,
                },
            )
            names = sorted(os.listdir(out_dir))
            if len(names) < n_frames:
                raise StreamError(
                    f"external decoder produced {len(names)} frames, expected {n_frames}"
                )
            frames = np.empty((n_frames, h, w, 3), dtype=np.float32)
            for i in range(n_frames):
                raw = np.fromfile(os.path.join(out_dir, names[i]), dtype=np.uint8)
                if raw.size != h * w * 3:
                    raise StreamError(f"frame {names[i]} has {raw.size} bytes, expected {h*w*3}")
                frames[i] = raw.reshape(h, w, 3).astype(np.float32) / 255.0
            return VideoGoP(frames)

    # bit-level wrappers used by the transmission chain
    def encode_to_bits(self, gop: VideoGoP, quality: int) -> np.ndarray:
        payload = self.encode(gop, quality)
        header = struct.pack(_WRAP_FMT, _WRAP_MAGIC, len(payload), zlib.crc32(payload))
        return np.unpackbits(np.frombuffer(header + payload, dtype=np.uint8))

    def decode_from_bits(
        self, bits: np.ndarray, dims: tuple[int, int], n_frames: int
    ) -> DecodedGop:
        data = np.packbits(np.asarray(bits, dtype=np.uint8) & 1).tobytes()
        gray = VideoGoP(np.full((n_frames, dims[0], dims[1], 3), 0.5, dtype=np.float32))
        if len(data) < _WRAP_LEN:
            return DecodedGop(gop=gray, corrupted=True, frames_decoded=0)
        magic, length, crc = struct.unpack(_WRAP_FMT, data[:_WRAP_LEN])
        payload = data[_WRAP_LEN : _WRAP_LEN + length]
        if magic != _WRAP_MAGIC or len(payload) != length or zlib.crc32(payload) != crc:
            return DecodedGop(gop=gray, corrupted=True, frames_decoded=0)
        try:
            gop = self.decode(payload, dims, n_frames)
        except (InputDataError, StreamError):
            return DecodedGop(gop=gray, corrupted=True, frames_decoded=0)
        return DecodedGop(gop=gop, corrupted=False, frames_decoded=n_frames)
