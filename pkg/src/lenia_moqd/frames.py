"""Rollout frame export: raw binary files and per-channel grayscale PNGs.

Binary layout ("LENF"): 16-byte header -- 4-byte magic b"LENF", then
unsigned 32-bit little-endian height, width, channels -- followed by the
frames as little-endian float32, one frame after another, channel-major
within a frame (C row-major H*W planes).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

LENF_MAGIC = b"LENF"
_HEADER = struct.Struct("<4sIII")


def write_lenf(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise ValueError("frames must have shape (T+1, C, H, W)")
    n, c, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(LENF_MAGIC, h, w, c))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_lenf(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, h, w, c = _HEADER.unpack(f.read(_HEADER.size))
        if magic != LENF_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {LENF_MAGIC!r}")
        data = np.frombuffer(f.read(), dtype="<f4")
    frame_size = h * w * c
    if data.size % frame_size != 0:
        raise ValueError("truncated frame data")
    return data.reshape(data.size // frame_size, c, h, w)


def quantize_frame(frame: np.ndarray) -> np.ndarray:
    """8-bit quantization used for PNGs and the complexity metric."""
    return np.round(np.asarray(frame) * 255.0).astype(np.uint8)


def write_frame_pngs(out_dir, frames: np.ndarray, stem: str = "frame") -> list:
    """One grayscale PNG per frame per channel: <stem>_tTTTT_cC.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(np.asarray(frames)):
        for c, plane in enumerate(frame):
            p = out_dir / f"{stem}_t{t:04d}_c{c}.png"
            Image.fromarray(quantize_frame(plane), mode="L").save(p)
            paths.append(p)
    return paths
