"""Feature file format (magic ``DVCF``).

Layout, all little-endian:

    "DVCF" | u32 version | u32 T | u32 D | f32 hop_ms | f32 data[T * D] (row-major)

Round-trips are bit-exact; malformed files fail with the byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"DVCF"
VERSION = 1
HEADER = struct.Struct("<4sIIIf")


def write_features(path, frames: np.ndarray, hop_ms: float = 12.5) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ShapeError(f"feature files hold [T, D] matrices, got shape {frames.shape}")
    arr = np.ascontiguousarray(frames, dtype="<f4")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, arr.shape[0], arr.shape[1], hop_ms))
        f.write(arr.tobytes())


def read_features(path) -> tuple[np.ndarray, float]:
    """Returns (frames [T, D] float32, hop_ms)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"file too short for header: {len(raw)} bytes < {HEADER.size}")
    magic, version, t, d, hop_ms = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported feature file version {version} at offset 4")
    expected = HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise FormatError(f"payload length mismatch at offset {HEADER.size}: "
                          f"file has {len(raw)} bytes, header implies {expected}")
    frames = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(t, d)
    return frames.astype(np.float32), float(hop_ms)
