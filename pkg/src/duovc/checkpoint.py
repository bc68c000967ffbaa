"""Model checkpoint format (magic ``DVCM``).

Layout, all little-endian:

    "DVCM" | u32 version | u32 json_len | json bytes | tensor*
    tensor := u32 name_len | name bytes (utf-8) | u32 ndim | u32 dims[ndim] | f32 data

The JSON blob holds the model config and the training step count with
sorted keys, so save -> load -> save is byte-identical.  Only inference
parameters are stored; the predictive-coding heads are train-time only.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import from_dict, to_dict
from .errors import FormatError
from .model import ConversionModel, ModelConfig
from .tensor import Tensor

MAGIC = b"DVCM"
VERSION = 1


def save_checkpoint(path, model: ConversionModel, step: int = 0) -> None:
    blob = json.dumps({"model_config": to_dict(model.cfg), "train_step": int(step)},
                      sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, p in model.inference_parameters():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            arr = np.ascontiguousarray(p.data, dtype="<f4")
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated checkpoint: wanted {n} bytes for {what} "
                          f"at offset {f.tell() - len(data)}, got {len(data)}")
    return data


def load_checkpoint(path) -> tuple[ConversionModel, int]:
    """Rebuild the model from a checkpoint; round-trips bit-exactly."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}, expected {VERSION}")
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4, "config length"))
        try:
            meta = json.loads(_read_exact(f, blob_len, "config blob").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"corrupt config blob: {exc}") from exc
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError(f"truncated tensor header at offset {f.tell() - len(head)}")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(f, name_len, "tensor name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, f"ndim of {name}"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"dims of {name}"))
            count = int(np.prod(dims)) if ndim else 1
            payload = _read_exact(f, 4 * count, f"data of {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)

    cfg = from_dict(ModelConfig, meta.get("model_config", {}))
    model = ConversionModel(cfg)
    expected = dict(model.inference_parameters())
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise FormatError(f"parameter set mismatch: missing {sorted(missing)}, "
                          f"unexpected {sorted(extra)}")
    replacements = {}
    for name, arr in tensors.items():
        if arr.shape != expected[name].shape:
            raise FormatError(f"tensor {name}: stored shape {arr.shape} != "
                              f"model shape {expected[name].shape}")
        replacements[name] = Tensor(arr, requires_grad=True)
    model.replace_parameters(replacements)
    return model, int(meta.get("train_step", 0))
