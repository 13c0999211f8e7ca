"""File containers: flat little-endian float32 sidecar tensors, JSON
helpers, PNG export of image tensors."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "write_f32",
    "read_f32",
    "write_f64",
    "read_f64",
    "write_json",
    "read_json",
    "write_png",
    "read_png",
    "digest",
]


def write_f32(path, array: np.ndarray) -> None:
    """Raw little-endian float32 dump in C order; shape lives in the manifest."""
    a = np.ascontiguousarray(array, dtype="<f4")
    Path(path).write_bytes(a.tobytes())


def read_f32(path, shape) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} float32 values, found {raw.size}")
    return raw.reshape(shape).astype(np.float64)


def write_f64(path, array: np.ndarray) -> None:
    """Full-precision variant for soundness-carrying data (bound planes)."""
    a = np.ascontiguousarray(array, dtype="<f8")
    Path(path).write_bytes(a.tobytes())


def read_f64(path, shape) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} float64 values, found {raw.size}")
    return raw.reshape(shape).astype(np.float64)


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_png(path, image: np.ndarray) -> None:
    """Save an H x W (gray) or H x W x 3 (RGB) float tensor, clipped to [0,1]."""
    img = np.asarray(image, dtype=float)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(str(path), format="PNG")


def read_png(path) -> np.ndarray:
    img = np.asarray(Image.open(str(path)), dtype=np.float64) / 255.0
    return img


def digest(*parts) -> str:
    """Stable SHA-256 over byte/str/array/JSON-able parts, for cache keys."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            h.update(p)
        elif isinstance(p, str):
            h.update(p.encode())
        elif isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
            h.update(str(p.shape).encode())
        else:
            h.update(json.dumps(p, sort_keys=True).encode())
    return h.hexdigest()
