"""Tensor and depth-map file formats.

FCRNT1 binary layout (all little-endian)::

    bytes 0-5   b"FCRNT1"
    byte  6     element width in bytes (4 = float32, 8 = float64)
    bytes 7-38  four uint64 dims (N, C, H, W)
    rest        N*C*H*W IEEE-754 values, row-major

Depth maps may also be stored as 16-bit grayscale PNG with a sidecar text
file ``<name>.png.scale`` holding ``meters_per_unit=<float>``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"FCRNT1"
_HEADER = struct.Struct("<6sB4Q")
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

DEFAULT_METERS_PER_UNIT = 0.001


class FormatError(ValueError):
    pass


def as4d(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim > 4:
        raise FormatError(f"cannot store a {a.ndim}-D array as a 4-D tensor")
    return a.reshape((1,) * (4 - a.ndim) + a.shape)


def tensor_to_bytes(t: np.ndarray, width: int | None = None) -> bytes:
    t = as4d(t)
    if width is None:
        width = 4 if t.dtype == np.float32 else 8
    if width not in _DTYPES:
        raise FormatError(f"element width must be 4 or 8, got {width}")
    data = np.ascontiguousarray(t, dtype=_DTYPES[width])
    return _HEADER.pack(MAGIC, width, *data.shape) + data.tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header ({len(buf)} bytes)")
    magic, width, *dims = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if width not in _DTYPES:
        raise FormatError(f"unsupported element width {width}")
    count = int(np.prod(dims))
    expected = _HEADER.size + count * width
    if len(buf) != expected:
        raise FormatError(f"payload size {len(buf)} does not match dims {tuple(dims)} (expected {expected})")
    data = np.frombuffer(buf, dtype=_DTYPES[width], offset=_HEADER.size, count=count)
    return data.reshape(dims).astype(_DTYPES[width].newbyteorder("="))


def save_tensor(path, t: np.ndarray, width: int | None = None) -> None:
    Path(path).write_bytes(tensor_to_bytes(t, width))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".scale")


def save_depth_png(path, depth: np.ndarray, meters_per_unit: float = DEFAULT_METERS_PER_UNIT) -> None:
    """Write a (H, W) depth map in meters as 16-bit PNG plus its scale sidecar."""
    path = Path(path)
    d = np.asarray(depth, dtype=np.float64).squeeze()
    if d.ndim != 2:
        raise FormatError(f"depth map must be 2-D after squeezing, got shape {np.shape(depth)}")
    units = np.clip(np.rint(d / meters_per_unit), 0, 65535).astype(np.uint16)
    Image.fromarray(units).save(path)
    _sidecar(path).write_text(f"meters_per_unit={meters_per_unit!r}\n")


def load_depth_png(path) -> np.ndarray:
    path = Path(path)
    scale = DEFAULT_METERS_PER_UNIT
    sidecar = _sidecar(path)
    if sidecar.exists():
        cfg = parse_key_values(sidecar.read_text())
        scale = float(cfg["meters_per_unit"])
    units = np.asarray(Image.open(path), dtype=np.float64)
    if units.ndim != 2:
        raise FormatError(f"{path}: expected single-channel depth PNG, got shape {units.shape}")
    return units * scale


def load_depth(path) -> np.ndarray:
    """Load a depth map from either format and return it as (H, W) meters."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return load_depth_png(path)
    t = load_tensor(path)
    if t.shape[0] != 1 or t.shape[1] != 1:
        raise FormatError(f"{path}: depth tensor must have N = C = 1, got {t.shape}")
    return t[0, 0].astype(np.float64)


def load_rgb(path) -> np.ndarray:
    """Load an RGB image as a (1, 3, H, W) float array in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".png" or path.suffix.lower() in (".jpg", ".jpeg"):
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
        return img.transpose(2, 0, 1)[None]
    t = load_tensor(path).astype(np.float64)
    if t.shape[1] != 3:
        raise FormatError(f"{path}: rgb tensor must have 3 channels, got {t.shape}")
    return t[:1]


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
