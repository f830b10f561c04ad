"""Binary portable pixmap I/O (P6 color, P5 gray) and RGB565 conversion."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class ImageIoError(ValueError):
    pass


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as a binary P6 pixmap."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ImageIoError(f"expected (h, w, 3) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write an (h, w) uint8 array as a binary P5 graymap; bools map to 0/255."""
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ImageIoError(f"expected (h, w) uint8 or bool, got {img.shape} {img.dtype}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


_HEADER_RE = re.compile(rb"^(P[56])\s+(?:#[^\n]*\n\s*)?(\d+)\s+(\d+)\s+(\d+)\s")


def _read_pnm(path: str | Path, magic: bytes) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _HEADER_RE.match(data)
    if m is None or m.group(1) != magic:
        raise ImageIoError(f"{path}: not a binary {magic.decode()} pixmap")
    w, h, maxval = (int(m.group(i)) for i in (2, 3, 4))
    if maxval != 255:
        raise ImageIoError(f"{path}: only maxval 255 supported")
    channels = 3 if magic == b"P6" else 1
    raw = data[m.end() :]
    need = w * h * channels
    if len(raw) < need:
        raise ImageIoError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw[:need], dtype=np.uint8)
    return arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)


def read_ppm(path: str | Path) -> np.ndarray:
    return _read_pnm(path, b"P6")


def read_pgm(path: str | Path) -> np.ndarray:
    return _read_pnm(path, b"P5")


def rgb888_to_rgb565(image: np.ndarray) -> bytes:
    """Pack (h, w, 3) uint8 into little-endian RGB565 bytes (R high bits)."""
    img = np.asarray(image, dtype=np.uint16)
    value = ((img[..., 0] >> 3) << 11) | ((img[..., 1] >> 2) << 5) | (img[..., 2] >> 3)
    return value.astype("<u2").tobytes()


def rgb565_to_rgb888(data: bytes, height: int, width: int) -> np.ndarray:
    """Unpack little-endian RGB565 bytes into (h, w, 3) uint8 with bit replication."""
    value = np.frombuffer(data, dtype="<u2")
    if value.size != height * width:
        raise ImageIoError(f"RGB565 byte count {len(data)} != 2*{height}*{width}")
    value = value.reshape(height, width)
    r5 = (value >> 11) & 0x1F
    g6 = (value >> 5) & 0x3F
    b5 = value & 0x1F
    out = np.empty((height, width, 3), dtype=np.uint8)
    out[..., 0] = (r5 << 3) | (r5 >> 2)
    out[..., 1] = (g6 << 2) | (g6 >> 4)
    out[..., 2] = (b5 << 3) | (b5 >> 2)
    return out
