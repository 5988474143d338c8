"""Binary PPM (P6) / PGM (P5) reading and writing, maxval 255."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _parse_header(buf: bytes):
    values, pos = [], 0
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise ValueError("truncated PNM header")
        values.append(m.group(1))
        pos = m.end()
    magic = values[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    width, height, maxval = (int(v) for v in values[1:])
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    # exactly one whitespace byte separates the header from the raster
    return magic, width, height, pos + 1


def read_pnm(path) -> np.ndarray:
    """Return uint8 array: H x W x 3 for P6, H x W for P5."""
    buf = Path(path).read_bytes()
    magic, width, height, offset = _parse_header(buf)
    channels = 3 if magic == b"P6" else 1
    n = width * height * channels
    raster = np.frombuffer(buf, dtype=np.uint8, count=n, offset=offset)
    if raster.size != n:
        raise ValueError(f"{path}: raster has {raster.size} bytes, expected {n}")
    return raster.reshape((height, width, 3) if channels == 3 else (height, width)).copy()


def write_ppm(path, rgb) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM needs an H x W x 3 array, got {rgb.shape}")
    h, w = rgb.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + _to_u8(rgb).tobytes())


def write_pgm(path, gray) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs an H x W array, got {gray.shape}")
    h, w = gray.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + _to_u8(gray).tobytes())


def _to_u8(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != np.uint8:
        if a.min() < 0 or a.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        a = a.astype(np.uint8)
    return np.ascontiguousarray(a)


def read_frame(path) -> np.ndarray:
    """PPM frame as float64 RGB in [0, 1]."""
    img = read_pnm(path)
    if img.ndim != 3:
        raise ValueError(f"{path} is not a colour (P6) image")
    return img.astype(np.float64) / 255.0


def read_labels(path) -> np.ndarray:
    img = read_pnm(path)
    if img.ndim != 2:
        raise ValueError(f"{path} is not a greyscale (P5) label map")
    return img.astype(np.int64)
