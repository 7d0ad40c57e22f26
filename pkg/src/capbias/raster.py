"""8-bit raster I/O (binary PGM/PPM) and display transfer curves.

Rasters are numpy uint8 arrays, (h, w) for gray or (h, w, 3) for RGB.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAXVAL = 255


def _validate(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ValueError(f"raster must be uint8, got {arr.dtype}")
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr
    raise ValueError(f"raster must be (h, w) or (h, w, 3), got shape {arr.shape}")


def write_raster(img: np.ndarray, path: str | Path) -> None:
    """Write gray rasters as binary PGM (P5), RGB as binary PPM (P6)."""
    arr = _validate(img)
    magic = b"P5" if arr.ndim == 2 else b"P6"
    h, w = arr.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, MAXVAL)
    Path(path).write_bytes(header + arr.tobytes())


def read_raster(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    channels = 1 if data[:2] == b"P5" else 3

    # Header tokens may be separated by arbitrary whitespace and comments.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated header")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = tokens
    if maxval != MAXVAL:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    count = w * h * channels
    pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    if pixels.size != count:
        raise ValueError(f"{path}: pixel data truncated")
    if channels == 1:
        return pixels.reshape(h, w).copy()
    return pixels.reshape(h, w, 3).copy()


# Transfer curves map encoded [0, 1] <-> scene-linear [0, 1].

def srgb_to_linear(encoded: np.ndarray) -> np.ndarray:
    e = np.asarray(encoded, dtype=np.float64)
    return np.where(e <= 0.04045, e / 12.92, ((e + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    l = np.asarray(linear, dtype=np.float64)
    return np.where(l <= 0.0031308, l * 12.92, 1.055 * np.maximum(l, 0) ** (1 / 2.4) - 0.055)


def gamma22_to_linear(encoded: np.ndarray) -> np.ndarray:
    return np.asarray(encoded, dtype=np.float64) ** 2.2


def linear_to_gamma22(linear: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(linear, dtype=np.float64), 0) ** (1 / 2.2)


TRANSFERS = {
    "srgb": (srgb_to_linear, linear_to_srgb),
    "gamma22": (gamma22_to_linear, linear_to_gamma22),
    "linear": (lambda x: np.asarray(x, dtype=np.float64), lambda x: np.asarray(x, dtype=np.float64)),
}


def decode_transfer(img: np.ndarray, model: str) -> np.ndarray:
    """uint8 raster -> linear float in [0, 1]."""
    try:
        to_linear, _ = TRANSFERS[model]
    except KeyError:
        raise ValueError(f"unknown transfer model {model!r}") from None
    return to_linear(_validate(img).astype(np.float64) / MAXVAL)


def encode_transfer(linear: np.ndarray, model: str) -> np.ndarray:
    """Linear float -> uint8 raster, clipping to [0, 1] before encoding."""
    try:
        _, from_linear = TRANSFERS[model]
    except KeyError:
        raise ValueError(f"unknown transfer model {model!r}") from None
    encoded = from_linear(np.clip(linear, 0.0, 1.0))
    return np.rint(np.clip(encoded, 0.0, 1.0) * MAXVAL).astype(np.uint8)
