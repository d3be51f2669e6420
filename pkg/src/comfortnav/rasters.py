"""Binary PGM (grayscale) and PPM (color) raster I/O, maxval 255.

Images are numpy uint8 arrays: shape (H, W) for grayscale, (H, W, 3) for
color. Writers emit a fixed minimal header so identical arrays always
produce identical bytes.
"""

from __future__ import annotations

import numpy as np


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM expects a 2-D grayscale array")
    _write_netpbm(path, b"P5", image)


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM expects an (H, W, 3) color array")
    _write_netpbm(path, b"P6", image)


def write_raster(path, image: np.ndarray) -> None:
    """Dispatch on array shape: 2-D -> PGM, (H, W, 3) -> PPM."""
    if np.asarray(image).ndim == 2:
        write_pgm(path, image)
    else:
        write_ppm(path, image)


def _write_netpbm(path, magic: bytes, image: np.ndarray) -> None:
    if image.dtype != np.uint8:
        if np.any(image < 0) or np.any(image > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        image = image.astype(np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    magic, image = _read_netpbm(path)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM file: magic {magic!r}")
    return image


def read_ppm(path) -> np.ndarray:
    magic, image = _read_netpbm(path)
    if magic != b"P6":
        raise ValueError(f"not a binary PPM file: magic {magic!r}")
    return image


def read_raster(path) -> np.ndarray:
    """Read either format; returns (H, W) for PGM, (H, W, 3) for PPM."""
    return _read_netpbm(path)[1]


def _read_netpbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comment lines between header tokens
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = w * h * channels
    raw = data[pos:pos + expected]
    if len(raw) != expected:
        raise ValueError("truncated raster payload")
    image = np.frombuffer(raw, dtype=np.uint8)
    if channels == 1:
        return magic, image.reshape(h, w).copy()
    return magic, image.reshape(h, w, 3).copy()
