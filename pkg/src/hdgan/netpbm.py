"""Binary netpbm codecs: PGM (P5) for label masks, PPM (P6) for renders.

Writers emit the canonical header ``P5\\n<w> <h>\\n255\\n`` so outputs are
byte-reproducible; the reader accepts any legal whitespace/comment layout.
Only maxval 255 is supported.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError, IoError


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _parse_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Return (magic, width, height, maxval, payload offset)."""
    if len(data) < 2:
        raise FormatError(f"{path}: truncated netpbm header")
    magic = data[:2]
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated netpbm header")
        byte = data[pos : pos + 1]
        if byte == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise FormatError(f"{path}: unterminated comment")
            pos = end + 1
        elif byte.isspace():
            pos += 1
        elif byte.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            tokens.append(int(data[start:pos]))
        else:
            raise FormatError(f"{path}: unexpected byte {byte!r} in header")
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError(f"{path}: missing raster separator")
    width, height, maxval = tokens
    return magic, width, height, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a uint8 [H, W] array."""
    data = _read_bytes(path)
    magic, width, height, maxval, offset = _parse_header(data, path)
    if magic != b"P5":
        raise FormatError(f"{path}: expected P5, got {magic!r}")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    raster = data[offset:]
    if len(raster) != width * height:
        raise FormatError(
            f"{path}: raster is {len(raster)} bytes, expected {width * height}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.dtype != np.uint8:
        raise FormatError(f"PGM payload must be uint8 [H, W], got {labels.dtype} {labels.shape}")
    height, width = labels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    _write_bytes(path, header + labels.tobytes(order="C"))


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a uint8 [H, W, 3] array."""
    data = _read_bytes(path)
    magic, width, height, maxval, offset = _parse_header(data, path)
    if magic != b"P6":
        raise FormatError(f"{path}: expected P6, got {magic!r}")
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    raster = data[offset:]
    if len(raster) != width * height * 3:
        raise FormatError(
            f"{path}: raster is {len(raster)} bytes, expected {width * height * 3}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(rgb: np.ndarray, path) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise FormatError(f"PPM payload must be uint8 [H, W, 3], got {rgb.dtype} {rgb.shape}")
    height, width, _ = rgb.shape
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    _write_bytes(path, header + rgb.tobytes(order="C"))
