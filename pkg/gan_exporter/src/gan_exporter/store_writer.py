"""Writer for the hdgan feature-store layout.

Implements the published on-disk contract directly (no dependency on the
hdgan package): `.hdgf` block files carry a 64-byte little-endian header
(magic "HDGF", version 1, dtype 0 = float32, channels, height, width, zero
padding) followed by the row-major channel-last float32 payload, and
`manifest.json` records image size, class names, block layout, and per-image
files. `hdgan validate-store` is the conformance oracle.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HDGF"
FORMAT_VERSION = 1
DTYPE_F32 = 0
HEADER_BYTES = 64
_HEADER_STRUCT = struct.Struct("<4sIIIII")


def write_block_file(path: Path, array: np.ndarray) -> None:
    """Write one [H, W, C] float32 tensor as a .hdgf block file."""
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 3:
        raise ValueError(f"block must be [H, W, C], got shape {array.shape}")
    height, width, channels = array.shape
    header = _HEADER_STRUCT.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, channels, height, width)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * (HEADER_BYTES - _HEADER_STRUCT.size))
        fh.write(array.tobytes())


def read_block_file(path: Path) -> np.ndarray:
    """Read a .hdgf block back; used to prove the transposition is lossless."""
    raw = Path(path).read_bytes()
    magic, version, dtype, channels, height, width = _HEADER_STRUCT.unpack_from(raw, 0)
    if magic != MAGIC or version != FORMAT_VERSION or dtype != DTYPE_F32:
        raise ValueError(f"{path}: not a v1 float32 block file")
    payload = np.frombuffer(raw, dtype="<f4", offset=HEADER_BYTES)
    return payload.reshape(height, width, channels).copy()


def write_ppm(rgb: np.ndarray, path: Path) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    height, width, _ = rgb.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + rgb.tobytes())


def write_manifest(
    out_dir: Path,
    image_size: int,
    class_names: list[str],
    block_shapes: list[tuple[int, int]],  # (resolution, channels), coarse first
    images: list[dict],
) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "image_height": image_size,
        "image_width": image_size,
        "class_names": list(class_names),
        "blocks": [
            {"index": i, "height": res, "width": res, "channels": ch}
            for i, (res, ch) in enumerate(block_shapes)
        ],
        "images": images,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
