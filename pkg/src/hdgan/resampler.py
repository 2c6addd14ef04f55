"""Deterministic nearest-neighbor and bilinear resampling.

Coordinates use pixel-center alignment: destination index i maps to source
coordinate (i + 0.5) * src / dst - 0.5. Nearest rounding resolves exact ties
toward the lower index; bilinear clamps its four-neighbor stencil at the
borders, so edge pixels replicate.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import ConfigError


class ResampleMode(Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


def source_coord(dst_index: int, dst_size: int, src_size: int) -> float:
    """Continuous source coordinate of one destination pixel center."""
    return (dst_index + 0.5) * src_size / dst_size - 0.5


def source_coords(dst_indices, dst_size: int, src_size: int) -> np.ndarray:
    idx = np.asarray(dst_indices, dtype=np.float64)
    return (idx + 0.5) * src_size / dst_size - 0.5


def nearest_indices(dst_indices, dst_size: int, src_size: int) -> np.ndarray:
    """Nearest source index per destination index, ties toward the lower."""
    coords = source_coords(dst_indices, dst_size, src_size)
    # round-half-down: ceil(x - 0.5)
    idx = np.ceil(coords - 0.5).astype(np.int64)
    return np.clip(idx, 0, src_size - 1)


def bilinear_coeffs(dst_indices, dst_size: int, src_size: int):
    """(lower index, upper index, upper weight) per destination index.

    Indices are clamped into the source range after the fractional weight is
    taken, which replicates border texels outside the source extent.
    """
    coords = source_coords(dst_indices, dst_size, src_size)
    lo = np.floor(coords).astype(np.int64)
    frac = coords - lo
    hi = np.clip(lo + 1, 0, src_size - 1)
    lo = np.clip(lo, 0, src_size - 1)
    return lo, hi, frac


def upsample_block(block: np.ndarray, dst_h: int, dst_w: int, mode: ResampleMode) -> np.ndarray:
    """Lift one [H, W, C] block to [dst_h, dst_w, C].

    Only upsampling (or identity) is supported; asking for a smaller output
    raises ConfigError. Bilinear accumulates in float64 and returns the
    input dtype for float inputs.
    """
    if block.ndim != 3:
        raise ConfigError(f"block must be 3-dimensional [H, W, C], got shape {block.shape}")
    src_h, src_w, _ = block.shape
    if dst_h < src_h or dst_w < src_w:
        raise ConfigError(
            f"downsampling not supported: {src_h}x{src_w} -> {dst_h}x{dst_w}"
        )
    rows = np.arange(dst_h)
    cols = np.arange(dst_w)
    if mode is ResampleMode.NEAREST:
        sr = nearest_indices(rows, dst_h, src_h)
        sc = nearest_indices(cols, dst_w, src_w)
        return block[np.ix_(sr, sc)].copy()
    r_lo, r_hi, wr = bilinear_coeffs(rows, dst_h, src_h)
    c_lo, c_hi, wc = bilinear_coeffs(cols, dst_w, src_w)
    v00 = block[np.ix_(r_lo, c_lo)].astype(np.float64)
    v01 = block[np.ix_(r_lo, c_hi)].astype(np.float64)
    v10 = block[np.ix_(r_hi, c_lo)].astype(np.float64)
    v11 = block[np.ix_(r_hi, c_hi)].astype(np.float64)
    wr = wr[:, None, None]
    wc = wc[None, :, None]
    top = v00 * (1.0 - wc) + v01 * wc
    bottom = v10 * (1.0 - wc) + v11 * wc
    out = top * (1.0 - wr) + bottom * wr
    if np.issubdtype(block.dtype, np.floating):
        return out.astype(block.dtype)
    return out
