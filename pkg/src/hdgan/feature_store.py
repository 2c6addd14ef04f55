"""On-disk multi-resolution feature stores with memory-mapped access.

A store is a directory:

    manifest.json               image size, class names, block layout, images
    images/<id>/block_<k>.hdgf  one float32 tensor per (image, block)
    masks/<id>.pgm              optional ground-truth label masks
    renders/<id>.ppm            optional RGB renderings

Block file layout (little-endian), 64-byte header then payload:

    bytes  0-3   magic "HDGF"
    bytes  4-7   version  u32 = 1
    bytes  8-11  dtype    u32 = 0 (float32; field reserved for future widths)
    bytes 12-15  channels u32
    bytes 16-19  height   u32
    bytes 20-23  width    u32
    bytes 24-63  zero padding (keeps the payload 4 KiB page aligned when the
                 file starts at offset 0)
    bytes 64-    payload, height*width*channels float32, row-major,
                 channel-last

Payloads are mapped read-only and materialized lazily; per-block channel-last
layout makes one pixel's within-block features a single contiguous read.
Every gather and stream is mirrored into an AccessAccounting so memory
behavior is assertable in tests instead of relying on OS introspection.
"""

from __future__ import annotations

import json
import os
import re
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .annotations import ClassCatalog, SegmentationMask
from .errors import (
    BoundsError,
    ConfigError,
    DataError,
    FormatError,
    IoError,
    SchemaError,
)
from .resampler import ResampleMode, bilinear_coeffs, nearest_indices

MAGIC = b"HDGF"
FORMAT_VERSION = 1
DTYPE_F32 = 0
HEADER_BYTES = 64
PAGE_BYTES = 4096
MANIFEST_NAME = "manifest.json"

_HEADER_STRUCT = struct.Struct("<4sIIIII")
_ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class BlockSpec:
    """Resolution and channel count of one stored block; 0 is coarsest."""

    index: int
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise SchemaError(f"degenerate block spec {self}")


@dataclass
class ImageEntry:
    image_id: str
    block_files: list[str]
    mask_file: str | None = None
    render_file: str | None = None
    metadata: dict | None = None


@dataclass
class FeatureStoreManifest:
    image_height: int
    image_width: int
    class_names: tuple[str, ...]
    blocks: list[BlockSpec]
    images: list[ImageEntry]
    format_version: int = FORMAT_VERSION

    @property
    def feature_dim(self) -> int:
        return sum(b.channels for b in self.blocks)

    @property
    def image_ids(self) -> list[str]:
        return [entry.image_id for entry in self.images]

    def entry(self, image_id: str) -> ImageEntry:
        index = getattr(self, "_entry_index", None)
        if index is None:
            index = {e.image_id: e for e in self.images}
            self._entry_index = index
        try:
            return index[image_id]
        except KeyError:
            raise KeyError(image_id) from None

    def validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise FormatError(f"unsupported manifest version {self.format_version}")
        if self.image_height < 1 or self.image_width < 1:
            raise SchemaError("image dimensions must be positive")
        ClassCatalog(self.class_names)  # enforces count/uniqueness rules
        if not self.blocks:
            raise SchemaError("manifest must declare at least one block")
        for position, block in enumerate(self.blocks):
            if block.index != position:
                raise SchemaError(
                    f"block index {block.index} at position {position}; "
                    "blocks must be listed coarsest-first with indices 0..n-1"
                )
            if self.image_height % block.height or self.image_width % block.width:
                raise SchemaError(
                    f"block {block.index} is {block.height}x{block.width}, which "
                    f"does not divide the {self.image_height}x{self.image_width} image"
                )
        heights = [b.height for b in self.blocks]
        if heights != sorted(heights):
            raise SchemaError("block heights must be non-decreasing with index")
        seen: set[str] = set()
        for entry in self.images:
            if not entry.image_id or not _ID_PATTERN.match(entry.image_id):
                raise SchemaError(f"illegal image id {entry.image_id!r}")
            if entry.image_id in seen:
                raise SchemaError(f"duplicate image id {entry.image_id!r}")
            seen.add(entry.image_id)
            if len(entry.block_files) != len(self.blocks):
                raise SchemaError(
                    f"image {entry.image_id!r} lists {len(entry.block_files)} block "
                    f"files, manifest declares {len(self.blocks)} blocks"
                )

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "image_height": self.image_height,
            "image_width": self.image_width,
            "class_names": list(self.class_names),
            "blocks": [
                {
                    "index": b.index,
                    "height": b.height,
                    "width": b.width,
                    "channels": b.channels,
                }
                for b in self.blocks
            ],
            "images": [
                {
                    "image_id": e.image_id,
                    "block_files": list(e.block_files),
                    "mask_file": e.mask_file,
                    "render_file": e.render_file,
                    **({"metadata": e.metadata} if e.metadata is not None else {}),
                }
                for e in self.images
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureStoreManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        try:
            blocks = [
                BlockSpec(
                    index=int(b["index"]),
                    height=int(b["height"]),
                    width=int(b["width"]),
                    channels=int(b["channels"]),
                )
                for b in raw["blocks"]
            ]
            images = [
                ImageEntry(
                    image_id=str(e["image_id"]),
                    block_files=[str(p) for p in e["block_files"]],
                    mask_file=e.get("mask_file"),
                    render_file=e.get("render_file"),
                    metadata=e.get("metadata"),
                )
                for e in raw["images"]
            ]
            manifest = cls(
                image_height=int(raw["image_height"]),
                image_width=int(raw["image_width"]),
                class_names=tuple(str(n) for n in raw["class_names"]),
                blocks=blocks,
                images=images,
                format_version=int(raw["format_version"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"manifest missing or malformed field: {exc}") from exc
        manifest.validate()
        return manifest


@dataclass
class AccessAccounting:
    """Observable model of what a handle has pulled off disk.

    bytes_materialized_total counts 4 KiB file pages touched by gathers
    (the page-cache cost of an access pattern); bytes_live_peak tracks the
    largest feature buffer held at once, which is what a streaming chunk
    budget constrains. Mask reads and lazy volume mappings are logged so
    tests can assert locality and split hygiene.
    """

    bytes_materialized_total: int = 0
    bytes_live_peak: int = 0
    volume_opens: Counter = field(default_factory=Counter)
    mask_reads: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def note_pages(self, byte_count: int) -> None:
        with self._lock:
            self.bytes_materialized_total += int(byte_count)

    def note_live(self, byte_count: int) -> None:
        with self._lock:
            self.bytes_live_peak = max(self.bytes_live_peak, int(byte_count))

    def note_volume_open(self, relative_path: str) -> None:
        with self._lock:
            self.volume_opens[relative_path] += 1

    def note_mask_read(self, image_id: str) -> None:
        with self._lock:
            self.mask_reads.append(image_id)

    def reset(self) -> None:
        with self._lock:
            self.bytes_materialized_total = 0
            self.bytes_live_peak = 0


@dataclass
class RegionChunk:
    """One horizontal band of resampled features: [rows, width, D]."""

    row_start: int
    row_stop: int
    features: np.ndarray


def _write_block_file(path: Path, array: np.ndarray, spec: BlockSpec) -> None:
    header = _HEADER_STRUCT.pack(
        MAGIC, FORMAT_VERSION, DTYPE_F32, spec.channels, spec.height, spec.width
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * (HEADER_BYTES - _HEADER_STRUCT.size))
        fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_block_header(path: Path) -> tuple[int, int, int]:
    """Validate magic/version/dtype and return (channels, height, width)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER_STRUCT.size)
    except OSError as exc:
        raise IoError(f"cannot read block file {path}: {exc}") from exc
    if len(raw) < _HEADER_STRUCT.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dtype, channels, height, width = _HEADER_STRUCT.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    return channels, height, width


def _distinct(values: np.ndarray) -> int:
    if values.size == 0:
        return 0
    ordered = np.sort(values, kind="stable")
    return 1 + int((ordered[1:] != ordered[:-1]).sum())


def _touched_page_bytes(texel_indices: np.ndarray, channels: int) -> int:
    """Bytes of distinct file pages covered by the given texels."""
    texel_bytes = channels * 4
    start = HEADER_BYTES + texel_indices.reshape(-1) * texel_bytes
    first_page = start // PAGE_BYTES
    last_page = (start + texel_bytes - 1) // PAGE_BYTES
    span = (texel_bytes - 1) // PAGE_BYTES + 2  # max pages one texel covers
    if span == 2:
        pages = np.concatenate([first_page, last_page])
    else:
        pages = np.concatenate(
            [np.minimum(first_page + step, last_page) for step in range(span)]
        )
    return PAGE_BYTES * _distinct(pages)


class StoreHandle:
    """Read-only view of a store; volumes map lazily on first access.

    Safe to share across threads once opened: volumes are immutable maps and
    accounting updates are lock-protected.
    """

    def __init__(self, root: Path, manifest: FeatureStoreManifest):
        self.root = Path(root)
        self.manifest = manifest
        self.accounting = AccessAccounting()
        self._volumes: dict[tuple[str, int], np.memmap] = {}
        self._volume_lock = threading.Lock()
        # dst->src coordinate tables are identical for every image; cache
        # them per block axis so gathers are pure indexing
        self._nearest_luts: dict[tuple[int, int], np.ndarray] = {}
        self._bilinear_luts: dict[tuple[int, int], tuple] = {}

    def _nearest_lut(self, dst_size: int, src_size: int) -> np.ndarray:
        key = (dst_size, src_size)
        lut = self._nearest_luts.get(key)
        if lut is None:
            lut = nearest_indices(np.arange(dst_size), dst_size, src_size)
            self._nearest_luts[key] = lut
        return lut

    def _bilinear_lut(self, dst_size: int, src_size: int):
        key = (dst_size, src_size)
        lut = self._bilinear_luts.get(key)
        if lut is None:
            lut = bilinear_coeffs(np.arange(dst_size), dst_size, src_size)
            self._bilinear_luts[key] = lut
        return lut

    @property
    def feature_dim(self) -> int:
        return self.manifest.feature_dim

    @property
    def image_ids(self) -> list[str]:
        return self.manifest.image_ids

    @property
    def catalog(self) -> ClassCatalog:
        return ClassCatalog(self.manifest.class_names)

    def close(self) -> None:
        with self._volume_lock:
            self._volumes.clear()

    def volume(self, image_id: str, block_index: int) -> np.memmap:
        key = (image_id, block_index)
        with self._volume_lock:
            cached = self._volumes.get(key)
            if cached is not None:
                return cached
        entry = self.manifest.entry(image_id)
        spec = self.manifest.blocks[block_index]
        relative = entry.block_files[block_index]
        path = self.root / relative
        try:
            mapped = np.memmap(
                path,
                dtype="<f4",
                mode="r",
                offset=HEADER_BYTES,
                shape=(spec.height, spec.width, spec.channels),
            )
        except (OSError, ValueError) as exc:
            raise IoError(f"cannot map block file {path}: {exc}") from exc
        with self._volume_lock:
            self._volumes[key] = mapped
        self.accounting.note_volume_open(relative)
        return mapped

    def _check_pixels(self, rows: np.ndarray, cols: np.ndarray) -> None:
        h, w = self.manifest.image_height, self.manifest.image_width
        if rows.size == 0:
            return
        if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
            bad = np.flatnonzero((rows < 0) | (rows >= h) | (cols < 0) | (cols >= w))[0]
            raise BoundsError(
                f"pixel ({int(rows[bad])}, {int(cols[bad])}) outside {h}x{w} image"
            )

    def fetch_pixel_features(
        self,
        image_id: str,
        pixels,
        mode: ResampleMode = ResampleMode.NEAREST,
    ) -> np.ndarray:
        """Gather concatenated per-block features for a list of pixels.

        Returns float32 [N, D] in the order pixels were given; equals the
        full-upsample-then-gather result without ever building it.
        """
        pixel_array = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        rows, cols = pixel_array[:, 0], pixel_array[:, 1]
        self._check_pixels(rows, cols)
        self.manifest.entry(image_id)  # KeyError for unknown ids
        h, w = self.manifest.image_height, self.manifest.image_width
        out = np.empty((pixel_array.shape[0], self.feature_dim), dtype=np.float32)
        offset = 0
        for spec in self.manifest.blocks:
            vol = self.volume(image_id, spec.index)
            if mode is ResampleMode.NEAREST:
                sr = self._nearest_lut(h, spec.height)[rows]
                sc = self._nearest_lut(w, spec.width)[cols]
                out[:, offset : offset + spec.channels] = vol[sr, sc]
                touched = sr * spec.width + sc
            else:
                row_lut = self._bilinear_lut(h, spec.height)
                col_lut = self._bilinear_lut(w, spec.width)
                r_lo, r_hi, wr = (t[rows] for t in row_lut)
                c_lo, c_hi, wc = (t[cols] for t in col_lut)
                v00 = vol[r_lo, c_lo].astype(np.float64)
                v01 = vol[r_lo, c_hi].astype(np.float64)
                v10 = vol[r_hi, c_lo].astype(np.float64)
                v11 = vol[r_hi, c_hi].astype(np.float64)
                wr = wr[:, None]
                wc = wc[:, None]
                blend = (v00 * (1 - wc) + v01 * wc) * (1 - wr) + (
                    v10 * (1 - wc) + v11 * wc
                ) * wr
                out[:, offset : offset + spec.channels] = blend.astype(np.float32)
                touched = np.concatenate(
                    [
                        r_lo * spec.width + c_lo,
                        r_lo * spec.width + c_hi,
                        r_hi * spec.width + c_lo,
                        r_hi * spec.width + c_hi,
                    ]
                )
            self.accounting.note_pages(_touched_page_bytes(touched, spec.channels))
            offset += spec.channels
        self.accounting.note_live(out.nbytes)
        return out

    def stream_region_features(
        self,
        image_id: str,
        rect: tuple[int, int, int, int],
        mode: ResampleMode = ResampleMode.NEAREST,
        chunk_budget_bytes: int = 8 << 20,
    ):
        """Yield RegionChunk row bands covering `rect` top to bottom.

        rect is (row0, col0, height, width). Every yielded chunk holds at
        most chunk_budget_bytes of feature floats; a budget below one row
        raises ConfigError.
        """
        row0, col0, rect_h, rect_w = (int(v) for v in rect)
        if rect_h < 1 or rect_w < 1:
            raise BoundsError(f"empty rect {rect}")
        h, w = self.manifest.image_height, self.manifest.image_width
        if row0 < 0 or col0 < 0 or row0 + rect_h > h or col0 + rect_w > w:
            raise BoundsError(f"rect {rect} outside {h}x{w} image")
        self.manifest.entry(image_id)
        row_bytes = rect_w * self.feature_dim * 4
        rows_per_chunk = int(chunk_budget_bytes) // row_bytes
        if rows_per_chunk < 1:
            raise ConfigError(
                f"chunk budget {chunk_budget_bytes} below one row ({row_bytes} bytes)"
            )
        cols = np.arange(col0, col0 + rect_w, dtype=np.int64)
        for band_start in range(row0, row0 + rect_h, rows_per_chunk):
            band_stop = min(band_start + rows_per_chunk, row0 + rect_h)
            band_rows = np.arange(band_start, band_stop, dtype=np.int64)
            chunk = np.empty(
                (band_rows.size, rect_w, self.feature_dim), dtype=np.float32
            )
            offset = 0
            for spec in self.manifest.blocks:
                vol = self.volume(image_id, spec.index)
                if mode is ResampleMode.NEAREST:
                    sr = self._nearest_lut(h, spec.height)[band_rows]
                    sc = self._nearest_lut(w, spec.width)[cols]
                    chunk[:, :, offset : offset + spec.channels] = vol[np.ix_(sr, sc)]
                    touched = sr[:, None] * spec.width + sc[None, :]
                else:
                    row_lut = self._bilinear_lut(h, spec.height)
                    col_lut = self._bilinear_lut(w, spec.width)
                    r_lo, r_hi, wr = (t[band_rows] for t in row_lut)
                    c_lo, c_hi, wc = (t[cols] for t in col_lut)
                    v00 = vol[np.ix_(r_lo, c_lo)].astype(np.float64)
                    v01 = vol[np.ix_(r_lo, c_hi)].astype(np.float64)
                    v10 = vol[np.ix_(r_hi, c_lo)].astype(np.float64)
                    v11 = vol[np.ix_(r_hi, c_hi)].astype(np.float64)
                    wr = wr[:, None, None]
                    wc = wc[None, :, None]
                    top = v00 * (1 - wc) + v01 * wc
                    bottom = v10 * (1 - wc) + v11 * wc
                    chunk[:, :, offset : offset + spec.channels] = (
                        top * (1 - wr) + bottom * wr
                    ).astype(np.float32)
                    touched = np.concatenate(
                        [
                            r_lo[:, None] * spec.width + c_lo[None, :],
                            r_lo[:, None] * spec.width + c_hi[None, :],
                            r_hi[:, None] * spec.width + c_lo[None, :],
                            r_hi[:, None] * spec.width + c_hi[None, :],
                        ]
                    )
                self.accounting.note_pages(_touched_page_bytes(touched, spec.channels))
                offset += spec.channels
            self.accounting.note_live(chunk.nbytes)
            yield RegionChunk(band_start, band_stop, chunk)

    def mask_path(self, image_id: str) -> Path | None:
        entry = self.manifest.entry(image_id)
        return self.root / entry.mask_file if entry.mask_file else None

    def render_path(self, image_id: str) -> Path | None:
        entry = self.manifest.entry(image_id)
        return self.root / entry.render_file if entry.render_file else None

    def read_mask(self, image_id: str) -> SegmentationMask:
        """Read and validate the ground-truth mask; logged in accounting."""
        path = self.mask_path(image_id)
        if path is None:
            raise IoError(f"image {image_id!r} has no mask")
        if not path.exists():
            raise IoError(f"mask file missing: {path}")
        from .annotations import read_mask as _read

        mask = _read(path, self.catalog)
        if (mask.height, mask.width) != (
            self.manifest.image_height,
            self.manifest.image_width,
        ):
            raise SchemaError(
                f"mask for {image_id!r} is {mask.height}x{mask.width}, store is "
                f"{self.manifest.image_height}x{self.manifest.image_width}"
            )
        self.accounting.note_mask_read(image_id)
        return mask


def create_store(
    manifest: FeatureStoreManifest,
    block_data: dict,
    out_dir,
    masks: dict | None = None,
    renders: dict | None = None,
) -> StoreHandle:
    """Write a complete store and return a handle on it.

    block_data maps image_id to the list of per-block float arrays (shapes
    must match the manifest). Optional masks (uint8 [H, W]) and renders
    (uint8 [H, W, 3]) are written when the manifest references them.
    """
    manifest.validate()
    root = Path(out_dir)
    if root.exists():
        if not root.is_dir():
            raise IoError(f"{root} exists and is not a directory")
        if any(root.iterdir()):
            raise IoError(f"refusing to write into non-empty directory {root}")
    root.mkdir(parents=True, exist_ok=True)

    masks = masks or {}
    renders = renders or {}
    for entry in manifest.images:
        arrays = block_data.get(entry.image_id)
        if arrays is None:
            raise SchemaError(f"no block data for image {entry.image_id!r}")
        if len(arrays) != len(manifest.blocks):
            raise SchemaError(
                f"image {entry.image_id!r}: got {len(arrays)} blocks, "
                f"manifest declares {len(manifest.blocks)}"
            )
        for spec, array in zip(manifest.blocks, arrays):
            array = np.asarray(array)
            expected = (spec.height, spec.width, spec.channels)
            if array.shape != expected:
                raise SchemaError(
                    f"image {entry.image_id!r} block {spec.index}: shape "
                    f"{array.shape} != {expected}"
                )
            # check finiteness after the cast: a finite float64 can still
            # overflow to inf at float32
            with np.errstate(over="ignore"):
                array = np.ascontiguousarray(array, dtype="<f4")
            if not np.isfinite(array).all():
                raise DataError(
                    f"image {entry.image_id!r} block {spec.index}: non-finite values"
                )
            _write_block_file(root / entry.block_files[spec.index], array, spec)
        if entry.mask_file:
            mask = masks.get(entry.image_id)
            if mask is None:
                raise SchemaError(
                    f"manifest references mask for {entry.image_id!r} but none given"
                )
            path = root / entry.mask_file
            path.parent.mkdir(parents=True, exist_ok=True)
            netpbm.write_pgm(np.asarray(mask, dtype=np.uint8), path)
        if entry.render_file:
            render = renders.get(entry.image_id)
            if render is None:
                raise SchemaError(
                    f"manifest references render for {entry.image_id!r} but none given"
                )
            path = root / entry.render_file
            path.parent.mkdir(parents=True, exist_ok=True)
            netpbm.write_ppm(np.asarray(render, dtype=np.uint8), path)

    try:
        (root / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc
    return open_store(root)


def open_store(path) -> StoreHandle:
    """Open a store read-only, validating headers without touching payloads."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise IoError(f"no {MANIFEST_NAME} under {root}")
    manifest = FeatureStoreManifest.from_json(manifest_path.read_text(encoding="utf-8"))
    for entry in manifest.images:
        for spec in manifest.blocks:
            block_path = root / entry.block_files[spec.index]
            if not block_path.is_file():
                raise IoError(f"missing block file {block_path}")
            channels, height, width = _read_block_header(block_path)
            if (height, width, channels) != (spec.height, spec.width, spec.channels):
                raise SchemaError(
                    f"{block_path}: header says {height}x{width}x{channels}, "
                    f"manifest says {spec.height}x{spec.width}x{spec.channels}"
                )
            expected_size = HEADER_BYTES + height * width * channels * 4
            actual_size = os.path.getsize(block_path)
            if actual_size != expected_size:
                raise SchemaError(
                    f"{block_path}: file is {actual_size} bytes, expected {expected_size}"
                )
    return StoreHandle(root, manifest)


def validate_store(path) -> list[str]:
    """Deep validation: headers, padding, payload finiteness, mask legality.

    Returns the list of image ids checked; raises the first problem found.
    """
    handle = open_store(path)
    manifest = handle.manifest
    for entry in manifest.images:
        for spec in manifest.blocks:
            block_path = handle.root / entry.block_files[spec.index]
            with open(block_path, "rb") as fh:
                header = fh.read(HEADER_BYTES)
            if any(header[_HEADER_STRUCT.size :]):
                raise FormatError(f"{block_path}: nonzero header padding")
            vol = handle.volume(entry.image_id, spec.index)
            # bounded scan: check finiteness one row-slab at a time
            slab_rows = max(1, (1 << 20) // max(1, spec.width * spec.channels * 4))
            for start in range(0, spec.height, slab_rows):
                slab = np.asarray(vol[start : start + slab_rows])
                if not np.isfinite(slab).all():
                    raise DataError(f"{block_path}: non-finite payload values")
        if entry.mask_file:
            handle.read_mask(entry.image_id)
    handle.close()
    return manifest.image_ids


def rect_full_image(manifest: FeatureStoreManifest) -> tuple[int, int, int, int]:
    return (0, 0, manifest.image_height, manifest.image_width)


def min_chunk_budget(manifest: FeatureStoreManifest, rect_width: int | None = None) -> int:
    """Smallest legal stream budget: one output row of floats."""
    width = manifest.image_width if rect_width is None else rect_width
    return width * manifest.feature_dim * 4


def block_pyramid(image_size: int, specs: list[tuple[int, int]]) -> list[BlockSpec]:
    """Build square BlockSpecs from (resolution, channels) pairs."""
    blocks = [
        BlockSpec(index=i, height=res, width=res, channels=ch)
        for i, (res, ch) in enumerate(specs)
    ]
    for block in blocks:
        if image_size % block.height:
            raise SchemaError(
                f"block resolution {block.height} does not divide image size {image_size}"
            )
    return blocks


def checksum_dir(path) -> str:
    """Stable digest of every file in a store; used by determinism tests."""
    import hashlib

    digest = hashlib.sha256()
    root = Path(path)
    for file_path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(file_path.relative_to(root)).encode())
        digest.update(file_path.read_bytes())
    return digest.hexdigest()
