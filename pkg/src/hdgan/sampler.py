"""Labeled-pixel sampling and batched feature loading for training.

Ignored pixels are never sampled. The class-balanced strategy (the default)
draws each present class roughly equally per image, which keeps rare classes
from being swamped by background.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .annotations import IGNORE_LABEL, SegmentationMask
from .errors import ConfigError, DataError
from .feature_store import StoreHandle
from .resampler import ResampleMode
from .rng import Rng, derive_seed


class SampleIndex(NamedTuple):
    image_id: str
    row: int
    col: int
    label: int


class Strategy(Enum):
    UNIFORM = "uniform"
    CLASS_BALANCED = "class-balanced"


@dataclass(frozen=True)
class SamplingPlan:
    seed: int
    strategy: Strategy = Strategy.CLASS_BALANCED
    pixels_per_image: int = 4096

    def __post_init__(self):
        if self.pixels_per_image < 1:
            raise ConfigError(
                f"pixels_per_image must be >= 1, got {self.pixels_per_image}"
            )


def _draws_for_image(mask: SegmentationMask, plan: SamplingPlan, stream: Rng):
    labels = mask.labels
    flat_valid = np.flatnonzero(labels.reshape(-1) != IGNORE_LABEL)
    if flat_valid.size == 0:
        raise DataError("mask has no labeled pixels")
    width = mask.width
    n = plan.pixels_per_image
    if plan.strategy is Strategy.UNIFORM:
        chosen = flat_valid[stream.integers(flat_valid.size, n)]
    else:
        flat_labels = labels.reshape(-1)[flat_valid]
        present = np.unique(flat_labels)
        per_class = -(-n // present.size)  # ceil
        picks = []
        for class_id in present:
            pool = flat_valid[flat_labels == class_id]
            picks.append(pool[stream.integers(pool.size, per_class)])
        chosen = np.concatenate(picks)[:n]
    rows = (chosen // width).astype(np.int64)
    cols = (chosen % width).astype(np.int64)
    return rows, cols, labels.reshape(-1)[chosen].astype(np.int64)


def draw_samples(
    masks: Mapping[str, SegmentationMask], plan: SamplingPlan
) -> list[SampleIndex]:
    """Draw labeled pixels per image, with replacement, deterministically.

    Images are visited in lexicographic id order; image ordinal i uses the
    stream derived from (plan.seed, "draw", i), so the result depends only
    on the mask contents and the plan.
    """
    if not masks:
        raise DataError("no masks to sample from")
    samples: list[SampleIndex] = []
    for ordinal, image_id in enumerate(sorted(masks)):
        stream = Rng(derive_seed(plan.seed, "draw", ordinal))
        rows, cols, labels = _draws_for_image(masks[image_id], plan, stream)
        samples.extend(
            SampleIndex(image_id, int(r), int(c), int(label))
            for r, c, label in zip(rows, cols, labels)
        )
    return samples


def batches(
    handle: StoreHandle,
    samples: list[SampleIndex],
    batch_size: int,
    mode: ResampleMode = ResampleMode.NEAREST,
    *,
    epoch_seed: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (features [B, D] f32, labels [B] i64) batches for one epoch.

    The sample list is shuffled once with the epoch-seeded stream, then cut
    into batch_size chunks; a trailing chunk shorter than 2 rows is dropped
    because batch norm needs batch statistics. Features are prefetched once
    per epoch with one fetch_pixel_features call per image, so every
    (image, block) file is touched exactly once per epoch; the prefetch
    buffer holds len(samples) * D floats, bounded by the sampling plan's
    pixels_per_image.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not samples:
        return
    id_table = sorted({s.image_id for s in samples})
    id_codes = {image_id: code for code, image_id in enumerate(id_table)}
    codes = np.array([id_codes[s.image_id] for s in samples], dtype=np.int64)
    pixels = np.array([(s.row, s.col) for s in samples], dtype=np.int64)
    labels = np.array([s.label for s in samples], dtype=np.int64)

    features = np.empty((len(samples), handle.feature_dim), dtype=np.float32)
    for code, image_id in enumerate(id_table):
        member_rows = np.flatnonzero(codes == code)
        features[member_rows] = handle.fetch_pixel_features(
            image_id, pixels[member_rows], mode
        )

    perm = Rng(epoch_seed).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        stop = min(start + batch_size, len(samples))
        if stop - start < 2:
            break  # batch norm cannot normalize a single row
        chunk = perm[start:stop]
        yield features[chunk], labels[chunk]
