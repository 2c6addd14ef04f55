"""Class catalog, segmentation-mask I/O, and dataset splitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netpbm
from .errors import ConfigError, DataError
from .rng import Rng, derive_seed

#: Mask value excluding a pixel from sampling and scoring.
IGNORE_LABEL = 255

#: Default 5-class kidney-compartment catalog.
DEFAULT_CLASS_NAMES = (
    "Whitespace",
    "Cortical Tubulointerstitium",
    "Glomerulus",
    "Arteriole",
    "Artery",
)


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names; index in the tuple is the mask label."""

    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not 1 <= len(names) <= 254:
            raise ConfigError(f"catalog needs 1..254 classes, got {len(names)}")
        if len(set(names)) != len(names):
            raise ConfigError("class names must be unique")
        if any(not n for n in names):
            raise ConfigError("class names must be nonempty")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def ignore_value(self) -> int:
        return IGNORE_LABEL


@dataclass
class SegmentationMask:
    """H x W uint8 label map; values are class indices or IGNORE_LABEL."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.dtype != np.uint8:
            raise DataError(
                f"mask must be uint8 [H, W], got {labels.dtype} {labels.shape}"
            )
        self.labels = labels

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def validate_labels(self, catalog: ClassCatalog) -> None:
        bad = (self.labels >= catalog.num_classes) & (self.labels != IGNORE_LABEL)
        if bad.any():
            value = int(self.labels[bad][0])
            raise DataError(
                f"label {value} outside catalog of {catalog.num_classes} classes"
            )


def read_mask(path, catalog: ClassCatalog) -> SegmentationMask:
    """Parse a binary PGM mask and validate its labels against the catalog."""
    mask = SegmentationMask(netpbm.read_pgm(path))
    mask.validate_labels(catalog)
    return mask


def write_mask(mask: SegmentationMask, path) -> None:
    netpbm.write_pgm(mask.labels, path)


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...] = field(default_factory=tuple)
    val: tuple[str, ...] = field(default_factory=tuple)
    test: tuple[str, ...] = field(default_factory=tuple)

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "val", "test"):
            raise ConfigError(f"unknown split part {name!r}")
        return getattr(self, name)


def split_dataset(image_ids, counts: tuple[int, int, int], seed: int) -> SplitAssignment:
    """Deterministic train/val/test split.

    Ids are sorted lexicographically, shuffled with the stream derived from
    (seed, "split"), and the three requested prefixes taken in order, so the
    result is independent of the input ordering.
    """
    n_train, n_val, n_test = counts
    if min(n_train, n_val, n_test) < 0:
        raise ConfigError(f"split counts must be non-negative, got {counts}")
    ids = sorted(image_ids)
    if len(set(ids)) != len(ids):
        raise ConfigError("image ids must be unique")
    total = n_train + n_val + n_test
    if total > len(ids):
        raise ConfigError(
            f"split needs {total} images but only {len(ids)} are available"
        )
    shuffled = Rng(derive_seed(seed, "split")).shuffled(ids)
    return SplitAssignment(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val : total]),
    )
