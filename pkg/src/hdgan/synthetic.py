"""Procedural stand-in for a trained generator backbone.

Builds deterministic scenes (disks and rectangles over a background class,
painter's order) plus class-separable multi-resolution feature blocks, so the
whole pipeline can be exercised and verified end to end without any trained
network. Per-class feature prototypes are scaled so that nearest-prototype
classification stays easy at the configured noise level; shapes of
higher-numbered classes are drawn smaller, which makes boundary effects show
up first in the boundary-heaviest class.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import DEFAULT_CLASS_NAMES, SegmentationMask
from .errors import ConfigError, DataError
from .feature_store import (
    BlockSpec,
    FeatureStoreManifest,
    ImageEntry,
    StoreHandle,
    create_store,
)
from .resampler import nearest_indices
from .rng import Rng, derive_seed

#: Fixed RGB palette; class c renders as PALETTE[c % len(PALETTE)].
PALETTE = np.array(
    [
        (245, 245, 245),  # background / whitespace
        (214, 153, 126),
        (150, 60, 90),
        (226, 75, 64),
        (96, 96, 180),
        (70, 150, 96),
        (230, 190, 60),
        (120, 200, 220),
        (170, 110, 220),
        (90, 70, 40),
        (250, 140, 190),
        (40, 120, 130),
        (200, 220, 120),
        (130, 130, 130),
        (255, 160, 60),
        (60, 60, 60),
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class Shape:
    class_id: int
    kind: str  # "disk" | "rect"
    params: tuple[int, ...]  # disk: (cy, cx, radius); rect: (r0, c0, r1, c1) half-open


@dataclass
class SceneSpec:
    height: int
    width: int
    num_classes: int
    shapes: list[Shape]


@dataclass
class FeatureModel:
    """Per-block class prototypes plus the channel noise level."""

    block_prototypes: list[np.ndarray]  # each [K, C_b] float64
    noise_sigma: float
    min_pairwise_gap: float  # over concatenated prototypes

    @property
    def feature_dim(self) -> int:
        return sum(p.shape[1] for p in self.block_prototypes)


def _render_shape(labels: np.ndarray, shape: Shape) -> None:
    if shape.kind == "disk":
        cy, cx, radius = shape.params
        rows = np.arange(labels.shape[0])[:, None]
        cols = np.arange(labels.shape[1])[None, :]
        inside = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius**2
        labels[inside] = shape.class_id
    elif shape.kind == "rect":
        r0, c0, r1, c1 = shape.params
        labels[r0:r1, c0:c1] = shape.class_id
    else:
        raise ConfigError(f"unknown shape kind {shape.kind!r}")


def render_scene(spec: SceneSpec) -> SegmentationMask:
    """Rasterize shapes in painter's order over background class 0."""
    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for shape in spec.shapes:
        _render_shape(labels, shape)
    return SegmentationMask(labels)


def _class_scale(class_id: int, num_classes: int) -> float:
    # classes 1..K-1 shrink linearly from 1.0 down to 0.4, so the last
    # class is clearly the boundary-heaviest (highest perimeter-to-area)
    # without collapsing into unlearnably small shapes
    if num_classes <= 2:
        return 1.0
    step = (class_id - 1) / (num_classes - 2)
    return 1.0 - 0.6 * step


def generate_scene(
    seed: int, size: int, num_classes: int, n_shapes: int
) -> tuple[SceneSpec, SegmentationMask]:
    """One seeded random scene; shapes always lie fully inside the canvas."""
    if num_classes < 2:
        raise ConfigError("need at least 2 classes (background + 1)")
    if size < 16:
        raise ConfigError(f"scene size must be >= 16, got {size}")
    stream = Rng(seed)
    shapes: list[Shape] = []
    for _ in range(n_shapes):
        class_id = 1 + stream.below(num_classes - 1)
        scale = _class_scale(class_id, num_classes)
        lo = max(3, round(size / 16 * scale))
        hi = max(lo + 1, round(size / 5 * scale))
        if stream.below(2) == 0:
            radius = lo + stream.below(hi - lo + 1)
            cy = radius + stream.below(size - 2 * radius)
            cx = radius + stream.below(size - 2 * radius)
            shapes.append(Shape(class_id, "disk", (cy, cx, radius)))
        else:
            half_h = lo + stream.below(hi - lo + 1)
            half_w = lo + stream.below(hi - lo + 1)
            r0 = stream.below(size - 2 * half_h)
            c0 = stream.below(size - 2 * half_w)
            shapes.append(Shape(class_id, "rect", (r0, c0, r0 + 2 * half_h, c0 + 2 * half_w)))
    spec = SceneSpec(height=size, width=size, num_classes=num_classes, shapes=shapes)
    return spec, render_scene(spec)


def generate_scene_set(
    seed: int, n_images: int, size: int, num_classes: int, n_shapes: int = 6
) -> list[tuple[SceneSpec, SegmentationMask]]:
    """Scenes for a whole image set, resampled until every class appears."""
    for attempt in range(100):
        scenes = [
            generate_scene(
                derive_seed(seed, "scene", attempt * n_images + i),
                size,
                num_classes,
                n_shapes,
            )
            for i in range(n_images)
        ]
        covered: set[int] = set()
        for _, mask in scenes:
            covered.update(np.unique(mask.labels).tolist())
        if covered >= set(range(num_classes)):
            return scenes
    raise DataError(
        f"could not cover all {num_classes} classes in {n_images} scenes; "
        "increase n_shapes or n_images"
    )


def _spread_points(num_classes: int, channels: int) -> np.ndarray:
    """Class points with near-maximal, near-uniform pairwise spacing.

    Regular simplex when the channel count allows (all pairs exactly equal),
    a regular polygon in two channels, evenly spaced scalars in one. Uniform
    spacing matters: with raw Gaussian prototypes one random class pair ends
    up with a far weaker margin than the rest, and that pair's boundaries
    dominate the error budget in a seed-dependent way.
    """
    k = num_classes
    if channels == 1:
        return (np.arange(k, dtype=np.float64) - (k - 1) / 2.0)[:, None]
    points = np.zeros((k, channels))
    if channels >= k - 1:
        centered = np.eye(k) - 1.0 / k
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        points[:, : k - 1] = u[:, : k - 1] * s[: k - 1]  # all pairs sqrt(2) apart
    else:
        angles = 2.0 * np.pi * np.arange(k) / k
        points[:, 0] = np.cos(angles)
        points[:, 1] = np.sin(angles)
    return points


def _seeded_rotation(stream: Rng, channels: int) -> np.ndarray:
    gaussian = stream.normal(channels * channels).reshape(channels, channels)
    q, r = np.linalg.qr(gaussian)
    return q * np.sign(np.diag(r))  # sign fix makes the factorization unique


def make_feature_model(
    seed: int, blocks: list[BlockSpec], num_classes: int, noise_sigma: float
) -> FeatureModel:
    """Build separable per-block prototypes at the configured noise level.

    Per block, maximally spread class points (see _spread_points) are
    rotated by a seeded random orthogonal matrix and scaled so the block's
    minimum pairwise L2 gap is (4*sigma*sqrt(D) + 1) / sqrt(n_blocks).
    Distinct classes then stay distinct within every block, and the
    concatenated prototypes end up at least 4*sigma*sqrt(D) + 1 apart, so a
    linear classifier exists by construction.
    """
    if noise_sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {noise_sigma}")
    stream = Rng(derive_seed(seed, "prototypes"))
    feature_dim = sum(b.channels for b in blocks)
    target = (4.0 * noise_sigma * np.sqrt(feature_dim) + 1.0) / np.sqrt(len(blocks))
    prototypes: list[np.ndarray] = []
    for block in blocks:
        proto = _spread_points(num_classes, block.channels) @ _seeded_rotation(
            stream, block.channels
        )
        gap = _min_pairwise_gap(proto)
        if gap <= 0:
            raise DataError("degenerate prototype configuration")  # pragma: no cover
        prototypes.append(proto * (target / gap))
    concatenated = np.concatenate(prototypes, axis=1)
    return FeatureModel(
        block_prototypes=prototypes,
        noise_sigma=float(noise_sigma),
        min_pairwise_gap=_min_pairwise_gap(concatenated),
    )


def _min_pairwise_gap(prototypes: np.ndarray) -> float:
    k = prototypes.shape[0]
    gaps = [
        float(np.linalg.norm(prototypes[i] - prototypes[j]))
        for i in range(k)
        for j in range(i + 1, k)
    ]
    return min(gaps)


def render_blocks(
    mask: SegmentationMask, blocks: list[BlockSpec], model: FeatureModel, seed: int
) -> list[np.ndarray]:
    """Per-block feature tensors for one scene.

    Each block sees the mask downsampled by the pixel-center nearest rule;
    every texel gets its class prototype plus seeded Gaussian channel noise.
    """
    labels = mask.labels
    if (labels >= len(model.block_prototypes[0])).any():
        raise DataError("mask labels exceed the feature model's class count")
    out: list[np.ndarray] = []
    for block, prototypes in zip(blocks, model.block_prototypes):
        sr = nearest_indices(np.arange(block.height), block.height, mask.height)
        sc = nearest_indices(np.arange(block.width), block.width, mask.width)
        block_labels = labels[np.ix_(sr, sc)]
        features = prototypes[block_labels]
        if model.noise_sigma > 0:
            stream = Rng(derive_seed(seed, "noise", block.index))
            noise = stream.normal(features.size).reshape(features.shape)
            features = features + model.noise_sigma * noise
        out.append(features.astype(np.float32))
    return out


def render_rgb(mask: SegmentationMask) -> np.ndarray:
    return PALETTE[mask.labels % len(PALETTE)]


def default_blocks(size: int) -> list[BlockSpec]:
    """Four-block pyramid ending at full resolution: sizes /8, /4, /2, /1."""
    if size % 8:
        raise ConfigError(f"size must be divisible by 8, got {size}")
    layout = [(size // 8, 8), (size // 4, 4), (size // 2, 2), (size, 2)]
    return [BlockSpec(i, res, res, ch) for i, (res, ch) in enumerate(layout)]


def build_synthetic_store(
    seed: int,
    n_images: int,
    size: int,
    out_dir,
    blocks: list[BlockSpec] | None = None,
    num_classes: int = 5,
    noise_sigma: float = 0.25,
    n_shapes: int = 6,
    class_names: tuple[str, ...] | None = None,
) -> Path:
    """Create a complete feature store with masks and RGB renders."""
    if n_images < 1:
        raise ConfigError("need at least one image")
    blocks = blocks if blocks is not None else default_blocks(size)
    if class_names is None:
        class_names = (
            DEFAULT_CLASS_NAMES
            if num_classes == len(DEFAULT_CLASS_NAMES)
            else tuple(f"class_{i}" for i in range(num_classes))
        )
    scenes = generate_scene_set(
        derive_seed(seed, "scenes"), n_images, size, num_classes, n_shapes
    )
    model = make_feature_model(derive_seed(seed, "features"), blocks, num_classes, noise_sigma)

    image_ids = [f"img_{i:03d}" for i in range(n_images)]
    entries = []
    block_data = {}
    masks = {}
    renders = {}
    for i, (image_id, (_, mask)) in enumerate(zip(image_ids, scenes)):
        entries.append(
            ImageEntry(
                image_id=image_id,
                block_files=[
                    f"images/{image_id}/block_{b.index}.hdgf" for b in blocks
                ],
                mask_file=f"masks/{image_id}.pgm",
                render_file=f"renders/{image_id}.ppm",
            )
        )
        block_data[image_id] = render_blocks(
            mask, blocks, model, derive_seed(seed, "image", i)
        )
        masks[image_id] = mask.labels
        renders[image_id] = render_rgb(mask)

    manifest = FeatureStoreManifest(
        image_height=size,
        image_width=size,
        class_names=tuple(class_names),
        blocks=blocks,
        images=entries,
    )
    handle = create_store(manifest, block_data, out_dir, masks=masks, renders=renders)
    handle.close()
    return Path(out_dir)
