"""Chunk-streamed whole-image prediction, ensemble voting, pair export."""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path

import numpy as np

from .annotations import SegmentationMask
from .errors import IoError, SchemaError
from .feature_store import StoreHandle
from .mlp import MlpCheckpoint, Mode, forward
from .resampler import ResampleMode

DEFAULT_CHUNK_BUDGET = 8 << 20  # 8 MiB of feature floats per streamed band


class VoteRule(Enum):
    MEAN_LOGITS = "mean"
    MAJORITY_ARGMAX = "majority"


def _check_ensemble(checkpoints: list[MlpCheckpoint], handle: StoreHandle) -> None:
    if not checkpoints:
        raise SchemaError("need at least one checkpoint")
    arch = checkpoints[0].arch
    for other in checkpoints[1:]:
        if other.arch != arch:
            raise SchemaError(
                f"ensemble members disagree on architecture: {other.arch} vs {arch}"
            )
    if arch.input_dim != handle.feature_dim:
        raise SchemaError(
            f"model expects {arch.input_dim} features, store provides {handle.feature_dim}"
        )


def _vote(member_logits: list[np.ndarray], vote: VoteRule) -> np.ndarray:
    """Per-pixel class decision; ties always break toward the lower index."""
    if vote is VoteRule.MEAN_LOGITS:
        stacked = np.stack(member_logits)
        return np.argmax(stacked.mean(axis=0), axis=1)
    num_classes = member_logits[0].shape[1]
    votes = np.zeros((member_logits[0].shape[0], num_classes), dtype=np.int64)
    for logits in member_logits:
        choices = np.argmax(logits, axis=1)
        votes[np.arange(choices.size), choices] += 1
    return np.argmax(votes, axis=1)


def predict_image(
    checkpoints: list[MlpCheckpoint],
    handle: StoreHandle,
    image_id: str,
    chunk_budget_bytes: int = DEFAULT_CHUNK_BUDGET,
    mode: ResampleMode = ResampleMode.NEAREST,
    vote: VoteRule = VoteRule.MEAN_LOGITS,
) -> SegmentationMask:
    """Predict a full-image mask by streaming row bands under the budget.

    Batch norm always runs on running statistics here, so the output is
    identical whatever chunk budget the stream happens to use.
    """
    _check_ensemble(checkpoints, handle)
    height = handle.manifest.image_height
    width = handle.manifest.image_width
    labels = np.empty((height, width), dtype=np.uint8)
    rect = (0, 0, height, width)
    for chunk in handle.stream_region_features(
        image_id, rect, mode, chunk_budget_bytes
    ):
        flat = chunk.features.reshape(-1, handle.feature_dim)
        member_logits = [
            forward(ckpt.params, flat, Mode.EVAL)[0] for ckpt in checkpoints
        ]
        decided = _vote(member_logits, vote).astype(np.uint8)
        labels[chunk.row_start : chunk.row_stop] = decided.reshape(
            chunk.row_stop - chunk.row_start, width
        )
    return SegmentationMask(labels)


def export_pairs(
    checkpoints: list[MlpCheckpoint],
    handle: StoreHandle,
    image_ids: list[str],
    out_dir,
    chunk_budget_bytes: int = DEFAULT_CHUNK_BUDGET,
    mode: ResampleMode = ResampleMode.NEAREST,
    vote: VoteRule = VoteRule.MEAN_LOGITS,
) -> dict:
    """Write image-annotation pairs and a pairs.json index; returns the index.

    Every image gets its predicted mask as PGM; images whose store entry
    carries an RGB render also get that render copied out as PPM, and the
    index records null for the ones that do not.
    """
    root = Path(out_dir)
    try:
        (root / "masks").mkdir(parents=True, exist_ok=True)
        (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {root}: {exc}") from exc

    pairs = []
    for image_id in image_ids:
        mask = predict_image(
            checkpoints, handle, image_id, chunk_budget_bytes, mode, vote
        )
        mask_rel = f"masks/{image_id}.pgm"
        from .annotations import write_mask

        write_mask(mask, root / mask_rel)
        image_rel = None
        render = handle.render_path(image_id)
        if render is not None and render.exists():
            image_rel = f"images/{image_id}.ppm"
            try:
                (root / image_rel).write_bytes(render.read_bytes())
            except OSError as exc:
                raise IoError(f"cannot copy render for {image_id!r}: {exc}") from exc
        pairs.append({"image_id": image_id, "mask": mask_rel, "image": image_rel})

    index = {"pairs": pairs}
    try:
        (root / "pairs.json").write_text(
            json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write pairs.json: {exc}") from exc
    return index
