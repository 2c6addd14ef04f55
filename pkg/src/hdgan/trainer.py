"""Training loop with validation-driven early stopping, plus evaluation.

Randomness is derived per ensemble member from the master seed: member i
uses derive_seed(master_seed, "member", i), and every stream inside a member
(init, sampling, epoch shuffles, dropout) derives from that member seed with
its own purpose tag. Two runs with the same config and store reproduce each
other bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .annotations import IGNORE_LABEL, SplitAssignment
from .errors import ConfigError, IoError
from .feature_store import StoreHandle
from .inference import DEFAULT_CHUNK_BUDGET, VoteRule, predict_image
from .metrics import ConfusionMatrix, MetricsReport, accumulate
from .mlp import (
    MlpArch,
    MlpCheckpoint,
    Mode,
    backward,
    cross_entropy,
    forward,
    init_params,
    sgd_step,
)
from .resampler import ResampleMode
from .rng import Rng, derive_seed
from .sampler import SamplingPlan, batches, draw_samples

VAL_PIXEL_CAP = 100_000
_EVAL_BATCH_ROWS = 16384


@dataclass
class TrainConfig:
    master_seed: int
    arch: MlpArch | None = None  # None: sized from the store at train time
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    sampling: SamplingPlan | None = None  # None: class-balanced 4096/image
    mode: ResampleMode = ResampleMode.NEAREST
    ensemble_size: int = 1
    hidden_dims: tuple[int, int] = (256, 128)
    dropout_p: float = 0.1

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.ensemble_size < 1:
            raise ConfigError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 for batch norm, got {self.batch_size}"
            )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    entries: list[EpochStats] = field(default_factory=list)

    @property
    def best_accuracy(self) -> float:
        return max(e.val_accuracy for e in self.entries)

    @property
    def best_epoch(self) -> int:
        best = max(self.entries, key=lambda e: (e.val_accuracy, -e.epoch))
        return best.epoch


def write_history_csv(history: TrainHistory, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_accuracy"])
            for entry in history.entries:
                writer.writerow(
                    [entry.epoch, f"{entry.train_loss:.8f}", f"{entry.val_accuracy:.8f}"]
                )
    except OSError as exc:
        raise IoError(f"cannot write history {path}: {exc}") from exc


def _collect_val_pixels(
    handle: StoreHandle, val_ids, master_seed: int
) -> tuple[list[tuple[str, np.ndarray]], np.ndarray]:
    """Fixed validation pixel set: all non-ignored pixels, capped at 100k.

    The subsample, when needed, is a seeded permutation prefix shared by all
    ensemble members, so every member sees the same validation set.
    """
    per_image = []
    all_labels = []
    for image_id in sorted(val_ids):
        mask = handle.read_mask(image_id)
        valid = np.argwhere(mask.labels != IGNORE_LABEL)
        per_image.append((image_id, valid))
        all_labels.append(mask.labels[valid[:, 0], valid[:, 1]].astype(np.int64))
    total = sum(v.shape[0] for _, v in per_image)
    if total == 0:
        raise ConfigError("validation split has no labeled pixels")
    if total > VAL_PIXEL_CAP:
        keep = Rng(derive_seed(master_seed, "val-pixels")).permutation(total)[
            :VAL_PIXEL_CAP
        ]
        keep_mask = np.zeros(total, dtype=bool)
        keep_mask[keep] = True
        trimmed = []
        offset = 0
        for image_id, valid in per_image:
            image_keep = keep_mask[offset : offset + valid.shape[0]]
            trimmed.append((image_id, valid[image_keep]))
            offset += valid.shape[0]
        labels = np.concatenate(all_labels)[keep_mask]
        per_image = trimmed
    else:
        labels = np.concatenate(all_labels)
    return per_image, labels


def _fetch_val_features(
    handle: StoreHandle, per_image, mode: ResampleMode
) -> np.ndarray:
    parts = [
        handle.fetch_pixel_features(image_id, pixels, mode)
        for image_id, pixels in per_image
        if pixels.shape[0]
    ]
    return np.concatenate(parts, axis=0)


def _val_accuracy(params, features: np.ndarray, labels: np.ndarray) -> float:
    correct = 0
    for start in range(0, features.shape[0], _EVAL_BATCH_ROWS):
        chunk = features[start : start + _EVAL_BATCH_ROWS]
        logits, _ = forward(params, chunk, Mode.EVAL)
        predicted = np.argmax(logits, axis=1)
        correct += int((predicted == labels[start : start + chunk.shape[0]]).sum())
    return correct / features.shape[0]


def train(
    config: TrainConfig, handle: StoreHandle, split: SplitAssignment
) -> tuple[list[MlpCheckpoint], list[TrainHistory]]:
    """Train the ensemble; returns best-validation checkpoints and histories."""
    config.validate()
    if not split.train:
        raise ConfigError("empty train split")
    if not split.val:
        raise ConfigError("empty validation split")

    arch = config.arch
    if arch is None:
        arch = MlpArch(
            input_dim=handle.feature_dim,
            hidden_dims=config.hidden_dims,
            num_classes=handle.catalog.num_classes,
            dropout_p=config.dropout_p,
        )
    if arch.input_dim != handle.feature_dim:
        raise ConfigError(
            f"arch expects {arch.input_dim} features, store has {handle.feature_dim}"
        )

    train_masks = {}
    for image_id in split.train:
        if handle.mask_path(image_id) is None:
            raise ConfigError(f"train image {image_id!r} has no mask")
        train_masks[image_id] = handle.read_mask(image_id)
    val_pixels, val_labels = _collect_val_pixels(handle, split.val, config.master_seed)
    val_features = _fetch_val_features(handle, val_pixels, config.mode)

    checkpoints: list[MlpCheckpoint] = []
    histories: list[TrainHistory] = []
    class_names = tuple(handle.manifest.class_names)

    for member in range(config.ensemble_size):
        member_seed = derive_seed(config.master_seed, "member", member)
        plan = config.sampling
        if plan is None:
            plan = SamplingPlan(seed=derive_seed(member_seed, "sampling"))
        samples = draw_samples(train_masks, plan)

        params = init_params(arch, derive_seed(member_seed, "init"))
        history = TrainHistory()
        best_accuracy = -1.0
        best_params = params.copy()
        epochs_since_best = 0
        step = 0

        for epoch in range(config.max_epochs):
            losses = []
            for features, labels in batches(
                handle,
                samples,
                config.batch_size,
                config.mode,
                epoch_seed=derive_seed(member_seed, "epoch", epoch),
            ):
                logits, cache = forward(
                    params,
                    features,
                    Mode.TRAIN,
                    dropout_seed=derive_seed(member_seed, "dropout", step),
                    dropout_p=arch.dropout_p,
                )
                loss, dlogits = cross_entropy(logits, labels)
                grads = backward(params, cache, dlogits)
                params = sgd_step(params, grads, config.lr)
                losses.append(loss)
                step += 1
            if not losses:
                raise ConfigError(
                    "no trainable batches: need at least 2 sampled pixels per epoch"
                )
            accuracy = _val_accuracy(params, val_features, val_labels)
            history.entries.append(
                EpochStats(epoch=epoch, train_loss=float(np.mean(losses)), val_accuracy=accuracy)
            )
            if accuracy > best_accuracy:
                best_accuracy = accuracy
                best_params = params.copy()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    break

        checkpoints.append(
            MlpCheckpoint(arch=arch, params=best_params, class_names=class_names)
        )
        histories.append(history)
    return checkpoints, histories


def evaluate(
    checkpoints: list[MlpCheckpoint],
    handle: StoreHandle,
    image_ids,
    mode: ResampleMode = ResampleMode.NEAREST,
    chunk_budget_bytes: int = DEFAULT_CHUNK_BUDGET,
    vote: VoteRule = VoteRule.MEAN_LOGITS,
) -> MetricsReport:
    """Streamed inference over a split; pooled confusion-matrix metrics."""
    image_ids = list(image_ids)
    if not image_ids:
        raise ConfigError("nothing to evaluate: empty image list")
    num_classes = checkpoints[0].arch.num_classes
    cm = ConfusionMatrix.zeros(num_classes)
    for image_id in image_ids:
        predicted = predict_image(
            checkpoints, handle, image_id, chunk_budget_bytes, mode, vote
        )
        truth = handle.read_mask(image_id)
        accumulate(cm, predicted, truth)
    return MetricsReport.from_confusion(cm, checkpoints[0].class_names)
