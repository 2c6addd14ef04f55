"""Confusion-matrix segmentation metrics: per-class accuracy and Dice.

Per-class accuracy is recall (diagonal over the ground-truth row). Dice is
computed globally over the pooled confusion matrix; classes absent from both
ground truth and prediction carry no Dice and are excluded from the mean.
Undefined values are NaN internally and render as ``n/a``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .annotations import IGNORE_LABEL, SegmentationMask
from .errors import ShapeError


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are ground truth, columns prediction."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _labels_of(mask) -> np.ndarray:
    if isinstance(mask, SegmentationMask):
        return mask.labels
    return np.asarray(mask)


def accumulate(cm: ConfusionMatrix, pred, gt) -> ConfusionMatrix:
    """Add one image's non-ignored pixels into the matrix (in place)."""
    pred_labels = _labels_of(pred)
    gt_labels = _labels_of(gt)
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(
            f"prediction {pred_labels.shape} and ground truth {gt_labels.shape} differ"
        )
    k = cm.num_classes
    valid = gt_labels != IGNORE_LABEL
    gt_valid = gt_labels[valid].astype(np.int64)
    pred_valid = pred_labels[valid].astype(np.int64)
    if gt_valid.size and (gt_valid.max() >= k or pred_valid.max() >= k):
        raise ShapeError(f"labels exceed the {k}-class matrix")
    flat = np.bincount(gt_valid * k + pred_valid, minlength=k * k)
    cm.counts += flat.reshape(k, k)
    return cm


def classwise_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    """Per-class recall; NaN for classes with no ground-truth pixels."""
    gt_totals = cm.counts.sum(axis=1).astype(np.float64)
    diagonal = np.diag(cm.counts).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = diagonal / gt_totals
    acc[gt_totals == 0] = np.nan
    return acc


def dice(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """(per-class Dice, mean over defined classes)."""
    gt_totals = cm.counts.sum(axis=1).astype(np.float64)
    pred_totals = cm.counts.sum(axis=0).astype(np.float64)
    diagonal = np.diag(cm.counts).astype(np.float64)
    denom = gt_totals + pred_totals
    with np.errstate(invalid="ignore", divide="ignore"):
        values = 2.0 * diagonal / denom
    values[denom == 0] = np.nan
    defined = values[~np.isnan(values)]
    mean = float(defined.mean()) if defined.size else float("nan")
    return values, mean


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        return float("nan")
    return float(np.trace(cm.counts) / cm.total)


@dataclass
class MetricsReport:
    class_names: tuple[str, ...]
    confusion: ConfusionMatrix
    per_class_accuracy: np.ndarray
    per_class_dice: np.ndarray
    mean_dice: float
    overall_accuracy: float

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, class_names) -> "MetricsReport":
        per_class_dice, mean_dice = dice(cm)
        return cls(
            class_names=tuple(class_names),
            confusion=cm,
            per_class_accuracy=classwise_accuracy(cm),
            per_class_dice=per_class_dice,
            mean_dice=mean_dice,
            overall_accuracy=overall_accuracy(cm),
        )

    def as_text(self) -> str:
        name_width = max(len("Class"), *(len(n) for n in self.class_names))
        lines = [f"{'Class':<{name_width}}  {'Accuracy (%)':>12}  {'Dice':>6}"]
        for i, name in enumerate(self.class_names):
            acc = self.per_class_accuracy[i]
            dice_value = self.per_class_dice[i]
            acc_text = "n/a" if np.isnan(acc) else f"{100.0 * acc:.2f}"
            dice_text = "n/a" if np.isnan(dice_value) else f"{dice_value:.4f}"
            lines.append(f"{name:<{name_width}}  {acc_text:>12}  {dice_text:>6}")
        lines.append(
            f"{'overall':<{name_width}}  "
            f"{100.0 * self.overall_accuracy:>12.2f}  {self.mean_dice:>6.4f}"
        )
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[list[str]]:
        rows = [["class", "accuracy_percent", "dice"]]
        for i, name in enumerate(self.class_names):
            acc = self.per_class_accuracy[i]
            dice_value = self.per_class_dice[i]
            rows.append(
                [
                    name,
                    "n/a" if np.isnan(acc) else f"{100.0 * acc:.2f}",
                    "n/a" if np.isnan(dice_value) else f"{dice_value:.6f}",
                ]
            )
        rows.append(
            [
                "overall",
                f"{100.0 * self.overall_accuracy:.2f}",
                f"{self.mean_dice:.6f}",
            ]
        )
        return rows

    def as_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerows(self.csv_rows())
        return buffer.getvalue()
