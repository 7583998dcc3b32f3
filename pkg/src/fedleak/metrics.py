"""Evaluation math: one-vs-rest confusion counts, macro precision/recall/F1,
ROC curves with trapezoidal AUC, and the distance between reconstructed images
and a victim class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MetricError


@dataclass
class ConfusionCounts:
    """Per-class one-vs-rest tallies. For every class, tp+fp+tn+fn == total."""

    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.tn[0] + self.fn[0]) if self.num_classes else 0


@dataclass
class RoundRecord:
    """Evaluation row for one federated round.

    reconstruction_distance is None until the adversary starts attacking.
    """

    round: int
    accuracy: float
    macro_precision: float
    macro_recall: float
    f1: float
    per_class_auc: list = field(default_factory=list)
    reconstruction_distance: Optional[float] = None


def confusion(y_true, y_pred, num_classes: int) -> ConfusionCounts:
    """One-vs-rest counts per class.

    Predictions outside [0, num_classes) (the adversary's fake class) count as
    plain wrong answers: a false negative for the true class, never a false
    positive for any real class.
    """
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"{t.size} labels but {p.size} predictions")
    if t.size and (t.min() < 0 or t.max() >= num_classes):
        raise ValueError(f"true labels must lie in [0, {num_classes})")
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    tn = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_classes):
        is_true = t == c
        is_pred = p == c
        tp[c] = np.sum(is_true & is_pred)
        fp[c] = np.sum(~is_true & is_pred)
        fn[c] = np.sum(is_true & ~is_pred)
        tn[c] = t.size - tp[c] - fp[c] - fn[c]
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num), dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def macro_scores(counts: ConfusionCounts):
    """Returns (accuracy, macro_precision, macro_recall, f1).

    Per-class precision/recall use the 0/0 -> 0 convention; macro values
    average uniformly over classes; F1 combines the macro precision and
    recall.
    """
    total = counts.total
    accuracy = float(counts.tp.sum() / total) if total else 0.0
    precision = float(_safe_div(counts.tp, counts.tp + counts.fp).mean())
    recall = float(_safe_div(counts.tp, counts.tp + counts.fn).mean())
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return accuracy, precision, recall, f1


def roc_auc(scores, positives):
    """ROC curve and trapezoidal AUC for one binary split.

    Thresholds sweep the distinct scores in descending order; tied scores form
    a single step. Returns (curve, auc) where curve is a list of (fpr, tpr)
    points from (0, 0) to (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    if s.shape != pos.shape:
        raise ValueError(f"{s.size} scores but {pos.size} labels")
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"ROC needs both classes, got {n_pos} positives "
                          f"and {n_neg} negatives")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order]
    cum_tp = np.cumsum(pos_sorted)
    cum_fp = np.cumsum(~pos_sorted)
    # keep only the last index of each tied-score run
    distinct = np.nonzero(np.diff(s_sorted, append=np.inf))[0]
    tpr = np.concatenate(([0.0], cum_tp[distinct] / n_pos))
    fpr = np.concatenate(([0.0], cum_fp[distinct] / n_neg))
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)
    curve = list(zip(fpr.tolist(), tpr.tolist()))
    return curve, auc


def reconstruction_distance(fakes, target_partition) -> float:
    """Mean per-pixel RMS distance from generated images to the class mean.

    Builds the pixelwise mean image of the target partition, then averages
    sqrt(mean((fake - mean_image)^2)) over the generated samples.
    """
    if not fakes:
        raise ValueError("no generated images")
    if not target_partition.samples:
        raise ValueError("empty target partition")
    mean_image = np.mean(
        [s.pixels.view().astype(np.float64) for s in target_partition.samples], axis=0)
    dists = [np.sqrt(np.mean((f.view().astype(np.float64) - mean_image) ** 2))
             for f in fakes]
    return float(np.mean(dists))
