"""Confusion counts, pixel accuracy and IoU."""

from typing import Iterable

import numpy as np

from ..autodiff import ShapeError
from ..models import BinaryMask, ConfusionCounts


def confusion(pred: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    """Pixel counts with positive = class 1."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"confusion: prediction {pred.shape} and truth {truth.shape} differ")
    p = pred == 1
    t = truth == 1
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def merge(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    return total


def pixel_accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise ValueError("pixel accuracy of an empty confusion table is undefined")
    return (counts.tp + counts.tn) / counts.total


def iou(counts: ConfusionCounts) -> float:
    """TP / (FP + TP + FN); 1 when both masks are empty."""
    union = counts.fp + counts.tp + counts.fn
    if union == 0:
        return 1.0
    return counts.tp / union
