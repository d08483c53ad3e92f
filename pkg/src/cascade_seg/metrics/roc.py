"""Restricted ROC analysis and the tumor-probability histogram.

Only pixels whose probability lies strictly inside the band enter the curve;
a pixel is called positive at threshold t when its probability is > t, the
same rule as the cascade threshold, so a chosen threshold can be used as t_b.
"""

from typing import Optional, Sequence, Union

import numpy as np

from ..autodiff import ShapeError
from ..models import HistogramBin, ROCCurve, ROCPoint

DEFAULT_BAND = (0.01, 0.99)

ArraySet = Union[np.ndarray, Sequence[np.ndarray]]


def _flatten(arrays: ArraySet) -> np.ndarray:
    if isinstance(arrays, np.ndarray):
        return arrays.ravel()
    if len(arrays) == 0:
        return np.zeros(0)
    return np.concatenate([np.asarray(a).ravel() for a in arrays])


def _in_band(values: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    lo, hi = band
    if not lo < hi:
        raise ValueError(f"band needs low < high, got {band}")
    return (values > lo) & (values < hi)


def restricted_roc(
    probs: ArraySet,
    truth: ArraySet,
    band: tuple[float, float] = DEFAULT_BAND,
) -> ROCCurve:
    """ROC over in-band pixels, sweeping every distinct observed probability.

    Thresholds run from the upper band endpoint through the distinct scores
    below the largest one down to the lower endpoint, so the curve starts at
    (0, 0), ends at (1, 1) and each distinct score opens one step. Returns an
    empty curve when the restricted set is empty or holds only one class.
    """
    if not isinstance(probs, np.ndarray) and not isinstance(truth, np.ndarray):
        if len(probs) != len(truth):
            raise ShapeError(f"restricted_roc: {len(probs)} probability maps vs {len(truth)} masks")
        for p, t in zip(probs, truth):
            if np.shape(p) != np.shape(t):
                raise ShapeError(f"restricted_roc: shapes {np.shape(p)} and {np.shape(t)} differ")
    scores = _flatten(probs).astype(np.float64)
    labels = _flatten(truth)
    if scores.shape != labels.shape:
        raise ShapeError(f"restricted_roc: {scores.size} scores vs {labels.size} labels")

    keep = _in_band(scores, band)
    scores = scores[keep]
    positive = labels[keep] == 1
    n_pos = int(np.count_nonzero(positive))
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return ROCCurve()

    pos_sorted = np.sort(scores[positive])
    neg_sorted = np.sort(scores[~positive])
    lo, hi = band
    thresholds = np.concatenate([[hi], np.unique(scores)[::-1][1:], [lo]])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="right")

    return ROCCurve(points=[
        ROCPoint(threshold=float(t), fpr=f / n_neg, tpr=p / n_pos)
        for t, f, p in zip(thresholds, fp, tp)
    ])


def auc(curve: ROCCurve) -> Optional[float]:
    """Trapezoidal area under the curve; None for an empty curve."""
    if curve.is_empty:
        return None
    fpr = np.array([p.fpr for p in curve.points])
    tpr = np.array([p.tpr for p in curve.points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def best_threshold(curve: ROCCurve) -> Optional[float]:
    """Threshold maximizing Youden's J = tpr - fpr; ties go to the larger threshold."""
    if curve.is_empty:
        return None
    j = np.array([p.tpr - p.fpr for p in curve.points])
    # points are ordered by decreasing threshold, argmax keeps the first maximum
    return curve.points[int(np.argmax(j))].threshold


def probability_histogram(
    probs: ArraySet,
    band: tuple[float, float] = DEFAULT_BAND,
    bins: int = 49,
) -> list[HistogramBin]:
    """Equal-width counts of in-band probabilities."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    values = _flatten(probs).astype(np.float64)
    values = values[_in_band(values, band)]
    edges = np.linspace(band[0], band[1], bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return [
        HistogramBin(bin_low=float(edges[i]), bin_high=float(edges[i + 1]), count=int(counts[i]))
        for i in range(bins)
    ]
