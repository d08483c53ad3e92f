"""Rand index via the contingency table."""

from typing import Optional

import numpy as np

from ..autodiff import ShapeError


def contingency_table(s1: np.ndarray, s2: np.ndarray, n_labels: Optional[int] = None) -> np.ndarray:
    """Counts of pixels per (s1 label, s2 label) pair; labels are non-negative integers."""
    a = np.asarray(s1).astype(np.int64).ravel()
    b = np.asarray(s2).astype(np.int64).ravel()
    if a.size and (a.min() < 0 or b.min() < 0):
        raise ValueError("segment labels must be non-negative integers")
    k = n_labels if n_labels is not None else int(max(a.max(initial=0), b.max(initial=0))) + 1
    return np.bincount(a * k + b, minlength=k * k).reshape(k, k)


def _pairs(n: np.ndarray) -> int:
    n = n.astype(object)
    return int((n * (n - 1) // 2).sum())


def rand_index_from_table(table: np.ndarray) -> float:
    """Fraction of unordered pixel pairs on which both segmentations agree."""
    n = int(table.sum())
    if n < 2:
        raise ValueError(f"rand index needs at least 2 pixels, got {n}")
    total = n * (n - 1) // 2
    same_both = _pairs(table.ravel())
    same_1 = _pairs(table.sum(axis=1))
    same_2 = _pairs(table.sum(axis=0))
    agreements = total + 2 * same_both - same_1 - same_2
    return agreements / total


def rand_index(s1: np.ndarray, s2: np.ndarray) -> float:
    """Rand index of two label maps or binary masks of equal shape."""
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    if s1.shape != s2.shape:
        raise ShapeError(f"rand_index: shapes {s1.shape} and {s2.shape} differ")
    return rand_index_from_table(contingency_table(s1, s2))
