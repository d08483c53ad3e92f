"""Cross-entropy losses, balanced weights and the joint cascade objective.

Probabilities are clamped to [EPS, 1 - EPS] before the log; the clamped
region contributes zero gradient.
"""

from typing import Optional, Sequence, Union

import numpy as np

from .autodiff import ShapeError, Tensor, no_grad
from .autodiff.tensor import record
from .models import BalancedReading, LossMode, LossWeights

EPS = 1e-7

AlphaLike = Union[float, np.ndarray]


def _align(pred: Tensor, target: np.ndarray, name: str) -> np.ndarray:
    target = np.asarray(target)
    if target.shape != pred.shape:
        # binary targets may omit the singleton channel axis
        if pred.ndim == 4 and pred.shape[1] == 1 and target.shape == (pred.shape[0],) + pred.shape[2:]:
            target = target[:, None]
        else:
            raise ShapeError(f"{name}: prediction {pred.shape} and target {target.shape} differ")
    return target.astype(pred.dtype, copy=False)


def _per_sample(value: AlphaLike, pred: Tensor) -> np.ndarray:
    """Broadcast a scalar or per-sample (N,) weight against an N×... prediction."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr
    if arr.shape != (pred.shape[0],):
        raise ShapeError(f"per-sample weights {arr.shape} do not match batch {pred.shape}")
    return arr.reshape((-1,) + (1,) * (pred.ndim - 1))


def _weighted_binary(pred: Tensor, target: np.ndarray, w_bg: np.ndarray, w_fg: np.ndarray, op: str) -> Tensor:
    p_raw = pred.data
    p = np.clip(p_raw, EPS, 1.0 - EPS)
    inside = (p_raw >= EPS) & (p_raw <= 1.0 - EPS)
    bg = 1.0 - target
    count = p.size
    per_pixel = w_bg * bg * np.log1p(-p) + w_fg * target * np.log(p)
    loss = -per_pixel.sum() / count

    def rule(g: np.ndarray):
        d = -(w_fg * target / p - w_bg * bg / (1.0 - p)) / count
        return ((g * d * inside).astype(p_raw.dtype, copy=False),)

    return record(np.asarray(loss, dtype=p_raw.dtype), (pred,), rule, op)


# ============================================================
# Binary losses
# ============================================================

def binary_cross_entropy(pred: Tensor, target: np.ndarray) -> Tensor:
    """Unweighted mean binary cross-entropy."""
    target = _align(pred, target, "binary_cross_entropy")
    one = np.asarray(1.0)
    return _weighted_binary(pred, target, one, one, "binary_cross_entropy")


def weighted_bce(pred: Tensor, target: np.ndarray, alpha: AlphaLike) -> Tensor:
    """Weighted binary cross-entropy.

    ``alpha`` weights the background term log(1 - p) and ``1 - alpha`` the
    foreground term log(p), averaged over all pixels. A per-sample (N,) array
    applies one weight per batch element.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a <= 0.0) or np.any(a >= 1.0):
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    target = _align(pred, target, "weighted_bce")
    w_bg = _per_sample(a, pred)
    return _weighted_binary(pred, target, w_bg, 1.0 - w_bg, "weighted_bce")


def balanced_alpha(target: np.ndarray) -> float:
    """1 - (foreground pixels / all pixels) for one mask."""
    target = np.asarray(target)
    return 1.0 - float(np.count_nonzero(target == 1)) / target.size


def clamp_alpha(alpha: float) -> float:
    return min(max(alpha, EPS), 1.0 - EPS)


def resolve_alpha(targets: np.ndarray, weights: LossWeights) -> Optional[AlphaLike]:
    """Background weight for a batch under the configured loss mode.

    Returns None for plain (unweighted) loss, a float for a fixed alpha, and a
    per-sample array for balanced mode.
    """
    if weights.mode == LossMode.PLAIN:
        return None
    if weights.mode == LossMode.FIXED_ALPHA:
        return float(weights.alpha)
    alphas = []
    for t in np.asarray(targets):
        a = balanced_alpha(t)
        if weights.balanced_reading == BalancedReading.INVERSE_FREQUENCY:
            a = 1.0 - a
        alphas.append(clamp_alpha(a))
    return np.asarray(alphas)


def binary_loss(pred: Tensor, target: np.ndarray, weights: LossWeights) -> Tensor:
    """Plain, fixed-alpha or balanced binary loss per ``weights.mode``."""
    target = np.asarray(target)
    alpha = resolve_alpha(target, weights)
    if alpha is None:
        return binary_cross_entropy(pred, target)
    return weighted_bce(pred, target, alpha)


# ============================================================
# Categorical losses
# ============================================================

def _check_partition(onehot: np.ndarray) -> None:
    if not np.isin(onehot, (0, 1)).all() or not (onehot.sum(axis=1) == 1).all():
        raise ValueError("class masks must partition the image (exactly one class per pixel)")


def categorical_cross_entropy(
    pred: Tensor,
    onehot: np.ndarray,
    class_weights: Optional[Union[Sequence[float], np.ndarray]] = None,
) -> Tensor:
    """Mean categorical cross-entropy over pixels.

    Args:
        pred: N×3×H×W probabilities, channels (tumor, liver, other); a single
            3×H×W map is read as a batch of one
        onehot: stacked T, L, O masks shaped like ``pred``
        class_weights: (t, l, o) triple or N×3 per-sample triples; unweighted when None

    Returns:
        Scalar loss tensor
    """
    if pred.ndim not in (3, 4):
        raise ShapeError(f"categorical_cross_entropy: expected N×C×H×W or C×H×W, got {pred.shape}")
    onehot = np.asarray(onehot)
    if onehot.shape != pred.shape:
        raise ShapeError(f"categorical_cross_entropy: prediction {pred.shape} and masks {onehot.shape} differ")
    p_raw = pred.data if pred.ndim == 4 else pred.data[None]
    if onehot.ndim == 3:
        onehot = onehot[None]
    _check_partition(onehot)

    n, c = p_raw.shape[:2]
    if class_weights is None:
        w = np.ones((1, c, 1, 1))
    else:
        w = np.asarray(class_weights, dtype=np.float64)
        if w.shape == (c,):
            w = w.reshape(1, c, 1, 1)
        elif w.shape == (n, c):
            w = w.reshape(n, c, 1, 1)
        else:
            raise ShapeError(f"class weights {w.shape} do not fit prediction {pred.shape}")

    p = np.clip(p_raw, EPS, 1.0 - EPS)
    inside = (p_raw >= EPS) & (p_raw <= 1.0 - EPS)
    y = onehot.astype(p_raw.dtype)
    count = n * p_raw.shape[2] * p_raw.shape[3]
    loss = -(w * y * np.log(p)).sum() / count

    def rule(g: np.ndarray):
        d = -(w * y / p) / count
        grad = (g * d * inside).reshape(pred.shape)
        return (grad.astype(p_raw.dtype, copy=False),)

    return record(np.asarray(loss, dtype=p_raw.dtype), (pred,), rule, "categorical_cross_entropy")


def balanced_class_weights(
    tumor: np.ndarray, liver: np.ndarray, other: np.ndarray
) -> tuple[float, float, float]:
    """Per-class weight 1 - (class pixels / all pixels), as (t, l, o)."""
    stacked = np.stack([np.asarray(tumor), np.asarray(liver), np.asarray(other)])
    if not (stacked[0].shape == stacked[1].shape == stacked[2].shape):
        raise ShapeError("class masks must share one shape")
    _check_partition(stacked[None])
    total = stacked[0].size
    t, l, o = (1.0 - float(np.count_nonzero(m)) / total for m in stacked)
    return t, l, o


# ============================================================
# Joint objective
# ============================================================

def _mean_sample_bce(probs: np.ndarray, targets: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets)
    if probs.ndim == 4:
        probs = probs[:, 0]
    if targets.ndim == 4:
        targets = targets[:, 0]
    if probs.shape != targets.shape:
        raise ShapeError(f"probabilities {probs.shape} and targets {targets.shape} differ")
    with no_grad():
        per_sample = [
            binary_cross_entropy(Tensor(p[None, None]), t[None, None]).item()
            for p, t in zip(probs, targets)
        ]
    return float(np.mean(per_sample))


def joint_component_losses(
    liver_probs: np.ndarray,
    liver_targets: np.ndarray,
    tumor_probs: np.ndarray,
    tumor_targets: np.ndarray,
    liver_masks: np.ndarray,
) -> tuple[float, float]:
    """Dataset-mean liver loss and masked tumor loss.

    ``tumor_probs`` must already be the tumor network's output on the masked,
    windowed input; the tumor target is ``liver_masks * tumor_targets``.
    """
    liver_masks = np.asarray(liver_masks)
    tumor_targets = np.asarray(tumor_targets)
    if liver_masks.shape != tumor_targets.shape:
        raise ShapeError(f"liver masks {liver_masks.shape} and tumor targets {tumor_targets.shape} differ")
    liver = _mean_sample_bce(liver_probs, liver_targets)
    tumor = _mean_sample_bce(tumor_probs, liver_masks * tumor_targets)
    return liver, tumor


def joint_loss(
    liver_probs: np.ndarray,
    liver_targets: np.ndarray,
    tumor_probs: np.ndarray,
    tumor_targets: np.ndarray,
    liver_masks: np.ndarray,
    c: float,
) -> float:
    """c * mean liver loss + (1 - c) * mean masked tumor loss (evaluation only)."""
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"c must lie in [0, 1], got {c}")
    liver, tumor = joint_component_losses(
        liver_probs, liver_targets, tumor_probs, tumor_targets, liver_masks
    )
    return c * liver + (1.0 - c) * tumor
