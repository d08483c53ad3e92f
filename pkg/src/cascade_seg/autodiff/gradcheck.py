"""Central finite-difference oracle for analytic gradients."""

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numerical_gradient(
    fn: Callable[[], float],
    array: np.ndarray,
    eps: float = 1e-4,
    indices: Optional[Sequence[tuple[int, ...]]] = None,
) -> np.ndarray:
    """Estimate d fn / d array by central differences, perturbing ``array`` in place.

    Entries not listed in ``indices`` (when given) are left at zero.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    targets = indices if indices is not None else list(np.ndindex(array.shape))
    for idx in targets:
        original = array[idx]
        array[idx] = original + eps
        plus = fn()
        array[idx] = original - eps
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||); 0 when both vanish."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-4,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> list[float]:
    """Compare backward() against finite differences for each tensor.

    Args:
        loss_fn: rebuilds the scalar loss from the current tensor values
        tensors: float64 leaves with requires_grad
        eps: central-difference step
        max_entries: when set, check only this many randomly chosen entries per tensor
        rng: generator for entry sampling

    Returns:
        Relative error per tensor, in order
    """
    for t in tensors:
        t.zero_grad()
    backward(loss_fn())
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    def value() -> float:
        with no_grad():
            return loss_fn().item()

    rng = rng or np.random.default_rng(0)
    errors = []
    for t, a in zip(tensors, analytic):
        all_idx = list(np.ndindex(t.shape))
        if max_entries is not None and len(all_idx) > max_entries:
            chosen = rng.choice(len(all_idx), size=max_entries, replace=False)
            idx = [all_idx[i] for i in sorted(chosen)]
            mask = np.zeros(t.shape, dtype=bool)
            for i in idx:
                mask[i] = True
            numeric = numerical_gradient(value, t.data, eps, idx)
            errors.append(relative_error(a[mask], numeric[mask]))
        else:
            numeric = numerical_gradient(value, t.data, eps)
            errors.append(relative_error(a, numeric))
    return errors
