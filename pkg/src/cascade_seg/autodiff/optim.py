"""Stochastic gradient descent with momentum."""

from typing import Mapping, MutableMapping, Optional

import numpy as np

from .tensor import ShapeError, Tensor


def sgd_momentum_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    lr: float,
    momentum: float,
    velocity: Optional[Mapping[str, np.ndarray]] = None,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One update ``v <- momentum*v + g; w <- w - lr*v``.

    Args:
        params: current parameter arrays by name
        grads: gradients aligned with ``params``
        lr: learning rate
        momentum: coefficient in [0, 1)
        velocity: previous velocity (zeros when None)

    Returns:
        (updated params, updated velocity)
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    if set(grads) != set(params):
        raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    if velocity is not None and set(velocity) != set(params):
        raise ShapeError(f"velocity names {sorted(velocity)} do not match parameters {sorted(params)}")

    new_params: dict[str, np.ndarray] = {}
    new_velocity: dict[str, np.ndarray] = {}
    for name, w in params.items():
        g = grads[name]
        v = np.zeros_like(w) if velocity is None else velocity[name]
        if g.shape != w.shape or v.shape != w.shape:
            raise ShapeError(
                f"{name}: parameter {w.shape}, gradient {g.shape}, velocity {v.shape} differ"
            )
        v = momentum * v + g
        new_velocity[name] = v.astype(w.dtype, copy=False)
        new_params[name] = (w - lr * v).astype(w.dtype, copy=False)
    return new_params, new_velocity


class SGDMomentum:
    """Stateful optimizer over a named parameter collection.

    Example:
        opt = SGDMomentum(net.params, lr=0.001, momentum=0.9)
        opt.zero_grad()
        loss.backward()
        opt.step()
    """

    def __init__(self, params: MutableMapping[str, Tensor], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {
            name: np.zeros_like(t.data) for name, t in params.items()
        }

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def step(self) -> None:
        current = {name: t.data for name, t in self.params.items()}
        grads = {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self.params.items()
        }
        updated, self.velocity = sgd_momentum_step(
            current, grads, self.lr, self.momentum, self.velocity
        )
        for name, t in self.params.items():
            t.data[...] = updated[name]
