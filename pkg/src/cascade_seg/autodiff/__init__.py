"""Reverse-mode differentiation engine."""

from .tensor import ComputationTape, ShapeError, Tensor, backward, grad_enabled, no_grad
from .ops import (
    activation,
    concat_channels,
    conv2d,
    dropout,
    max_pool_2x2,
    relu,
    sigmoid,
    softmax_channels,
    upsample_nearest_2x,
)
from .optim import SGDMomentum, sgd_momentum_step
from .gradcheck import check_gradients, numerical_gradient, relative_error

__all__ = [
    "ComputationTape",
    "ShapeError",
    "Tensor",
    "backward",
    "grad_enabled",
    "no_grad",
    "activation",
    "concat_channels",
    "conv2d",
    "dropout",
    "max_pool_2x2",
    "relu",
    "sigmoid",
    "softmax_channels",
    "upsample_nearest_2x",
    "SGDMomentum",
    "sgd_momentum_step",
    "check_gradients",
    "numerical_gradient",
    "relative_error",
]
