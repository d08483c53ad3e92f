"""Differentiable operations used by the U-Nets.

All ops take and return ``Tensor`` in NCHW layout. Convolution is
cross-correlation (no kernel flip) computed over a sliding-window view.
"""

from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, record


def _require_4d(op: str, x: Tensor) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected an N×C×H×W tensor, got shape {x.shape}")


# ============================================================
# Convolution
# ============================================================

def conv2d(
    input: Tensor,
    kernel: Tensor,
    bias: Tensor,
    padding: Literal["same", "valid"] = "same",
) -> Tensor:
    """2D cross-correlation with per-filter bias.

    Args:
        input: N×C×H×W activations
        kernel: F×C×kH×kW filters, odd spatial extents
        bias: F biases
        padding: "same" zero-pads so the output keeps H×W; "valid" does not pad

    Returns:
        N×F×H'×W' output
    """
    _require_4d("conv2d", input)
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d: kernel must be F×C×kH×kW, got {kernel.shape}")
    n, c, h, w = input.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(
            f"conv2d: channel mismatch between input {input.shape} and kernel {kernel.shape}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel spatial dims must be odd, got kernel {kernel.shape}")
    if bias.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match kernel {kernel.shape}")
    if padding not in ("same", "valid"):
        raise ValueError(f"conv2d: unknown padding {padding!r}")

    ph, pw = (kh // 2, kw // 2) if padding == "same" else (0, 0)
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeError(f"conv2d: input {input.shape} is smaller than kernel {kernel.shape}")

    xp = np.pad(input.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    wk = kernel.data
    out = np.einsum("nchwij,fcij->nfhw", windows, wk, optimize=True)
    out = out + bias.data[None, :, None, None]
    ho, wo = out.shape[2], out.shape[3]

    def rule(g: np.ndarray):
        g_bias = g.sum(axis=(0, 2, 3))
        g_kernel = np.einsum("nchwij,nfhw->fcij", windows, g, optimize=True)
        g_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                g_xp[:, :, i:i + ho, j:j + wo] += np.einsum(
                    "nfhw,fc->nchw", g, wk[:, :, i, j], optimize=True
                )
        g_input = g_xp[:, :, ph:ph + h, pw:pw + w]
        return g_input, g_kernel, g_bias

    return record(out, (input, kernel, bias), rule, "conv2d")


# ============================================================
# Resampling
# ============================================================

def max_pool_2x2(input: Tensor) -> Tensor:
    """Max over disjoint 2×2 windows; ties route gradient to the first in row-major order."""
    _require_4d("max_pool_2x2", input)
    n, c, h, w = input.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool_2x2: spatial dims must be even, got {input.shape}")

    windows = (
        input.data.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def rule(g: np.ndarray):
        routed = np.zeros(windows.shape, dtype=g.dtype)
        np.put_along_axis(routed, arg[..., None], g[..., None], axis=-1)
        g_input = (
            routed.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        return (g_input,)

    return record(out, (input,), rule, "max_pool_2x2")


def upsample_nearest_2x(input: Tensor) -> Tensor:
    """Replicate every pixel into a 2×2 block."""
    _require_4d("upsample_nearest_2x", input)
    n, c, h, w = input.shape
    out = np.repeat(np.repeat(input.data, 2, axis=2), 2, axis=3)

    def rule(g: np.ndarray):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return record(out, (input,), rule, "upsample_nearest_2x")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``b`` after ``a`` along the channel axis."""
    _require_4d("concat_channels", a)
    _require_4d("concat_channels", b)
    na, ca, ha, wa = a.shape
    nb, _, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}")

    out = np.concatenate([a.data, b.data.astype(a.dtype, copy=False)], axis=1)

    def rule(g: np.ndarray):
        return g[:, :ca], g[:, ca:]

    return record(out, (a, b), rule, "concat_channels")


# ============================================================
# Nonlinearities
# ============================================================

def relu(input: Tensor) -> Tensor:
    x = input.data
    positive = x > 0

    def rule(g: np.ndarray):
        return (g * positive,)

    return record(np.where(positive, x, 0).astype(x.dtype, copy=False), (input,), rule, "relu")


def sigmoid(input: Tensor) -> Tensor:
    x = input.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

    def rule(g: np.ndarray):
        return (g * out * (1.0 - out),)

    return record(out, (input,), rule, "sigmoid")


def activation(input: Tensor, kind: Literal["relu", "sigmoid"]) -> Tensor:
    if kind == "relu":
        return relu(input)
    if kind == "sigmoid":
        return sigmoid(input)
    raise ValueError(f"unknown activation {kind!r}")


def softmax_channels(input: Tensor) -> Tensor:
    """Softmax across the channel axis at every pixel."""
    _require_4d("softmax_channels", input)
    z = input.data - input.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def rule(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return record(out, (input,), rule, "softmax_channels")


# ============================================================
# Regularization
# ============================================================

def dropout(
    input: Tensor,
    rate: float,
    training: bool,
    rng: np.random.Generator,
) -> Tensor:
    """Inverted dropout; the identity outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return input

    keep = (rng.random(input.shape) >= rate).astype(input.dtype) / input.dtype.type(1.0 - rate)

    def rule(g: np.ndarray):
        return (g * keep,)

    return record(input.data * keep, (input,), rule, "dropout")
