"""Shared fixtures for the Cascade Seg test suite."""

import os

import numpy as np
import pytest
import structlog

from cascade_seg.config import get_settings
from cascade_seg.models import Head, PhantomSpec, Precision, UNetConfig


# =============================================================================
# Isolation
# =============================================================================

@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch, tmp_path):
    """No CASCADE_SEG_* variables, no stray .env, fresh cached settings and logging."""
    for key in list(os.environ):
        if key.startswith("CASCADE_SEG_"):
            monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(tmp_path)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    structlog.reset_defaults()


# =============================================================================
# Random data
# =============================================================================

@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest useful float64 U-Net for gradient checks."""
    return UNetConfig(input_size=4, depth=1, base_channels=2, dropout_rate=0.0, precision=Precision.FLOAT64)


@pytest.fixture
def small_binary_config():
    return UNetConfig(input_size=16, depth=1, base_channels=2, dropout_rate=0.4, head=Head.BINARY_SIGMOID)


@pytest.fixture
def small_softmax_config():
    return UNetConfig(input_size=16, depth=1, base_channels=2, dropout_rate=0.4, head=Head.SOFTMAX3)


@pytest.fixture
def small_spec():
    return PhantomSpec(size=16, seed=7)


def random_labels(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.integers(0, 3, size=shape).astype(np.uint8)


def random_mask(rng: np.random.Generator, shape: tuple[int, ...], p: float = 0.5) -> np.ndarray:
    return (rng.random(shape) < p).astype(np.uint8)
