"""Synthetic liver/tumor phantoms.

Each slice holds one rotated liver ellipse, zero or more tumor disks placed
strictly inside it, and distractor ellipses in the background that never
touch the liver. Labels are rendered first; Gaussian noise is added per
region afterwards and the image is clamped to [0, 1]. Sample ``k`` of a spec
depends only on (spec, k).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..models import Image, LabelMap, PhantomSpec
from ..rng import generator

DISTRACTOR_ATTEMPTS = 20
# distractor semi-axes relative to the liver radius range
DISTRACTOR_SCALE = 0.4


@dataclass(frozen=True)
class Ellipse:
    """Ellipse in pixel coordinates (x = column, y = row), angle in radians."""
    cx: float
    cy: float
    a: float
    b: float
    angle: float

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx = x - self.cx
        dy = y - self.cy
        cos, sin = math.cos(self.angle), math.sin(self.angle)
        u = cos * dx + sin * dy
        v = -sin * dx + cos * dy
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0

    @property
    def outer_radius(self) -> float:
        return max(self.a, self.b)


@dataclass
class Sample:
    """One image/label pair."""
    image: Image
    labels: LabelMap
    index: int = 0
    liver: Optional[Ellipse] = None


def _random_ellipse(rng: np.random.Generator, size: int, radius_range: tuple[float, float], scale: float = 1.0) -> Ellipse:
    a = rng.uniform(*radius_range) * size * scale
    b = rng.uniform(*radius_range) * size * scale
    angle = rng.uniform(0.0, math.pi)
    r = max(a, b)
    mid = (size - 1) / 2.0
    lo, hi = min(r, mid), max(size - 1 - r, mid)
    return Ellipse(cx=rng.uniform(lo, hi), cy=rng.uniform(lo, hi), a=a, b=b, angle=angle)


def _tumor_center(rng: np.random.Generator, liver: Ellipse, radius: float) -> tuple[float, float]:
    """Center such that the disk of ``radius`` lies inside the liver ellipse.

    The liver contains the disk of its minor semi-axis around its center, so
    any point of the liver shrunk by s = 1 - radius / minor keeps a disk of
    ``radius`` inside the liver.
    """
    s = 1.0 - radius / min(liver.a, liver.b)
    rho = math.sqrt(rng.uniform(0.0, 1.0))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    u = s * liver.a * rho * math.cos(phi)
    v = s * liver.b * rho * math.sin(phi)
    cos, sin = math.cos(liver.angle), math.sin(liver.angle)
    return liver.cx + cos * u - sin * v, liver.cy + sin * u + cos * v


def generate_phantom(spec: PhantomSpec, index: int) -> Sample:
    """Render sample ``index`` of ``spec``."""
    if index < 0:
        raise ValueError(f"sample index must be non-negative, got {index}")
    rng = generator(spec.seed, index)
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)

    liver = _random_ellipse(rng, n, spec.liver_radius_range)
    liver_region = liver.contains(xx, yy)

    tumor_region = np.zeros((n, n), dtype=bool)
    minor = min(liver.a, liver.b)
    for _ in range(rng.integers(spec.tumor_count_range[0], spec.tumor_count_range[1] + 1)):
        radius = min(rng.uniform(*spec.tumor_radius_range) * n, 0.5 * minor)
        tx, ty = _tumor_center(rng, liver, radius)
        disk = (xx - tx) ** 2 + (yy - ty) ** 2 <= radius ** 2
        tumor_region |= disk & liver_region

    distractor_region = np.zeros((n, n), dtype=bool)
    for _ in range(rng.integers(spec.distractor_count_range[0], spec.distractor_count_range[1] + 1)):
        for _ in range(DISTRACTOR_ATTEMPTS):
            d = _random_ellipse(rng, n, spec.liver_radius_range, scale=DISTRACTOR_SCALE)
            if math.hypot(d.cx - liver.cx, d.cy - liver.cy) > liver.outer_radius + d.outer_radius:
                distractor_region |= d.contains(xx, yy)
                break

    labels = np.zeros((n, n), dtype=np.uint8)
    labels[liver_region] = 1
    labels[tumor_region] = 2

    means = np.full((n, n), spec.background_mean)
    means[distractor_region] = spec.distractor_mean
    means[liver_region] = spec.liver_mean
    means[tumor_region] = spec.tumor_mean
    image = np.clip(means + rng.normal(0.0, spec.noise_sigma, size=(n, n)), 0.0, 1.0)

    return Sample(image=image, labels=labels, index=index, liver=liver)


def generate_phantoms(spec: PhantomSpec, indices: Sequence[int], workers: int = 1) -> list[Sample]:
    """Render several samples; results do not depend on ``workers``."""
    if workers <= 1:
        return [generate_phantom(spec, i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: generate_phantom(spec, i), indices))


def normalize_intensity(image: Image) -> Image:
    """Min-max standardization to [0, 1]; constant images map to 0."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    if hi == lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)
