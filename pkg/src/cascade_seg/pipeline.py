"""One-step and sequential (cascade) segmentation systems.

Label convention: 0 background/other tissue, 1 liver, 2 tumor. Images may be
single H×W arrays or N×H×W stacks; every function works elementwise over the
leading axes.
"""

from dataclasses import dataclass

import numpy as np
import structlog

from .autodiff import ShapeError
from .models import (
    BinaryMask,
    CascadeThresholds,
    Head,
    Image,
    LabelMap,
    ProbabilityMap,
    WindowSpec,
)
from .network import Network

logger = structlog.get_logger()

# Display values for label maps (tumor 1, liver 0.5, background 0).
DISPLAY_VALUES = np.array([0.0, 0.5, 1.0])


@dataclass
class Masks:
    """Binary masks derived from a label map."""
    liver_or_tumor: BinaryMask  # A
    tumor: BinaryMask  # B
    tumor_class: BinaryMask  # T
    liver_class: BinaryMask  # L
    other_class: BinaryMask  # O

    def onehot(self) -> np.ndarray:
        """T, L, O stacked on a channel axis inserted after the leading axes."""
        axis = 1 if self.tumor_class.ndim == 3 else 0
        return np.stack([self.tumor_class, self.liver_class, self.other_class], axis=axis)


@dataclass
class CascadeResult:
    labels: LabelMap
    liver_probs: ProbabilityMap
    liver_mask: BinaryMask
    tumor_probs: ProbabilityMap
    tumor_mask: BinaryMask


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def derive_masks(labels: LabelMap) -> Masks:
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1, 2)).all():
        raise ValueError("label map may only contain 0, 1 and 2")
    tumor = (labels == 2).astype(np.uint8)
    liver = (labels == 1).astype(np.uint8)
    return Masks(
        liver_or_tumor=(labels >= 1).astype(np.uint8),
        tumor=tumor,
        tumor_class=tumor.copy(),
        liver_class=liver,
        other_class=(labels == 0).astype(np.uint8),
    )


def window(image: Image, spec: WindowSpec) -> Image:
    """Clamp to [lo, hi] and rescale affinely to [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    return (np.clip(image, spec.lo, spec.hi) - spec.lo) / (spec.hi - spec.lo)


def threshold(prob: ProbabilityMap, t: float) -> BinaryMask:
    """1 where prob > t (strict)."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {t}")
    return (np.asarray(prob) > t).astype(np.uint8)


def masked_input(image: Image, liver_mask: BinaryMask, spec: WindowSpec) -> Image:
    """w(M * X): pixels outside the mask become window(0)."""
    image = np.asarray(image, dtype=np.float64)
    liver_mask = np.asarray(liver_mask)
    _check_same_shape(image, liver_mask, "masked_input")
    return window(image * liver_mask, spec)


def final_classify(liver_mask: BinaryMask, tumor_mask: BinaryMask) -> LabelMap:
    """2 where M = T = 1, 1 where M = 1 and T = 0, 0 otherwise."""
    m = np.asarray(liver_mask)
    t = np.asarray(tumor_mask)
    _check_same_shape(m, t, "final_classify")
    labels = np.zeros(m.shape, dtype=np.uint8)
    labels[m == 1] = 1
    labels[(m == 1) & (t == 1)] = 2
    return labels


def _require_head(net: Network, head: Head, role: str) -> None:
    if net.head != head:
        raise ValueError(f"{role} network must have a {head.value} head, got {net.head.value}")


def sequential_predict(
    net_a: Network,
    net_b: Network,
    image: Image,
    thresholds: CascadeThresholds,
    spec: WindowSpec,
) -> CascadeResult:
    """Liver network, mask + window, tumor network, classification rule."""
    _require_head(net_a, Head.BINARY_SIGMOID, "liver")
    _require_head(net_b, Head.BINARY_SIGMOID, "tumor")
    image = np.asarray(image, dtype=np.float64)
    single = image.ndim == 2
    stack = image[None] if single else image

    liver_probs = net_a.predict(stack)[:, 0]
    liver_mask = threshold(liver_probs, thresholds.t_a)
    tumor_input = masked_input(stack, liver_mask, spec)
    tumor_probs = net_b.predict(tumor_input)[:, 0]
    tumor_mask = threshold(tumor_probs, thresholds.t_b) & liver_mask
    labels = final_classify(liver_mask, tumor_mask)

    if single:
        return CascadeResult(labels[0], liver_probs[0], liver_mask[0], tumor_probs[0], tumor_mask[0])
    return CascadeResult(labels, liver_probs, liver_mask, tumor_probs, tumor_mask)


def labels_from_class_probs(probs: ProbabilityMap) -> LabelMap:
    """Argmax over (tumor, liver, other) channels; ties go to the lower label."""
    probs = np.asarray(probs)
    channel_axis = probs.ndim - 3
    # reorder to label order (other, liver, tumor) so argmax's first-max rule picks the lower label
    by_label = np.flip(probs, axis=channel_axis)
    return np.argmax(by_label, axis=channel_axis).astype(np.uint8)


def one_step_predict(net_c: Network, image: Image) -> tuple[LabelMap, ProbabilityMap]:
    """Labels and the three-channel probability map of the one-step network."""
    _require_head(net_c, Head.SOFTMAX3, "one-step")
    image = np.asarray(image, dtype=np.float64)
    single = image.ndim == 2
    probs = net_c.predict(image[None] if single else image)
    labels = labels_from_class_probs(probs)
    if single:
        return labels[0], probs[0]
    return labels, probs


def display_encoding(labels: LabelMap) -> Image:
    """Tumor 1.0, liver 0.5, background 0.0."""
    return DISPLAY_VALUES[np.asarray(labels)]
