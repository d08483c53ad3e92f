"""Pydantic models for all Cascade Seg configuration and report types."""

import hashlib
from enum import Enum
from typing import Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, field_validator, model_validator


# ============================================================
# Array aliases
# ============================================================

# Real-valued H×W (or N×H×W) image.
Image = npt.NDArray[np.floating]
# Per-pixel class over {0 background, 1 liver, 2 tumor}.
LabelMap = npt.NDArray[np.integer]
# Per-pixel {0, 1}.
BinaryMask = npt.NDArray[np.integer]
# Per-pixel [0, 1]; channel axis first for three-class maps.
ProbabilityMap = npt.NDArray[np.floating]


# ============================================================
# Enums
# ============================================================

class Head(str, Enum):
    BINARY_SIGMOID = "binary_sigmoid"
    SOFTMAX3 = "softmax3"


class Precision(str, Enum):
    FLOAT32 = "float32"
    FLOAT64 = "float64"


class LossMode(str, Enum):
    PLAIN = "plain"
    FIXED_ALPHA = "fixed_alpha"
    BALANCED = "balanced"


class BalancedReading(str, Enum):
    """How a per-sample balanced α enters the weighted binary loss."""
    INVERSE_FREQUENCY = "inverse_frequency"  # background weight = foreground fraction
    LITERAL = "literal"  # background weight = 1 - foreground fraction


class MaskSource(str, Enum):
    """Where the stage-2 liver mask comes from."""
    TRAINED = "trained"
    GROUND_TRUTH = "ground_truth"


class ModelKind(str, Enum):
    ONE_STEP = "one_step"
    SEQUENTIAL = "sequential"


class Aggregation(str, Enum):
    POOLED = "pooled"
    PER_IMAGE = "per_image"


# ============================================================
# Network / Training Models
# ============================================================

class UNetConfig(BaseModel):
    """Shape of one U-Net."""
    input_size: int = 64
    depth: int = 3
    base_channels: int = 8
    dropout_rate: float = 0.4
    head: Head = Head.BINARY_SIGMOID
    precision: Precision = Precision.FLOAT32

    @field_validator("input_size")
    @classmethod
    def _even_size(cls, v: int) -> int:
        if v <= 0 or v % 2:
            raise ValueError(f"input_size must be a positive even number, got {v}")
        return v

    @field_validator("depth", "base_channels")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be >= 1, got {v}")
        return v

    @field_validator("dropout_rate")
    @classmethod
    def _rate(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {v}")
        return v

    @model_validator(mode="after")
    def _divisible(self) -> "UNetConfig":
        if self.input_size % (2 ** self.depth):
            raise ValueError(
                f"input_size {self.input_size} is not divisible by 2^depth = {2 ** self.depth}"
            )
        return self

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision.value)

    @property
    def out_channels(self) -> int:
        return 1 if self.head == Head.BINARY_SIGMOID else 3

    def digest(self) -> str:
        """Hex SHA-256 of the canonical JSON form; stored in checkpoints."""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


class LossWeights(BaseModel):
    """Weighting of the binary and categorical losses."""
    mode: LossMode = LossMode.BALANCED
    alpha: Optional[float] = None
    balanced_reading: BalancedReading = BalancedReading.INVERSE_FREQUENCY
    class_weights: Optional[tuple[float, float, float]] = None
    joint_c: float = 0.5

    @model_validator(mode="after")
    def _check(self) -> "LossWeights":
        if self.mode == LossMode.FIXED_ALPHA:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError(f"fixed_alpha mode needs alpha strictly inside (0, 1), got {self.alpha}")
        if self.class_weights is not None and any(not 0.0 <= w <= 1.0 for w in self.class_weights):
            raise ValueError(f"class weights must lie in [0, 1], got {self.class_weights}")
        if not 0.0 <= self.joint_c <= 1.0:
            raise ValueError(f"joint_c must lie in [0, 1], got {self.joint_c}")
        return self


class TrainConfig(BaseModel):
    """Optimizer and schedule settings for both training procedures."""
    lr_initial: float = Field(default=0.001, ge=0.0)
    lr_finetune: float = Field(default=0.0001, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    epochs_main: int = Field(default=40, ge=1)
    epochs_finetune: int = Field(default=20, ge=1)
    epochs_liver: int = Field(default=60, ge=1)  # sequential stage 1
    batch_size: int = Field(default=4, ge=1)
    loss_mode: LossMode = LossMode.BALANCED
    alpha: Optional[float] = None
    balanced_reading: BalancedReading = BalancedReading.INVERSE_FREQUENCY
    class_weights: Optional[tuple[float, float, float]] = None  # one-step fine-tune (t, l, o)
    joint_c: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    mask_source: MaskSource = MaskSource.TRAINED
    seed: int = Field(default=42, ge=0, lt=2 ** 64)

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.lr_finetune > self.lr_initial:
            raise ValueError(
                f"lr_finetune ({self.lr_finetune}) must not exceed lr_initial ({self.lr_initial})"
            )
        if self.loss_mode == LossMode.FIXED_ALPHA and (self.alpha is None or not 0.0 < self.alpha < 1.0):
            raise ValueError(f"loss_mode fixed_alpha needs alpha strictly inside (0, 1), got {self.alpha}")
        if self.class_weights is not None and any(not 0.0 <= w <= 1.0 for w in self.class_weights):
            raise ValueError(f"class weights must lie in [0, 1], got {self.class_weights}")
        return self

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            mode=self.loss_mode,
            alpha=self.alpha,
            balanced_reading=self.balanced_reading,
            class_weights=self.class_weights,
            joint_c=0.5 if self.joint_c is None else self.joint_c,
        )


class EpochRecord(BaseModel):
    """One row of the epochs CSV."""
    epoch: int
    phase: str
    mean_loss: float
    val_pixel_acc: Optional[float] = None
    val_iou_liver: Optional[float] = None
    val_iou_tumor: Optional[float] = None


class TrainReport(BaseModel):
    """Per-network training outcome."""
    network: str
    records: list[EpochRecord] = Field(default_factory=list)
    wall_time_s: float = 0.0
    checkpoint: Optional[str] = None
    joint_objective: Optional[float] = None  # tumor report of the cascade


# ============================================================
# Pipeline Models
# ============================================================

class WindowSpec(BaseModel):
    """Intensity window applied pointwise before the tumor network."""
    lo: float = 0.0
    hi: float = 1.0

    @model_validator(mode="after")
    def _ordered(self) -> "WindowSpec":
        if not self.hi > self.lo:
            raise ValueError(f"window needs hi > lo, got lo={self.lo} hi={self.hi}")
        return self


class CascadeThresholds(BaseModel):
    """Decision thresholds for the liver (t_a) and tumor (t_b) networks."""
    t_a: float = Field(default=0.5, gt=0.0, lt=1.0)
    t_b: float = Field(default=0.5, gt=0.0, lt=1.0)


# ============================================================
# Data Models
# ============================================================

class PhantomSpec(BaseModel):
    """Recipe for synthetic liver/tumor slices."""
    size: int = Field(default=64, ge=8)
    liver_radius_range: tuple[float, float] = (0.22, 0.38)
    tumor_count_range: tuple[int, int] = (0, 3)
    tumor_radius_range: tuple[float, float] = (0.03, 0.08)
    background_mean: float = 0.15
    liver_mean: float = 0.55
    tumor_mean: float = 0.85
    distractor_mean: float = 0.35
    noise_sigma: float = Field(default=0.05, ge=0.0)
    distractor_count_range: tuple[int, int] = (0, 2)
    seed: int = Field(default=42, ge=0, lt=2 ** 64)

    @field_validator("liver_radius_range", "tumor_radius_range")
    @classmethod
    def _radius_range(cls, v: tuple[float, float]) -> tuple[float, float]:
        lo, hi = v
        if lo > hi:
            raise ValueError(f"range low {lo} exceeds high {hi}")
        if not (0.0 < lo < 0.5 and 0.0 < hi < 0.5):
            raise ValueError(f"radius fractions must lie in (0, 0.5), got {v}")
        return v

    @field_validator("tumor_count_range", "distractor_count_range")
    @classmethod
    def _count_range(cls, v: tuple[int, int]) -> tuple[int, int]:
        lo, hi = v
        if lo < 0 or lo > hi:
            raise ValueError(f"count range must satisfy 0 <= low <= high, got {v}")
        return v

    @model_validator(mode="after")
    def _separated(self) -> "PhantomSpec":
        means = {
            "background": self.background_mean,
            "liver": self.liver_mean,
            "tumor": self.tumor_mean,
        }
        names = list(means)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                if abs(means[a] - means[b]) < 2 * self.noise_sigma:
                    raise ValueError(
                        f"{a} and {b} means must be separated by at least 2 sigma "
                        f"({2 * self.noise_sigma}), got {means[a]} and {means[b]}"
                    )
        return self


# ============================================================
# Metrics Models
# ============================================================

class ConfusionCounts(BaseModel):
    """Pixel counts with positive = class 1."""
    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


class ROCPoint(BaseModel):
    threshold: float
    fpr: float
    tpr: float


class ROCCurve(BaseModel):
    """Operating points ordered by strictly decreasing threshold."""
    points: list[ROCPoint] = Field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.points

    @model_validator(mode="after")
    def _monotone(self) -> "ROCCurve":
        for prev, cur in zip(self.points, self.points[1:]):
            if not cur.threshold < prev.threshold:
                raise ValueError("ROC thresholds must be strictly decreasing")
            if cur.fpr < prev.fpr or cur.tpr < prev.tpr:
                raise ValueError("ROC fpr/tpr must be non-decreasing along the curve")
        return self


class HistogramBin(BaseModel):
    bin_low: float
    bin_high: float
    count: int


class ClassMetrics(BaseModel):
    """Metrics of one class over the evaluated set."""
    pixel_accuracy: float
    iou: float
    rand_index: float
    restricted_auc: Optional[float] = None
    chosen_threshold: Optional[float] = None


class MetricsReport(BaseModel):
    """Liver and tumor rows for a prediction set."""
    liver: ClassMetrics
    tumor: ClassMetrics
    aggregation: Aggregation = Aggregation.POOLED
    n_images: int = 0
