"""Run configuration.

A run is described by a flat ``key = value`` file (UTF-8, ``#`` comments).
Keys are the field names of ``Settings``; missing keys take the defaults
below. Environment variables with the ``CASCADE_SEG_`` prefix (or a ``.env``
file) take precedence over file values, so ``CASCADE_SEG_SEED=7`` reruns a
configured experiment with another seed.

The effective configuration is echoed to ``config.resolved`` next to every
command's outputs in the same format; feeding it back reproduces the run.
"""

from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import (
    Aggregation,
    BalancedReading,
    CascadeThresholds,
    Head,
    LossMode,
    LossWeights,
    MaskSource,
    ModelKind,
    PhantomSpec,
    Precision,
    TrainConfig,
    UNetConfig,
    WindowSpec,
)

RESOLVED_NAME = "config.resolved"


class Settings(BaseSettings):
    """Cascade Seg settings from a run config file and the environment."""

    model_config = SettingsConfigDict(
        env_prefix="CASCADE_SEG_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Model
    model: ModelKind = ModelKind.SEQUENTIAL
    image_size: int = 64  # phantom size and network input size
    depth: int = 3
    base_channels: int = 8
    dropout_rate: float = 0.4
    precision: Precision = Precision.FLOAT32

    # Training
    seed: int = Field(default=42, ge=0, lt=2 ** 64)
    lr_initial: float = 0.001
    lr_finetune: float = 0.0001
    momentum: float = 0.9
    epochs_main: int = 40
    epochs_finetune: int = 20
    epochs_liver: int = 60
    batch_size: int = 4
    loss_mode: LossMode = LossMode.BALANCED
    alpha: Optional[float] = None
    balanced_reading: BalancedReading = BalancedReading.INVERSE_FREQUENCY
    class_weight_tumor: Optional[float] = None  # all three or none
    class_weight_liver: Optional[float] = None
    class_weight_other: Optional[float] = None
    joint_c: Optional[float] = None
    mask_source: MaskSource = MaskSource.TRAINED

    # Cascade
    t_a: float = 0.5
    t_b: float = 0.5
    window_lo: float = 0.0
    window_hi: float = 1.0
    normalize_inputs: bool = False  # min-max standardize images given to predict

    # Phantom data
    n_train: int = Field(default=256, ge=1)
    n_val: int = Field(default=32, ge=1)
    n_test: int = Field(default=32, ge=1)
    workers: int = Field(default=1, ge=1)
    liver_radius_min: float = 0.22
    liver_radius_max: float = 0.38
    tumor_count_min: int = 0
    tumor_count_max: int = 3
    tumor_radius_min: float = 0.03
    tumor_radius_max: float = 0.08
    background_mean: float = 0.15
    liver_mean: float = 0.55
    tumor_mean: float = 0.85
    distractor_mean: float = 0.35
    noise_sigma: float = 0.05
    distractor_count_min: int = 0
    distractor_count_max: int = 2

    # Evaluation
    band_lo: float = 0.01
    band_hi: float = 0.99
    histogram_bins: int = Field(default=49, ge=1)
    aggregation: Aggregation = Aggregation.POOLED

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # environment beats values read from the run config file
        return env_settings, dotenv_settings, init_settings, file_secret_settings

    @model_validator(mode="after")
    def _consistent(self) -> "Settings":
        self.unet_config(Head.BINARY_SIGMOID)
        self.train_config()
        self.phantom_spec()
        self.thresholds()
        self.window()
        if not 0.0 <= self.band_lo < self.band_hi <= 1.0:
            raise ValueError(f"band needs 0 <= band_lo < band_hi <= 1, got ({self.band_lo}, {self.band_hi})")
        return self

    # ============================================================
    # Typed views
    # ============================================================

    def unet_config(self, head: Head) -> UNetConfig:
        return UNetConfig(
            input_size=self.image_size,
            depth=self.depth,
            base_channels=self.base_channels,
            dropout_rate=self.dropout_rate,
            head=head,
            precision=self.precision,
        )

    def train_config(self) -> TrainConfig:
        triple = (self.class_weight_tumor, self.class_weight_liver, self.class_weight_other)
        if any(w is None for w in triple) and any(w is not None for w in triple):
            raise ValueError("class_weight_tumor, class_weight_liver and class_weight_other must be set together")
        class_weights = None if triple[0] is None else triple
        return TrainConfig(
            lr_initial=self.lr_initial,
            lr_finetune=self.lr_finetune,
            momentum=self.momentum,
            epochs_main=self.epochs_main,
            epochs_finetune=self.epochs_finetune,
            epochs_liver=self.epochs_liver,
            batch_size=self.batch_size,
            loss_mode=self.loss_mode,
            alpha=self.alpha,
            balanced_reading=self.balanced_reading,
            class_weights=class_weights,
            joint_c=self.joint_c,
            mask_source=self.mask_source,
            seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        return self.train_config().loss_weights()

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec(
            size=self.image_size,
            liver_radius_range=(self.liver_radius_min, self.liver_radius_max),
            tumor_count_range=(self.tumor_count_min, self.tumor_count_max),
            tumor_radius_range=(self.tumor_radius_min, self.tumor_radius_max),
            background_mean=self.background_mean,
            liver_mean=self.liver_mean,
            tumor_mean=self.tumor_mean,
            distractor_mean=self.distractor_mean,
            noise_sigma=self.noise_sigma,
            distractor_count_range=(self.distractor_count_min, self.distractor_count_max),
            seed=self.seed,
        )

    def thresholds(self) -> CascadeThresholds:
        return CascadeThresholds(t_a=self.t_a, t_b=self.t_b)

    def window(self) -> WindowSpec:
        return WindowSpec(lo=self.window_lo, hi=self.window_hi)

    @property
    def band(self) -> tuple[float, float]:
        return self.band_lo, self.band_hi

    def with_overrides(self, **overrides: Any) -> "Settings":
        """Copy with explicit (e.g. command-line) values applied; None means unset."""
        update = {k: v for k, v in overrides.items() if v is not None}
        if not update:
            return self
        unknown = sorted(set(update) - set(type(self).model_fields))
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
        return type(self).model_validate({**self.model_dump(), **update})


# ============================================================
# Run config files
# ============================================================

def parse_run_config(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; blank values mean unset."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: missing key")
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        if value:
            values[key] = value
    unknown = sorted(set(values) - set(Settings.model_fields))
    if unknown:
        raise ValueError(f"{source}: unknown configuration keys: {', '.join(unknown)}")
    return values


def read_run_config(path: Union[str, Path]) -> dict[str, str]:
    path = Path(path)
    return parse_run_config(path.read_text(encoding="utf-8"), source=str(path))


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: Any) -> Settings:
    """Settings from an optional run config file, the environment and overrides."""
    base = Settings(**read_run_config(path)) if path is not None else get_settings()
    return base.with_overrides(**overrides)


def _render(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_resolved(settings: Settings) -> str:
    lines = ["# effective configuration"]
    for key, value in sorted(settings.model_dump().items()):
        if value is not None:
            lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"


def write_resolved(settings: Settings, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / RESOLVED_NAME
    path.write_text(render_resolved(settings), encoding="utf-8")
    return path


@lru_cache()
def get_settings() -> Settings:
    """Get cached default settings (environment applied)."""
    return Settings()
