"""
Experiment configuration.

Typed dataclasses for every tunable constant of the model, the losses, the
pair construction, the optimizer schedule, the augmentations and the quality
gate. A JSON file passed with --config is parsed into a TrainConfig; unknown
keys are rejected.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.errors import ConfigError


@dataclass
class ModelConfig:
    """Sizes of the tokenizer, the alternating-attention trunk and the heads."""

    num_blocks: int = 4
    hidden_dim: int = 64
    num_heads: int = 4
    patch_size: int = 16
    num_registers: int = 16
    register_attention_ratio: float = 0.25
    image_height: int = 64
    image_width: int = 64
    mlp_ratio: int = 4
    depth_upsample: int = 4
    camera_head_blocks: int = 2
    num_taps: int = 4

    def validate(self) -> List[str]:
        errors = []
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            errors.append(
                f"image size {self.image_height}x{self.image_width} not divisible "
                f"by patch size {self.patch_size}"
            )
        if self.hidden_dim % self.num_heads:
            errors.append(f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.register_attention_ratio <= 1.0:
            errors.append(f"register_attention_ratio must be in [0, 1], got {self.register_attention_ratio}")
        if self.patch_size % self.depth_upsample:
            errors.append(
                f"patch_size {self.patch_size} must be a multiple of depth_upsample {self.depth_upsample}"
            )
        if self.num_blocks < 1 or self.num_taps < 1:
            errors.append("num_blocks and num_taps must be positive")
        return errors

    def check(self) -> "ModelConfig":
        errors = self.validate()
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    @property
    def grid_size(self) -> Tuple[int, int]:
        return self.image_height // self.patch_size, self.image_width // self.patch_size

    @property
    def num_patches(self) -> int:
        h, w = self.grid_size
        return h * w

    def register_block_indices(self) -> List[int]:
        """Blocks whose global layer is register attention.

        Every ceil(1/ratio)-th block, counting from one, so ratio 0.25 replaces
        blocks 3, 7, 11, ...
        """
        if self.register_attention_ratio <= 0.0:
            return []
        period = math.ceil(1.0 / self.register_attention_ratio)
        return [k for k in range(self.num_blocks) if (k + 1) % period == 0]

    def tap_indices(self) -> List[int]:
        """Evenly spaced block outputs handed to the heads; always ends at the last block."""
        return [
            max(((k + 1) * self.num_blocks) // self.num_taps - 1, 0)
            for k in range(self.num_taps)
        ]


@dataclass
class LossWeights:
    camera: float = 5.0
    depth: float = 1.0
    point: float = 0.5
    match: float = 0.1
    alpha: float = 0.1

    def validate(self) -> List[str]:
        return [
            f"loss weight {name} must be >= 0"
            for name, value in dataclasses.asdict(self).items()
            if value < 0
        ]


@dataclass
class PairConfig:
    """Constants of positive/negative patch-pair construction."""

    depth_tolerance: float = 0.01
    border: int = 4
    min_overlap: float = 0.10
    min_projections: int = 8
    max_query_patches: int = 64
    sampson_threshold: float = 25.0
    rgb_threshold: float = 0.15
    # None uses every valid query pixel
    pixels_per_frame: Optional[int] = 1024
    max_negative_trials: int = 4096
    balance: bool = True


@dataclass
class Schedule:
    """AdamW hyper-parameters with linear warm-up and cosine decay."""

    peak_lr: float = 2e-4
    warmup_fraction: float = 0.05
    total_steps: int = 1000
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05

    def lr(self, step: int) -> float:
        """Learning rate at a step: 0 at step 0, peak at the warm-up apex, 0 at total_steps."""
        warmup = self.warmup_fraction * self.total_steps
        if step <= 0:
            return 0.0
        if step < warmup:
            return self.peak_lr * step / warmup
        if step >= self.total_steps:
            return 0.0
        progress = (step - warmup) / max(self.total_steps - warmup, 1e-12)
        return self.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AugmentationSpec:
    brightness: float = 0.5
    contrast: float = 0.5
    saturation: float = 0.5
    hue: float = 0.1
    blur_probability: float = 0.5
    blur_sigma: Tuple[float, float] = (0.1, 2.0)
    grayscale_probability: float = 0.0
    rotate: bool = True
    mask_probability: float = 0.05
    mask_size: Tuple[int, int] = (32, 128)
    permute: bool = True
    # When False the reference frame stays at index 0
    permute_reference: bool = True

    @classmethod
    def identity(cls) -> "AugmentationSpec":
        return cls(
            brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0,
            blur_probability=0.0, grayscale_probability=0.0, rotate=False,
            mask_probability=0.0, permute=False,
        )

    @classmethod
    def supervised(cls) -> "AugmentationSpec":
        """Jitter, grayscale and masking only; geometry labels stay valid."""
        return cls(blur_probability=0.0, grayscale_probability=0.05, rotate=False, permute=False)


@dataclass
class QualityThresholds:
    min_registration_ratio: float = 0.995
    fov_range: Tuple[float, float] = (30.0, 120.0)
    max_distortion_ratio: float = 0.1
    min_valid_depth_fraction: float = 0.05
    max_linearity: float = 0.95
    consistency_tolerance: float = 0.01
    parallax_samples: int = 256
    noise_neighbors: int = 8
    max_points: int = 4096


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    pairs: PairConfig = field(default_factory=PairConfig)
    schedule: Schedule = field(default_factory=Schedule)
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec.supervised)
    ssl_augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    steps: int = 500
    seed: int = 0
    frame_range: Tuple[int, int] = (1, 4)
    ssl_peak_lr: float = 1e-4
    ema_decay: float = 0.999
    feature_weight: float = 1.0
    regression_weight: float = 1.0
    dtype: str = "float32"
    quality: QualityThresholds = field(default_factory=QualityThresholds)

    def validate(self) -> List[str]:
        errors = self.model.validate() + self.weights.validate()
        low, high = self.frame_range
        if not 1 <= low <= high:
            errors.append(f"frame_range must satisfy 1 <= low <= high, got {self.frame_range}")
        if not 0.0 <= self.ema_decay <= 1.0:
            errors.append(f"ema_decay must be in [0, 1], got {self.ema_decay}")
        if self.dtype not in ("float32", "float64"):
            errors.append(f"dtype must be float32 or float64, got {self.dtype}")
        return errors


def _build(cls, data: Dict[str, Any], path: str):
    """Instantiate a (possibly nested) config dataclass from a plain dict."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")

    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")

    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}.{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def train_config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    config = _build(TrainConfig, data, "config")
    errors = config.validate()
    if errors:
        raise ConfigError("; ".join(errors))
    return config


def load_train_config(path: Optional[str]) -> TrainConfig:
    """Load a TrainConfig from JSON; None returns the defaults."""
    if path is None:
        return TrainConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return train_config_from_dict(data)


def config_to_dict(config) -> Dict[str, Any]:
    return dataclasses.asdict(config)


def save_config(config, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(config), f, indent=2, sort_keys=True)
