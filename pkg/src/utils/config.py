# Configuration schema and loading
import os
import logging
from typing import List, Optional, Tuple, Literal, Dict, Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/config.yaml"
DEFAULT_CLASSES = ["CN II", "CN III", "CN V", "CN VII/VIII"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PhantomConfig(_Section):
    """Synthetic subject generator settings."""

    seed: int = Field(0, ge=0)
    dims: Tuple[int, int, int] = (64, 80, 64)
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    classes: List[str] = Field(default_factory=lambda: list(DEFAULT_CLASSES), min_length=1)
    tubes_per_class: int = Field(2, ge=1, le=2)
    radius_range: Tuple[float, float] = (1.5, 3.0)
    control_points: int = Field(4, ge=2)
    t1w_tissue: float = 0.5
    t1w_nerve: float = 0.7
    t1w_noise_sd: float = Field(0.05, ge=0.0)
    fa_background: float = Field(0.05, ge=0.0, le=1.0)
    fa_nerve: float = Field(0.8, ge=0.0, le=1.0)
    fa_noise_sd: float = Field(0.05, ge=0.0)
    dilation_radius: int = Field(2, ge=0)
    flip_rate: float = Field(0.1, ge=0.0, lt=0.5)
    max_translation: int = Field(1, ge=0)
    coarse_mode: Literal["degrade", "tractography"] = "degrade"
    streamlines_per_tube: int = Field(20, ge=1)
    streamline_jitter: float = Field(0.75, ge=0.0)
    chiasm: bool = False

    @field_validator("radius_range")
    @classmethod
    def _check_radii(cls, value):
        low, high = value
        if low <= 0 or high < low:
            raise ValueError(f"radius_range must satisfy 0 < low <= high, got {value}")
        return value

    @field_validator("spacing")
    @classmethod
    def _check_spacing(cls, value):
        if any(s <= 0 for s in value):
            raise ValueError(f"spacing must be strictly positive, got {value}")
        return value


class VoxelizeConfig(_Section):
    """Streamline-to-label conversion settings."""

    tau: int = Field(1, ge=1)
    min_island: int = Field(5, ge=1)
    keep_largest: bool = False
    connectivity: Literal[6, 18, 26] = 26


class ModelConfig(_Section):
    """Network architecture settings."""

    in_channels: int = Field(1, ge=1)
    widths: List[int] = Field(default_factory=lambda: [16, 32, 64, 128, 256])
    num_classes: int = Field(4, ge=1)
    simam_lambda: float = Field(1e-4, gt=0.0)
    eca_gamma: int = Field(2, ge=1)
    eca_b: int = 1
    sa_kernel: int = Field(7, ge=1)
    attention_heads: int = Field(1, ge=1)
    fusion_width: Optional[int] = None
    decoder_dropout: float = Field(0.3, ge=0.0, lt=1.0)
    use_fem: bool = True
    use_aem: bool = True
    swap_aem_mixture: bool = False
    simam_per_channel: bool = False

    @field_validator("widths")
    @classmethod
    def _check_widths(cls, value):
        if len(value) != 5:
            raise ValueError(f"widths needs a stem width plus 4 stage widths, got {len(value)}")
        if any(b <= a for a, b in zip(value, value[1:])) or value[0] < 1:
            raise ValueError(f"widths must be strictly increasing and positive, got {value}")
        return value

    @field_validator("sa_kernel")
    @classmethod
    def _check_kernel(cls, value):
        if value % 2 == 0:
            raise ValueError(f"sa_kernel must be odd, got {value}")
        return value

    @property
    def fused_width(self) -> int:
        return self.fusion_width or self.widths[-1]


class AugmentConfig(_Section):
    flip_prob: float = Field(0.5, ge=0.0, le=1.0)
    brightness: float = Field(0.1, ge=0.0)
    contrast: float = Field(0.1, ge=0.0, lt=1.0)
    hue: float = Field(0.1, ge=0.0)


class TrainConfig(_Section):
    """Optimisation, cross-validation and ablation settings."""

    learning_rate: float = Field(0.002, gt=0.0)
    momentum: float = Field(0.9, ge=0.0)
    weight_decay: float = Field(0.0, ge=0.0)
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(30, ge=1)
    folds: int = Field(5, ge=2)
    fold: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)
    use_mem: bool = True
    use_fem: bool = True
    use_aem: bool = True
    use_dcl: bool = True
    augmentation: AugmentConfig = Field(default_factory=AugmentConfig)
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    num_workers: int = Field(0, ge=0)
    label_noise_flip_rate: float = Field(0.0, ge=0.0, lt=0.5)
    ablation_folds: List[int] = Field(default_factory=lambda: [0])
    device: str = "cpu"

    @model_validator(mode="after")
    def _check_flags(self):
        if self.use_mem and not (self.use_fem or self.use_aem):
            raise ValueError("use_mem requires at least one of use_fem/use_aem")
        if self.fold >= self.folds:
            raise ValueError(f"fold {self.fold} out of range for {self.folds} folds")
        return self

    @property
    def fem_enabled(self) -> bool:
        return self.use_mem and self.use_fem

    @property
    def aem_enabled(self) -> bool:
        return self.use_mem and self.use_aem

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        """Named presets: 'desk' for CPU-scale runs, 'paper-protocol' for the full schedule."""
        presets = {
            "desk": {"batch_size": 8, "epochs": 30},
            "paper-protocol": {"batch_size": 32, "epochs": 200},
        }
        if name not in presets:
            raise ValueError(f"Unknown preset '{name}', expected one of {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


class ProjectConfig(_Section):
    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    voxelize: VoxelizeConfig = Field(default_factory=VoxelizeConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)


def read_config_file(config_path: str) -> Dict[str, Any]:
    """Read a YAML (or JSON) config document into a dict."""
    if not os.path.exists(config_path):
        logger.warning(f"Config file not found: {config_path}, using defaults")
        return {}
    with open(config_path, "r") as f:
        data = yaml.safe_load(f)
    return data or {}


def load_config(config_path: str = DEFAULT_CONFIG_PATH) -> ProjectConfig:
    """Load and validate the whole project configuration."""
    return ProjectConfig.model_validate(read_config_file(config_path))


def load_section(config_path: str, section: str):
    """Load a single validated section, e.g. load_section(path, "phantom").

    Entry points called without a config object read their own section this way.
    """
    logger.debug(f"Loading '{section}' section from {config_path}")
    return getattr(load_config(config_path), section)
