"""
Configuration module for the POI recommender.

Two layers live here. Process settings (logging, default directories) are
read from environment variables, with `.env` support. Experiment settings
are read from a TOML file and validated into an ExperimentConfig whose
defaults are the published experiment parameters.
"""

import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Load environment variables from .env file if it exists
load_dotenv()

Method = Literal["spirel", "npb", "pb"]

DATASET_PRESETS: Dict[str, Dict[str, int]] = {
    "gowalla-like": {"m": 9617, "n": 585, "length": 10},
    "taxitrip-small": {"m": 10000, "n": 373, "length": 20},
    "taxitrip": {"m": 267739, "n": 526, "length": 20},
}


class LoggingConfig(BaseModel):
    """Configuration for logging."""

    level: str = Field(default="INFO", description="Logging level")
    file: Optional[str] = Field(default=None, description="Log file path")


class Settings(BaseModel):
    """Process-wide settings taken from the environment."""

    logging: LoggingConfig = Field(default_factory=LoggingConfig, description="Logging configuration")
    data_dir: str = Field(default="./data", description="Default location for generated datasets")
    output_dir: str = Field(default="./results", description="Default location for reports")


def load_settings() -> Settings:
    """
    Load process settings from environment variables.

    Returns:
        Settings: Process settings
    """
    logging_config = LoggingConfig(
        level=os.getenv("LOG_LEVEL", "INFO"),
        file=os.getenv("LOG_FILE"),
    )

    if logging_config.file:
        Path(logging_config.file).parent.mkdir(exist_ok=True, parents=True)

    return Settings(
        logging=logging_config,
        data_dir=os.getenv("POI_DATA_DIR", "./data"),
        output_dir=os.getenv("POI_OUTPUT_DIR", "./results"),
    )


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DatasetConfig(_Section):
    """Where check-in histories come from."""

    path: Optional[str] = Field(default=None, description="Check-in text file")
    manifest: Optional[str] = Field(default=None, description="Synthetic dataset manifest (TOML)")
    preset: Optional[str] = Field(default=None, description="Named synthetic population shape")
    name: Optional[str] = Field(default=None, description="Descriptor written to reports")
    max_length: int = Field(default=0, ge=0, description="Keep only the latest check-ins (0 keeps all)")

    @field_validator("path", "manifest")
    @classmethod
    def _must_exist(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not Path(value).is_file():
            raise ValueError(f"file not found: {value}")
        return value

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in DATASET_PRESETS:
            raise ValueError(f"unknown preset {value!r}, expected one of {sorted(DATASET_PRESETS)}")
        return value

    @model_validator(mode="after")
    def _single_source(self) -> "DatasetConfig":
        sources = [s for s in (self.path, self.manifest, self.preset) if s is not None]
        if len(sources) > 1:
            raise ValueError("set only one of path, manifest, preset")
        if not sources:
            self.preset = "taxitrip-small"
        return self

    @property
    def descriptor(self) -> str:
        if self.name:
            return self.name
        if self.path:
            return Path(self.path).stem
        if self.manifest:
            return Path(self.manifest).stem
        return str(self.preset)


class PrivacyConfig(_Section):
    """Total budget and how it is split between the two mechanisms."""

    epsilon: float = Field(default=1.0, gt=0.0, le=50.0, description="Total privacy budget per user")
    split_ratio: float = Field(default=0.5, gt=0.0, lt=1.0, description="Share of epsilon for transitions")
    enabled: bool = Field(default=True, description="False runs the non-private diagnostic mode")


class TrainerConfig(_Section):
    """Joint factorisation settings."""

    d: int = Field(default=10, ge=1, description="Latent dimension")
    regularization: float = Field(default=1e-8, ge=0.0, alias="lambda", description="Ridge regulariser")
    gamma: float = Field(default=0.1, gt=0.0, description="Adam step size")
    iterations: int = Field(default=10, ge=1, description="Iterations, one user group per iteration")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(default=1e-8, ge=0.0)
    use_adam: bool = Field(default=True, description="Plain gradient steps when false")
    normalize_q: bool = Field(default=True, description="Apply 1 + sigmoid to the POI-POI matrix")
    sigmoid_scale: Optional[float] = Field(
        default=None, gt=0.0, description="Raw counts are divided by this first; unset picks a count-relative scale"
    )


class BaselineConfig(_Section):
    """Settings for the NPB and PB comparison methods."""

    d: int = Field(default=5, ge=1)
    npb_gamma: float = Field(default=0.05, gt=0.0)
    npb_epochs: int = Field(default=20, ge=1)
    pb_gamma: float = Field(default=1.0, gt=0.0)


class EvaluationConfig(_Section):
    """Which methods to run and how to score them."""

    methods: List[Method] = Field(default_factory=lambda: ["spirel", "npb", "pb"])
    ks: List[int] = Field(default_factory=lambda: [3, 5, 7, 10])
    seed: int = Field(default=0, ge=0, description="First seed")
    seed_count: int = Field(default=10, ge=1, description="Runs averaged per cell")

    @field_validator("ks")
    @classmethod
    def _positive_sorted(cls, value: List[int]) -> List[int]:
        if not value or any(k < 1 for k in value):
            raise ValueError("ks must be a non-empty list of positive integers")
        return sorted(set(value))

    @field_validator("methods")
    @classmethod
    def _non_empty(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one method is required")
        return list(dict.fromkeys(value))

    @property
    def seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.seed_count)]


class SweepConfig(_Section):
    """Grid axes for the sweep command; an empty axis uses the base value."""

    epsilons: List[float] = Field(default_factory=list)
    split_ratios: List[float] = Field(default_factory=list)
    iterations: List[int] = Field(default_factory=list)
    normalize_q: List[bool] = Field(default_factory=list)

    @field_validator("epsilons")
    @classmethod
    def _valid_epsilons(cls, value: List[float]) -> List[float]:
        if any(not (0.0 < e <= 50.0) for e in value):
            raise ValueError("every epsilon must be in (0, 50]")
        return value

    @field_validator("split_ratios")
    @classmethod
    def _valid_ratios(cls, value: List[float]) -> List[float]:
        if any(not (0.0 < r < 1.0) for r in value):
            raise ValueError("every split ratio must be in (0, 1)")
        return value

    @field_validator("iterations")
    @classmethod
    def _valid_iterations(cls, value: List[int]) -> List[int]:
        if any(k < 1 for k in value):
            raise ValueError("every iteration count must be >= 1")
        return value


class OutputConfig(_Section):
    directory: str = Field(default="./results")


class ExperimentConfig(_Section):
    """Complete, validated experiment description."""

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    privacy: PrivacyConfig = Field(default_factory=PrivacyConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    baselines: BaselineConfig = Field(default_factory=BaselineConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def _error_key(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def build_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a nested mapping into an ExperimentConfig.

    Args:
        data: Parsed TOML document

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: On unknown keys or out-of-range values
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first.get("msg", str(e)), key=_error_key(first)) from e


def parse_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """
    Load an experiment configuration file.

    A missing path yields the default configuration.

    Args:
        path: TOML file with [dataset], [privacy], [trainer], [baselines],
            [evaluation], [sweep] and [output] sections

    Returns:
        ExperimentConfig: Validated configuration with defaults filled in
    """
    if path is None:
        return ExperimentConfig()

    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")

    try:
        with open(config_path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {config_path}: {e}") from e

    return build_config(data)


# Create a global settings instance
settings = load_settings()
