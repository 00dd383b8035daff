"""Model configuration, dataset defaults and environment settings."""

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

DATASETS = ("laptop", "restaurant", "twitter")

# SRD threshold per dataset
DATASET_ALPHA = {"laptop": 5, "restaurant": 3, "twitter": 5}

LCE_MODES = ("dot", "additive", "off")
POOLING_MODES = ("mean", "first")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class ModelConfig:
    """Every hyperparameter of the network plus the ablation switches."""

    d_h: int = 300
    heads: int = 30
    embed_dim: int = 300
    dropout: float = 0.1
    pad_len: int = 80
    alpha: int = 5
    sigma: float = 0.5
    l2_lambda: float = 1e-4
    learning_rate: float = 2e-3
    batch_size: int = 32
    epochs: int = 10
    lce_mode: str = "dot"
    lcp_enabled: bool = True
    cdm_enabled: bool = True
    pooling: str = "mean"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Raise ConfigError on the first invalid field."""
        for name in ("d_h", "heads", "embed_dim", "pad_len", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_h % self.heads != 0:
            raise ConfigError(f"d_h={self.d_h} is not divisible by heads={self.heads}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.l2_lambda < 0 or self.learning_rate <= 0:
            raise ConfigError("l2_lambda must be >= 0 and learning_rate > 0")
        if self.lce_mode not in LCE_MODES:
            raise ConfigError(f"lce_mode must be one of {LCE_MODES}, got {self.lce_mode!r}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")

    @property
    def head_dim(self) -> int:
        return self.d_h // self.heads

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ModelConfig":
        """Build a config from typed or textual values, rejecting unknown keys."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}")
        typed = {name: coerce_value(known[name], value) for name, value in values.items()}
        return cls(**typed)


def coerce_value(config_field: dataclasses.Field, value: Any) -> Any:
    """Convert a raw (usually textual) value to the field's type."""
    kind = type(config_field.default)
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(
            f"Invalid value {text!r} for {config_field.name} (expected {kind.__name__})"
        ) from None
    return text


def config_field_names() -> list:
    return [f.name for f in dataclasses.fields(ModelConfig)]


def load_config_file(path: Path) -> dict:
    """Read a flat KEY=VALUE configuration file; keys are ModelConfig fields."""
    if not Path(path).is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = {key: value for key, value in dotenv_values(path).items()}
    unknown = sorted(set(values) - set(config_field_names()))
    if unknown:
        raise ConfigError(f"Unknown key(s) in {path}: {', '.join(unknown)}")
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"Key(s) without value in {path}: {', '.join(missing)}")
    return values


def resolve_config(
    dataset: Optional[str] = None,
    config_file: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ModelConfig:
    """Built-in defaults < dataset defaults < config file < explicit overrides."""
    values: dict = {}
    if dataset is not None:
        if dataset not in DATASET_ALPHA:
            raise ConfigError(f"Unknown dataset {dataset!r}; expected one of {DATASETS}")
        values["alpha"] = DATASET_ALPHA[dataset]
    if config_file is not None:
        values.update(load_config_file(config_file))
    if overrides:
        values.update({key: value for key, value in overrides.items() if value is not None})
    return ModelConfig.from_dict(values)


@dataclass(frozen=True)
class Settings:
    """Paths and logging level taken from the environment."""

    data_dir: Path = Path("data")
    output_dir: Path = Path("runs")
    vectors_path: Optional[Path] = None
    log_level: str = "INFO"


def load_settings() -> Settings:
    """Read LCA_* variables, with a .env file in the working directory honoured."""
    load_dotenv()
    vectors = os.environ.get("LCA_VECTORS")
    return Settings(
        data_dir=Path(os.environ.get("LCA_DATA_DIR", "data")),
        output_dir=Path(os.environ.get("LCA_OUTPUT_DIR", "runs")),
        vectors_path=Path(vectors) if vectors else None,
        log_level=os.environ.get("LCA_LOG_LEVEL", "INFO").upper(),
    )
