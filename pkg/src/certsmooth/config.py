"""Configuration loader with typed dataclasses."""

from __future__ import annotations

import hashlib
import json
import os
import re
import typing
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path
from typing import Literal

import yaml
from dotenv import load_dotenv

from .errors import ConfigurationError
from .model import TrainConfig

# Load .env file from project root
_project_root = Path(__file__).parent.parent.parent
load_dotenv(_project_root / ".env")

SEED_ENV_VAR = "CERTSMOOTH_SEED"


# === Dataclasses ===

@dataclass
class DataConfig:
    """Synthetic task configuration."""
    generator: Literal["blobs", "shells"] = "blobs"
    d: int = 16
    k: int = 4
    n_train: int = 2000
    n_test: int = 500
    separation: float = 6.0
    blob_std: float = 1.0
    seed: int = 0


@dataclass
class NetworkConfig:
    """Hidden widths and training schedule of one network."""
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class SmoothingConfig:
    """Noise level and CERTIFY parameters."""
    sigma: float = 0.25
    n: int = 10000
    n0: int = 100
    alpha: float = 0.001
    seed: int = 0


@dataclass
class SurrogateConfig:
    """Counts dataset and surrogate network."""
    n_samples: int = 10000
    network: NetworkConfig = field(default_factory=NetworkConfig)


@dataclass
class EvaluationConfig:
    """Accuracy table and estimation report."""
    radii: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    r_min: float = 0.25
    record_time: bool = True


@dataclass
class BenchConfig:
    """Timing benchmark."""
    n_sweep: list[int] = field(default_factory=lambda: [100, 1000, 10000, 100000])
    repeats: int = 20
    warmup: int = 2
    examples: int = 20


@dataclass
class VarianceConfig:
    """Count-resampling study."""
    examples: int = 50
    resamples: int = 50
    n: int = 10000


@dataclass
class PathsConfig:
    """Artifact locations."""
    workdir: str = "runs/default"


@dataclass
class RuntimeConfig:
    """Execution settings that never change artifact bytes."""
    threads: int = 1
    ledger_max_entries: int = 1000


@dataclass
class RunConfig:
    """Main configuration."""
    data: DataConfig = field(default_factory=DataConfig)
    base: NetworkConfig = field(default_factory=NetworkConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    variance: VarianceConfig = field(default_factory=VarianceConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)


# Sections that do not influence any artifact byte.
_NON_SEMANTIC = ("paths", "runtime")


# === Helper Functions ===

def _expand_env_vars(value: str) -> str:
    """Expand environment variables in format ${VAR} or $VAR."""
    pattern = r'\$\{([^}]+)\}|\$([A-Za-z_][A-Za-z0-9_]*)'

    def replacer(match: re.Match) -> str:
        var_name = match.group(1) or match.group(2)
        return os.environ.get(var_name, "")

    return re.sub(pattern, replacer, value)


def _process_dict(data: dict) -> dict:
    """Recursively process dict, expanding env vars in string values."""
    result = {}
    for key, value in data.items():
        if isinstance(value, dict):
            result[key] = _process_dict(value)
        elif isinstance(value, str):
            result[key] = _expand_env_vars(value)
        elif isinstance(value, list):
            result[key] = [
                _expand_env_vars(item) if isinstance(item, str) else item
                for item in value
            ]
        else:
            result[key] = value
    return result


def _unknown_keys(data: dict, cls: type, prefix: str = "") -> list[str]:
    """Dotted names of keys in data that cls does not declare."""
    hints = typing.get_type_hints(cls)
    unknown = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if key not in hints:
            unknown.append(name)
        elif is_dataclass(hints[key]) and isinstance(value, dict):
            unknown.extend(_unknown_keys(value, hints[key], f"{name}."))
    return unknown


def _dict_to_dataclass(data: dict, cls: type) -> object:
    """Convert nested dict to dataclass instance."""
    if not is_dataclass(cls):
        return data

    field_types = typing.get_type_hints(cls)
    kwargs = {}

    for field_name, field_type in field_types.items():
        if field_name in data:
            value = data[field_name]

            # Handle nested dataclasses
            if is_dataclass(field_type) and isinstance(value, dict):
                kwargs[field_name] = _dict_to_dataclass(value, field_type)
            else:
                kwargs[field_name] = value

    return cls(**kwargs)


def _apply_seed_override(config: RunConfig) -> None:
    raw = os.environ.get(SEED_ENV_VAR)
    if not raw:
        return
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
    config.data.seed = seed
    config.base.train.seed = seed
    config.surrogate.network.train.seed = seed
    config.smoothing.seed = seed


# === Main Loader ===

def load_config(config_path: str | Path | None = None) -> RunConfig:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to config file. If None, looks for config.yaml
                    in current directory or the project root.

    Returns:
        RunConfig with all settings; CERTSMOOTH_SEED overrides every seed.

    Raises:
        FileNotFoundError: If config file not found.
        ConfigurationError: If the file has unknown keys or is not a mapping.
    """
    if config_path is None:
        search_paths = [
            Path.cwd() / "config.yaml",
            _project_root / "config.yaml",
        ]
        for path in search_paths:
            if path.exists():
                config_path = path
                break
        else:
            raise FileNotFoundError(
                "config.yaml not found. Searched in:\n"
                + "\n".join(f"  - {p}" for p in search_paths)
            )

    config_path = Path(config_path)

    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, "r", encoding="utf-8") as f:
        raw_data = yaml.safe_load(f) or {}

    if not isinstance(raw_data, dict):
        raise ConfigurationError(f"{config_path} must contain a mapping")

    unknown = _unknown_keys(raw_data, RunConfig)
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")

    data = _process_dict(raw_data)
    config = _dict_to_dataclass(data, RunConfig)
    _apply_seed_override(config)
    return config


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_train(issues: list[str], name: str, cfg: TrainConfig) -> None:
    if not (_is_int(cfg.epochs) and cfg.epochs >= 1):
        issues.append(f"{name}.epochs must be an integer >= 1")
    if not (_is_int(cfg.batch_size) and cfg.batch_size >= 1):
        issues.append(f"{name}.batch_size must be an integer >= 1")
    if not (_is_number(cfg.learning_rate) and cfg.learning_rate > 0):
        issues.append(f"{name}.learning_rate must be positive")
    for beta in ("adam_beta1", "adam_beta2"):
        value = getattr(cfg, beta)
        if not (_is_number(value) and 0 < value < 1):
            issues.append(f"{name}.{beta} must lie in (0, 1)")
    if not (_is_int(cfg.lr_step) and cfg.lr_step >= 1):
        issues.append(f"{name}.lr_step must be an integer >= 1")
    if not (_is_number(cfg.lr_gamma) and 0 < cfg.lr_gamma <= 1):
        issues.append(f"{name}.lr_gamma must lie in (0, 1]")
    if not (_is_int(cfg.seed) and cfg.seed >= 0):
        issues.append(f"{name}.seed must be a non-negative integer")


def _check_hidden(issues: list[str], name: str, hidden) -> None:
    if not isinstance(hidden, list) or not all(_is_int(h) and h >= 1 for h in hidden):
        issues.append(f"{name}.hidden must be a list of positive integers")


def validate_config(config: RunConfig) -> list[str]:
    """
    Validate configuration and return list of issues.

    Returns:
        List of error messages. Empty list means valid.
    """
    issues = []

    d = config.data
    if d.generator not in ("blobs", "shells"):
        issues.append(f"Invalid data.generator '{d.generator}'. Must be one of: ['blobs', 'shells']")
    for name in ("d", "n_train", "n_test"):
        value = getattr(d, name)
        if not (_is_int(value) and value >= 1):
            issues.append(f"data.{name} must be an integer >= 1")
    if not (_is_int(d.k) and d.k >= 2):
        issues.append("data.k must be an integer >= 2")
    if not (_is_number(d.separation) and d.separation > 0):
        issues.append("data.separation must be positive")
    if not (_is_number(d.blob_std) and d.blob_std > 0):
        issues.append("data.blob_std must be positive")
    if not (_is_int(d.seed) and d.seed >= 0):
        issues.append("data.seed must be a non-negative integer")

    _check_hidden(issues, "base", config.base.hidden)
    _check_train(issues, "base.train", config.base.train)
    _check_hidden(issues, "surrogate.network", config.surrogate.network.hidden)
    _check_train(issues, "surrogate.network.train", config.surrogate.network.train)
    if not (_is_int(config.surrogate.n_samples) and config.surrogate.n_samples >= 1):
        issues.append("surrogate.n_samples must be an integer >= 1")

    s = config.smoothing
    if not (_is_number(s.sigma) and s.sigma > 0):
        issues.append("smoothing.sigma must be positive")
    if not (_is_int(s.n) and _is_int(s.n0) and s.n >= s.n0 >= 1):
        issues.append("smoothing needs integers n >= n0 >= 1")
    if not (_is_number(s.alpha) and 0 < s.alpha < 1):
        issues.append("smoothing.alpha must lie in (0, 1)")
    if not (_is_int(s.seed) and s.seed >= 0):
        issues.append("smoothing.seed must be a non-negative integer")

    e = config.evaluation
    if not isinstance(e.radii, list) or not all(_is_number(r) and r >= 0 for r in e.radii):
        issues.append("evaluation.radii must be a list of non-negative numbers")
    if not (_is_number(e.r_min) and e.r_min >= 0):
        issues.append("evaluation.r_min must be non-negative")

    b = config.bench
    if not isinstance(b.n_sweep, list) or not b.n_sweep or not all(_is_int(n) and n >= 1 for n in b.n_sweep):
        issues.append("bench.n_sweep must be a non-empty list of positive integers")
    elif b.n_sweep != sorted(b.n_sweep):
        issues.append("bench.n_sweep must be ascending")
    for name in ("repeats", "examples"):
        if not (_is_int(getattr(b, name)) and getattr(b, name) >= 1):
            issues.append(f"bench.{name} must be an integer >= 1")
    if not (_is_int(b.warmup) and b.warmup >= 0):
        issues.append("bench.warmup must be a non-negative integer")

    v = config.variance
    if not (_is_int(v.resamples) and v.resamples >= 2):
        issues.append("variance.resamples must be an integer >= 2")
    if not (_is_int(v.examples) and v.examples >= 1):
        issues.append("variance.examples must be an integer >= 1")
    if not (_is_int(v.n) and v.n >= 1):
        issues.append("variance.n must be an integer >= 1")

    if not (_is_int(config.runtime.threads) and config.runtime.threads >= 1):
        issues.append("runtime.threads must be an integer >= 1")

    return issues


def config_hash(config: RunConfig) -> str:
    """SHA-256 of every field that can change an artifact."""
    semantic = {k: v for k, v in asdict(config).items() if k not in _NON_SEMANTIC}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_seeds(config: RunConfig) -> dict[str, int]:
    return {
        "data": config.data.seed,
        "base": config.base.train.seed,
        "surrogate": config.surrogate.network.train.seed,
        "smoothing": config.smoothing.seed,
    }


def get_config_path() -> Path:
    """Get the default config file path."""
    return _project_root / "config.yaml"


__all__ = [
    "BenchConfig",
    "DataConfig",
    "EvaluationConfig",
    "NetworkConfig",
    "PathsConfig",
    "RunConfig",
    "RuntimeConfig",
    "SmoothingConfig",
    "SurrogateConfig",
    "VarianceConfig",
    "config_hash",
    "config_seeds",
    "get_config_path",
    "load_config",
    "validate_config",
]
