"""
Shared configuration: process settings from the environment and the
experiment file loader.
"""

import hashlib
import json
import os
from dataclasses import asdict, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import yaml
from dataclass_wizard import fromdict
from dotenv import load_dotenv

from data_model import MODES, POWER_MODES, SWEEP_AXES, ExperimentConfig
from sim.errors import ConfigError, ResultsIOError

load_dotenv()

DEBUG = os.getenv("DEBUG", "false").lower() == "true"

# Logging configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "WARNING").upper()
VERBOSE_SOLVER_LOGS = os.getenv("VERBOSE_SOLVER_LOGS", "false").lower() == "true"

# Paths and parallelism
CONFIG_PATH = os.getenv("CFL_CONFIG_PATH", "config.yaml")
OUTPUT_DIR = os.getenv("CFL_OUTPUT_DIR", "results")
STORE_PATH = os.getenv("CFL_STORE_PATH", "lab_runs.db")
WORKERS = int(os.getenv("CFL_WORKERS", "1"))

HASH_EXCLUDED = ("seed", "workers")
HASH_LENGTH = 12


# Helper functions
def validate_mode(mode: str) -> bool:
    """Validate a simulation mode."""
    return mode in MODES


def validate_power_mode(mode: str) -> bool:
    """Validate a power-control mode."""
    return mode in POWER_MODES


def validate_sweep_axis(axis: str) -> bool:
    """Validate a sweep axis."""
    return axis in SWEEP_AXES


def _fold_dotted(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Turn {'system.num_aps': 30} into {'system': {'num_aps': 30}}."""
    folded: Dict[str, Any] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            value = _fold_dotted(value)
        parts = str(key).split(".")
        target = folded
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"key {key!r} conflicts with scalar {part!r}", key=key)
            target = node
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(target.get(leaf), dict):
            target[leaf].update(value)
        else:
            target[leaf] = value
    return folded


def _section_type(annotation: Any) -> Optional[type]:
    if is_dataclass(annotation):
        return annotation
    if get_origin(annotation) is Union:
        for arg in get_args(annotation):
            if is_dataclass(arg):
                return arg
    return None


def _reject_unknown(data: Dict[str, Any], schema: type, prefix: str = "") -> None:
    hints = get_type_hints(schema)
    known = {f.name for f in fields(schema)}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(f"unknown configuration key {path!r}", key=path)
        nested = _section_type(hints[key])
        if nested is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping", key=path)
            _reject_unknown(value, nested, f"{path}.")


def config_from_dict(raw: Optional[Dict[str, Any]]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from nested or dotted keys."""
    data = _fold_dotted(raw or {})
    _reject_unknown(data, ExperimentConfig)
    try:
        config = fromdict(ExperimentConfig, data)
    except Exception as exc:  # dataclass_wizard raises its own parse errors
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return config.validate()


def load_experiment_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Read the YAML experiment file (defaults to CFL_CONFIG_PATH)."""
    path = Path(path or CONFIG_PATH)
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}", path=str(path)) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", path=str(path)) from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping", path=str(path))
    return config_from_dict(raw)


def save_experiment_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    """Write the resolved configuration next to the results."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(asdict(config), f, sort_keys=True)
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path


def canonical_json(config: ExperimentConfig, excluded: Tuple[str, ...] = HASH_EXCLUDED) -> str:
    payload = {k: v for k, v in asdict(config).items() if k not in excluded}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """Scenario identity: SHA-256 of the canonical configuration, seed and workers excluded."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:HASH_LENGTH]


def drop_hash(config: ExperimentConfig) -> str:
    """Identity of one drop's scenario: the sweep section (axis, values, drop count) is left out."""
    payload = canonical_json(config, HASH_EXCLUDED + ("sweep",))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:HASH_LENGTH]


def resolve_workers(requested: Optional[int], config: ExperimentConfig) -> int:
    """CLI flag, then the config file, then CFL_WORKERS."""
    if requested is not None:
        workers = requested
    elif config.workers != 1:
        workers = config.workers
    else:
        workers = WORKERS
    if workers < 1:
        raise ConfigError("workers must be >= 1", workers=workers)
    return workers


# Logging helpers
def should_log_verbose() -> bool:
    """Check if per-iteration solver logging is enabled."""
    return VERBOSE_SOLVER_LOGS or DEBUG
