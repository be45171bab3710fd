"""
Configuration loader with validation.
Loads and validates settings.yaml at startup.
"""

from pathlib import Path
from typing import Any, Optional

import yaml

from app.core.models import ConfigurationSchema, SweepSpec

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "config" / "settings.yaml"


def read_yaml(path: Path) -> Any:
    """
    Read a YAML document.

    Raises:
        FileNotFoundError: If the file doesn't exist
    """
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    with open(path, "r") as f:
        return yaml.safe_load(f)


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_sweep_spec(path: Path, config: ConfigurationSchema) -> SweepSpec:
    """
    Read a sweep file, filling what it leaves out from the configuration.

    A missing ``grid`` or ``repetitions`` comes from ``config.bench``; the
    ``em`` section is merged key by key over ``config.em``.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the merged sweep is invalid
    """
    raw = read_yaml(path)
    if not isinstance(raw, dict):
        raise ValueError(f"Expected a mapping in {path}")

    data = dict(raw)
    grid = config.bench.grid_for(str(data.get("mode")))
    if "grid" not in data and grid is not None:
        data["grid"] = grid
    data.setdefault("repetitions", config.bench.repetitions)
    data["em"] = _merge(config.em.model_dump(), data.get("em") or {})

    try:
        return SweepSpec(**data)
    except Exception as e:
        raise ValueError(f"Invalid SweepSpec in {path}: {e}") from e


class ConfigLoader:
    """Loads and validates configuration from YAML."""

    _instance: Optional[ConfigurationSchema] = None

    @classmethod
    def load(cls, config_path: Optional[Path] = None) -> ConfigurationSchema:
        """
        Load configuration from YAML file.

        Args:
            config_path: Optional custom config path

        Returns:
            Validated configuration schema

        Raises:
            FileNotFoundError: If config file doesn't exist
            ValueError: If config is invalid
        """
        if config_path is None:
            config_path = DEFAULT_CONFIG_PATH

        raw_config = read_yaml(config_path)

        try:
            config = ConfigurationSchema(**raw_config)
            config.validate_config()
            cls._instance = config
            return config
        except Exception as e:
            raise ValueError(f"Invalid configuration: {e}") from e

    @classmethod
    def get_instance(cls) -> ConfigurationSchema:
        """Get cached configuration instance."""
        if cls._instance is None:
            raise RuntimeError("Configuration not loaded. Call load() first.")
        return cls._instance

    @classmethod
    def reset(cls) -> None:
        cls._instance = None
