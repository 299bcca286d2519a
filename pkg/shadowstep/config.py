"""Runtime configuration with .env loading, YAML run files and flag merging."""

from __future__ import annotations

import os
from pathlib import Path
from threading import Lock
from typing import Any, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from shadowstep.errors import ConfigurationError
from shadowstep.models import AppConfig, RunConfig

# Load .env from project root
_env_path = Path(__file__).resolve().parent.parent / ".env"
load_dotenv(_env_path)


def _env_config() -> AppConfig:
    data: dict[str, Any] = {}
    for field, key in (
        ("log_level", "SHADOWSTEP_LOG_LEVEL"),
        ("output_dir", "SHADOWSTEP_OUTPUT_DIR"),
        ("max_degree", "SHADOWSTEP_MAX_DEGREE"),
        ("workers", "SHADOWSTEP_WORKERS"),
        ("force_cache", "SHADOWSTEP_FORCE_CACHE"),
    ):
        value = os.getenv(key)
        if value not in (None, ""):
            data[field] = value
    try:
        return AppConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid environment configuration: {e}", field=_first_field(e)) from e


_config = _env_config()
_lock = Lock()


def get_config() -> AppConfig:
    with _lock:
        return _config.model_copy()


def update_config(updates: dict) -> AppConfig:
    global _config
    with _lock:
        data = _config.model_dump()
        for k, v in updates.items():
            if v is not None:
                data[k] = v
        try:
            _config = AppConfig(**data)
        except ValidationError as e:
            raise ConfigurationError(str(e), field=_first_field(e)) from e
        return _config.model_copy()


def _first_field(error: ValidationError) -> Optional[str]:
    for item in error.errors():
        if item.get("loc"):
            return ".".join(str(part) for part in item["loc"])
    return None


def load_run_file(path: str | Path) -> dict:
    """Read a YAML run-config file into a plain mapping."""
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {p}", field="config") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file is not valid YAML: {e}", field="config") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping at top level", field="config")
    return data


def build_run_config(file_data: Optional[dict], overrides: dict) -> RunConfig:
    """Merge file values with command-line overrides (flags win) and validate.

    Args:
        file_data: Mapping loaded from the YAML config file, or None.
        overrides: Flag values; None entries mean "not given on the command line".
    """
    data: dict[str, Any] = dict(file_data or {})
    for k, v in overrides.items():
        if v is None:
            continue
        if k == "weights" and isinstance(data.get("weights"), dict):
            data["weights"] = {**data["weights"], **v}
        else:
            data[k] = v
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        field = _first_field(e)
        msg = e.errors()[0].get("msg", str(e))
        raise ConfigurationError(f"invalid run configuration ({field or 'config'}): {msg}", field=field) from e


def dump_run_config(config: RunConfig) -> str:
    """YAML text for a run config; `parse_run_config` inverts it."""
    data = config.model_dump(mode="json", by_alias=True, exclude_none=True)
    return yaml.safe_dump(data, sort_keys=True)


def parse_run_config(text: str) -> RunConfig:
    data = yaml.safe_load(text) or {}
    return build_run_config(data, {})
