"""Configuration loader for dualkoord.

Loads the default YAML configuration shipped with the repo, merges user files over it and
collects topology overrides from the environment.
"""
from __future__ import annotations

import copy
import os
from typing import Any, Dict, Mapping, Optional

import yaml

from dualkoord.errors import ConfigError

try:
    # Python 3.9+: importlib.resources.files
    from importlib import resources
except Exception:
    import importlib_resources as resources  # type: ignore

DEFAULT_CONFIG_YAML = "config/default.yaml"

ENV_CACHE_LINE = "DUALKOORD_CACHE_LINE"
ENV_LLC_BYTES = "DUALKOORD_LLC_BYTES"
ENV_GROUPS = "DUALKOORD_GROUPS"
ENV_DATA_GROUP = "DUALKOORD_DATA_GROUP"


def _parse_yaml(text: str) -> Dict[str, Any]:
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML configuration: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError("configuration root must be a mapping")
    return cfg


def load_default_config() -> Dict[str, Any]:
    """Load and return the default configuration dict shipped in `config/default.yaml`.

    Returns:
        dict: Configuration loaded from YAML. If the file cannot be read, returns an empty dict.
    """
    try:
        data_file = resources.files(__package__).joinpath("..").joinpath(DEFAULT_CONFIG_YAML)
        text = data_file.read_text(encoding="utf-8")
    except Exception:
        path = os.path.join(os.path.dirname(os.path.dirname(__file__)), *DEFAULT_CONFIG_YAML.split("/"))
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError:
            return {}
    try:
        return _parse_yaml(text)
    except ConfigError:
        return {}


def merge_config(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Deep-merge `override` into a copy of `base`; nested mappings are merged key by key."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Return the default configuration, with the YAML file at `path` merged over it if given."""
    cfg = load_default_config()
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as f:
            user = _parse_yaml(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    return merge_config(cfg, user)


def parse_groups(text: str) -> list:
    """Parse a group layout string such as ``8,8,8,8`` into a list of core counts."""
    try:
        cores = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid group layout {text!r}: expected comma-separated core counts") from exc
    if not cores or any(c < 1 for c in cores):
        raise ConfigError(f"invalid group layout {text!r}: every group needs at least one core")
    return cores


def _env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable {name}={raw!r} is not an integer") from exc


def topology_overrides_from_env() -> Dict[str, Any]:
    """Collect topology overrides from the DUALKOORD_* environment variables."""
    overrides: Dict[str, Any] = {}
    cache_line = _env_int(ENV_CACHE_LINE)
    if cache_line is not None:
        overrides["cache_line"] = cache_line
    llc = _env_int(ENV_LLC_BYTES)
    if llc is not None:
        overrides["llc"] = llc
    groups = os.getenv(ENV_GROUPS)
    if groups:
        overrides["groups"] = parse_groups(groups)
    data_group = _env_int(ENV_DATA_GROUP)
    if data_group is not None:
        overrides["data_group"] = data_group
    return overrides


def topology_overrides_from_config(cfg: Mapping[str, Any]) -> Dict[str, Any]:
    """Translate the ``topology`` section of a loaded config into probe overrides."""
    section = cfg.get("topology") or {}
    overrides: Dict[str, Any] = {}
    if section.get("cache_line") is not None:
        overrides["cache_line"] = int(section["cache_line"])
    if section.get("llc_bytes") is not None:
        overrides["llc"] = int(section["llc_bytes"])
    groups = section.get("groups")
    if groups:
        overrides["groups"] = parse_groups(groups) if isinstance(groups, str) else list(groups)
    if section.get("data_group") is not None:
        overrides["data_group"] = int(section["data_group"])
    return overrides
