"""
Flat KEY=value scenario files.

Keys are ScenarioConfig field names (case-insensitive). List fields take
comma-separated values; keys with empty values are ignored.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from ..core.config import ScenarioConfig
from ..core.errors import ConfigError, IoFailure
from ..experiments import preset

LIST_FIELDS = {"snr_grid_db", "methods", "near_radial_bounds", "far_radial_bounds"}
DERIVED_FIELDS = {"num_ues"}


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Parse a scenario file into ScenarioConfig updates.

    Raises:
        IoFailure: if the file does not exist
        ConfigError: on unknown keys or an inconsistent num_ues
    """
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"config file {path} not found")

    updates: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower()
        if name not in ScenarioConfig.model_fields and name not in DERIVED_FIELDS:
            raise ConfigError(f"unknown config key '{key}' in {path}")
        value = (raw or "").strip()
        if name in LIST_FIELDS:
            updates[name] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            updates[name] = value or None

    num_ues = updates.pop("num_ues", None)
    if num_ues is not None:
        near = int(updates.get("near_field_ues") or 0)
        far = updates.get("far_field_ues")
        if far is None:
            updates["far_field_ues"] = int(num_ues) - near
        elif near + int(far) != int(num_ues):
            raise ConfigError(f"num_ues={num_ues} disagrees with near_field_ues + far_field_ues = {near + int(far)}")

    # empty values keep whatever the preset set
    return {k: v for k, v in updates.items() if v is not None}


def apply_updates(cfg: ScenarioConfig, updates: Dict[str, Any]) -> ScenarioConfig:
    """Validated copy of cfg with updates, pydantic errors raised as ConfigError"""
    try:
        return cfg.updated(**updates)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def resolve_config(
    preset_name: str,
    config_path: Optional[Union[str, Path]] = None,
    desk: bool = False,
    **overrides: Any,
) -> ScenarioConfig:
    """Preset, then config file, then desk scaling, then explicit overrides (None values ignored)"""
    cfg = preset(preset_name)
    if config_path is not None:
        cfg = apply_updates(cfg, load_config_file(config_path))
    if desk:
        try:
            cfg = cfg.desk()
        except ValidationError as e:
            raise ConfigError(str(e)) from e
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = apply_updates(cfg, overrides)
    return cfg
