"""Flat key-value run configuration files with include/override.

Format: one ``key = value`` per line, ``#`` comments, and
``include <relative-path>`` directives resolved against the including
file.  Later assignments win.  Every run writes a resolved manifest in
the same format.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from cwm.config import BehaviorConfig, ConfigError, IntrinsicConfig, RunConfig

_SIMPLE_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)
                  if f.name not in ("behavior", "intrinsic")}
_BEHAVIOR_FIELDS = {f.name for f in dataclasses.fields(BehaviorConfig)}
_INTRINSIC_FIELDS = {f.name for f in dataclasses.fields(IntrinsicConfig)}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flatten a config file (with includes) into key -> raw string."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            inc = line[len("include "):].strip()
            out.update(parse_config_file(path.parent / inc))
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _convert(key: str, value: str, target_type: str) -> object:
    t = str(target_type)
    try:
        if "bool" in t:
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if "int" in t:
            return int(value)
        if "float" in t:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"config key {key}={value!r}: {exc}") from exc


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply raw string overrides (dotted keys reach nested configs)."""
    simple: dict[str, object] = {}
    behavior: dict[str, object] = {}
    intrinsic: dict[str, object] = {}
    for key, value in overrides.items():
        if key.startswith("behavior."):
            name = key[len("behavior."):]
            if name not in _BEHAVIOR_FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            field = next(f for f in dataclasses.fields(BehaviorConfig)
                         if f.name == name)
            behavior[name] = _convert(key, value, field.type)
        elif key.startswith("intrinsic."):
            name = key[len("intrinsic."):]
            if name not in _INTRINSIC_FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            field = next(f for f in dataclasses.fields(IntrinsicConfig)
                         if f.name == name)
            intrinsic[name] = _convert(key, value, field.type)
        else:
            if key not in _SIMPLE_FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            simple[key] = _convert(key, value, _SIMPLE_FIELDS[key])
    if behavior:
        simple["behavior"] = dataclasses.replace(cfg.behavior, **behavior)
    if intrinsic:
        simple["intrinsic"] = dataclasses.replace(cfg.intrinsic, **intrinsic)
    new = dataclasses.replace(cfg, **simple)
    new.validate()
    return new


def load_run_config(path: str | Path | None,
                    overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(parse_config_file(path))
    if overrides:
        raw.update(overrides)
    return apply_overrides(cfg, raw)


def resolved_config_text(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "behavior":
            for bf in dataclasses.fields(BehaviorConfig):
                lines.append(f"behavior.{bf.name} = {getattr(value, bf.name)}")
        elif f.name == "intrinsic":
            for bf in dataclasses.fields(IntrinsicConfig):
                lines.append(f"intrinsic.{bf.name} = {getattr(value, bf.name)}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def write_manifest(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(resolved_config_text(cfg))
