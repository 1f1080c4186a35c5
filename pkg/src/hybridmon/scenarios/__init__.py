"""Builtin scenario files shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..config import ScenarioConfig, load_config


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".yaml"))


def builtin_path(name: str) -> Path | None:
    name = name[:-5] if name.endswith(".yaml") else name
    p = resources.files(__name__) / f"{name}.yaml"
    return Path(str(p)) if p.is_file() else None


def load_builtin(name: str) -> ScenarioConfig:
    p = builtin_path(name)
    if p is None:
        raise FileNotFoundError(f"no builtin scenario {name!r}")
    return load_config(p)
