"""Pipeline configuration: built-in defaults, overridden by a JSON file, overridden by flags."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from dsmap.errors import ConfigError
from dsmap.evalgen.querygen import QueryGenConfig
from dsmap.fusion import FusionConfig
from dsmap.grounding.pipeline import GroundingConfig
from dsmap.perception.backends import BACKENDS
from dsmap.window import WindowConfig

_SECTIONS = {
    "fusion": FusionConfig,
    "window": WindowConfig,
    "querygen": QueryGenConfig,
    "grounding": GroundingConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    querygen: QueryGenConfig = field(default_factory=QueryGenConfig)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    backend: str = "mock"
    seed: int = 0
    max_depth: float = 10.0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if not self.max_depth > 0:
            raise ConfigError("max_depth must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return merge(cls(), d)


def merge(base: PipelineConfig, overrides: dict) -> PipelineConfig:
    """New config with ``overrides`` (nested dicts per section) applied over ``base``."""
    if not isinstance(overrides, dict):
        raise ConfigError("configuration must be a JSON object")
    top = {}
    for key, value in overrides.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            section = getattr(base, key)
            known = {f.name for f in dataclasses.fields(section)}
            unknown = sorted(set(value) - known)
            if unknown:
                raise ConfigError(f"unknown {key} option(s): {', '.join(unknown)}")
            try:
                top[key] = dataclasses.replace(section, **value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {key} config: {exc}") from exc
        elif key in ("backend", "seed", "max_depth"):
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return dataclasses.replace(base, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg
