"""Run configuration: YAML with one section per parameter group."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .dynamics import SimParams
from .fitness import PerceptronParams
from .genome import GaParams, Limits
from .phenotype import WEIGHT_SCALE
from .stimuli import StimulusConfig

__all__ = ["ConfigError", "RunSettings", "RunConfig", "PRESETS", "load_config",
           "config_from_dict", "header_line"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunSettings:
    weight_scale: float = WEIGHT_SCALE
    trials: int = 1
    workers: int = 1
    checkpoint_every: int = 25
    out: str = "runs/latest"
    probe_amplitude: float = 1.0

    def __post_init__(self):
        if self.weight_scale <= 0:
            raise ValueError("weight_scale must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be at least 1")


_SECTIONS = {
    "ga": GaParams,
    "sim": SimParams,
    "stimuli": StimulusConfig,
    "limits": Limits,
    "perceptron": PerceptronParams,
    "run": RunSettings,
}

# Settings that do not change any result and so stay out of the config hash.
_UNHASHED = {("run", "workers"), ("run", "out"), ("run", "checkpoint_every")}


@dataclass(frozen=True)
class RunConfig:
    ga: GaParams = field(default_factory=GaParams)
    sim: SimParams = field(default_factory=SimParams)
    stimuli: StimulusConfig = field(default_factory=StimulusConfig)
    limits: Limits = field(default_factory=Limits)
    perceptron: PerceptronParams = field(default_factory=PerceptronParams)
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        if self.stimuli.n != self.limits.max_cells:
            raise ConfigError("stimuli.n: must equal limits.max_cells "
                              f"({self.stimuli.n} != {self.limits.max_cells})")
        if self.ga.population_size < 4:
            raise ConfigError("ga.population_size: tournaments need at least 4 individuals")

    def to_dict(self) -> dict[str, Any]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def config_hash(self) -> str:
        data = self.to_dict()
        for section, key in _UNHASHED:
            data[section].pop(key)
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, section: str, **changes) -> "RunConfig":
        try:
            new = dataclasses.replace(getattr(self, section), **changes)
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}") from exc
        return dataclasses.replace(self, **{section: new})

    def dump(self) -> str:
        return (header_line(self, "#") + "\n"
                + yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False))


PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "full": {},
    "desk": {"ga": {"population_size": 50, "generations": 50}, "run": {"trials": 20}},
}


def header_line(cfg: RunConfig, prefix: str = "#") -> str:
    return f"{prefix} retina-ga {__version__} config_hash={cfg.config_hash()}"


def _build(section: str, cls, values: Any):
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(values).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
        default = getattr(cls(), key)
        if isinstance(default, bool) or not isinstance(default, (int, float, str)):
            kwargs[key] = value
        elif isinstance(default, int) and not isinstance(value, bool) and isinstance(value, int):
            kwargs[key] = value
        elif isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
            kwargs[key] = float(value)
        elif isinstance(default, str) and isinstance(value, str):
            kwargs[key] = value
        else:
            raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, "
                              f"got {value!r}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_dict(data: dict[str, Any] | None, preset: str | None = None) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    merged: dict[str, dict[str, Any]] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        for section, values in PRESETS[preset].items():
            merged.setdefault(section, {}).update(values)
    for section, values in data.items():
        if values is not None and not isinstance(values, dict):
            raise ConfigError(f"{section}: expected a mapping")
        merged.setdefault(section, {}).update(values or {})
    parts = {name: _build(name, cls, merged.get(name)) for name, cls in _SECTIONS.items()}
    return RunConfig(**parts)


def load_config(path: str | Path | None, preset: str | None = None) -> RunConfig:
    if path is None:
        return config_from_dict({}, preset)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return config_from_dict(data, preset)
