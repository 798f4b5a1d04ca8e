"""Experiment configuration: strict YAML schema with dot-path overrides.

One YAML document per experiment.  Unknown keys are rejected with the
offending key named, and parse -> emit -> parse is a fixpoint.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .episodes import DistributionConfig
from .meta import ConfigError, TrainConfig

SCHEMA_VERSION = 1


@dataclass
class EvalSettings:
    n_episodes: int = 1000
    q_per_class: int = 15
    kg_at_test: bool = False
    split: str = "test"


@dataclass
class AnalysisSettings:
    n_tasks: int = 200
    k: int = 5
    normalized_laplacian: bool = False


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    out_dir: str = "runs/experiment"
    distribution: DistributionConfig = field(default_factory=DistributionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})"
            )
        self.distribution.validate()
        self.train.validate()


_NESTED = {
    "distribution": DistributionConfig,
    "train": TrainConfig,
    "eval": EvalSettings,
    "analysis": AnalysisSettings,
}
_TUPLE_FIELDS = {"embed_hidden", "task_hidden"}


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping at {path or '<root>'}, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key: {path + key}")
    kwargs = {}
    for name in known:
        if name not in data:
            continue
        value = data[name]
        if cls is ExperimentConfig and name in _NESTED:
            kwargs[name] = _from_dict(_NESTED[name], value, f"{path}{name}.")
        elif name in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [int(v) if isinstance(v, int) else v for v in obj]
    return obj


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    return _to_plain(cfg)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return from_dict(data)


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=True)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply 'a.b.c=value' overrides; values parsed as YAML scalars."""
    data = to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like path.to.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node[parts[-1]] = yaml.safe_load(raw)
    return from_dict(data)


def sync_seed(cfg: ExperimentConfig) -> ExperimentConfig:
    """Propagate the experiment seed into the training config."""
    cfg.train.seed = cfg.seed
    return cfg
