"""Versioned run configuration (YAML). Unknown keys are rejected."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .model import ModelConfig
from .trainer import TrainConfig

CONFIG_VERSION = 1


@dataclass
class SynthSection:
    n_sessions: int = 1000
    rule_probs: dict = field(default_factory=lambda: {"k1": 0.15, "k4": 0.7, "noise": 0.15})
    min_prev_queries: int = 1
    max_prev_queries: int = 4


@dataclass
class IngestSection:
    gap_seconds: int = 1800
    min_query_freq: int = 10
    max_tokens: int = 128
    test_fraction: float = 0.2
    dev_size: int = 100
    vocab_size: int = 1024


@dataclass
class DecodeSection:
    k: int = 5
    width: int = 8
    max_len: int = 32


@dataclass
class EvaluateSection:
    ks: list = field(default_factory=lambda: [1, 3, 5])


_MODEL_KEYS = [f.name for f in fields(ModelConfig) if f.name != "vocab_size"]


def _default_model() -> dict:
    probe = ModelConfig(vocab_size=1)
    return {k: getattr(probe, k) for k in _MODEL_KEYS}


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    synth: SynthSection = field(default_factory=SynthSection)
    ingest: IngestSection = field(default_factory=IngestSection)
    model: dict = field(default_factory=_default_model)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeSection = field(default_factory=DecodeSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, **self.model)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


_SECTIONS = {
    "synth": SynthSection,
    "ingest": IngestSection,
    "train": TrainConfig,
    "decode": DecodeSection,
    "evaluate": EvaluateSection,
}


def _merge_section(cls, current, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    merged = asdict(current)
    merged.update(values)
    return cls(**merged)


def from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    data = dict(data or {})
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigurationError(f"unsupported config version {version}; expected {CONFIG_VERSION}")
    top_known = {f.name for f in fields(RunConfig)} - {"version"}
    unknown = set(data) - top_known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "seed" in data:
        cfg.seed = int(data["seed"])
    for name, cls in _SECTIONS.items():
        if name in data:
            setattr(cfg, name, _merge_section(cls, getattr(cfg, name), data[name], name))
    if "model" in data:
        values = data["model"]
        if not isinstance(values, dict):
            raise ConfigurationError("model must be a mapping")
        unknown = set(values) - set(_MODEL_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown keys in model: {sorted(unknown)}")
        cfg.model = {**cfg.model, **values}
        try:
            cfg.model_config(vocab_size=1)
        except ValueError as exc:
            raise ConfigurationError(f"model: {exc}") from exc
    return cfg


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return from_dict(data)


def _parse_scalar(text: str) -> Any:
    return yaml.safe_load(text)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        value = _parse_scalar(raw)
        if len(parts) == 1:
            cfg = from_dict({parts[0]: value}, cfg)
        elif len(parts) == 2:
            cfg = from_dict({parts[0]: {parts[1]: value}}, cfg)
        else:
            raise ConfigurationError(f"override key {key!r} nests too deep")
    return cfg
