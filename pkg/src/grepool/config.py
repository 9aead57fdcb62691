"""Experiment configuration files (YAML) and dataset resolution."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import data
from .pooling import STRATEGIES, ConfigurationError
from .training import TrainConfig

DATA_ROOT_ENV = "GREPOOL_DATA_ROOT"
SYNTHETIC = ("synthetic-triangle", "synthetic-motif")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Strict):
    name: str
    root: Optional[str] = None
    max_degree: int = Field(64, ge=1)
    degree_features: Optional[bool] = None  # None: only when the data has no node labels
    size: int = Field(188, ge=4)  # synthetic datasets only


class TrainSection(_Strict):
    model: str = "grepool"
    p: float = 0.5
    lam: float = 0.1
    layers: int = 3
    heads: int = 4
    hidden: int = 128
    lr: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    strategy: str = "attention"
    uniform_loss: bool = False
    uniform_mode: str = "pooled"
    renormalize: bool = False
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    patience: Optional[int] = None
    n_seeds: int = Field(10, ge=1)
    jobs: int = Field(1, ge=1)


class SweepSection(_Strict):
    p: Optional[list[float]] = None
    strategy: Optional[list[str]] = None
    layers: Optional[list[int]] = None
    lam: Optional[list[float]] = None

    @field_validator("strategy")
    @classmethod
    def _known(cls, v):
        for s in v or []:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        return v


class ExperimentConfig(_Strict):
    dataset: DatasetSection
    train: TrainSection = TrainSection()
    sweep: SweepSection = SweepSection()
    output_dir: str = "results"

    def train_config(self, **overrides) -> TrainConfig:
        fields = self.train.model_dump(exclude={"n_seeds", "jobs"})
        fields.update(overrides)
        fields["split"] = tuple(fields["split"])
        return TrainConfig(**fields)


def _apply_override(raw: dict, assignment: str) -> None:
    key, sep, value = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override {assignment!r}: expected key=value")
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: {p} is not a section")
    node[parts[-1]] = yaml.safe_load(value)


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read, override, and fully validate a config before anything runs."""
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for o in overrides:
        _apply_override(raw, o)
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(x) for x in err["loc"])
        raise ConfigError(f"{loc}: {err['msg']}") from exc
    try:
        cfg.train_config()
    except ConfigurationError as exc:
        raise ConfigError(f"train.{exc}") from exc
    return cfg


def dataset_dir(section: DatasetSection) -> Path:
    root = Path(section.root or os.environ.get(DATA_ROOT_ENV, "data"))
    nested = root / section.name
    return nested if nested.is_dir() else root


def load_dataset(section: DatasetSection) -> list[data.Graph]:
    """Load graphs named by the config; raises ``data.IngestionError`` if absent."""
    if section.name == "synthetic-triangle":
        return data.triangle_dataset(section.size)
    if section.name == "synthetic-motif":
        return data.motif_dataset(section.size)
    d = dataset_dir(section)
    graphs = data.parse_tu_dataset(d, section.name)
    has_node_labels = (d / f"{section.name}_node_labels.txt").is_file()
    use_degree = section.degree_features if section.degree_features is not None else not has_node_labels
    if use_degree:
        graphs = [data.degree_features(g, section.max_degree) for g in graphs]
    return graphs
