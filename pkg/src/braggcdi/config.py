"""Experiment configuration: YAML schema, validation, round-trip."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .forward import ForwardConfig
from .model import CrystalSpec, default_inclusions
from .noise import NoiseSpec
from .shrinkwrap import ShrinkwrapParams

SeedKind = Literal["dcdi", "autocorr"]
MethodName = Literal["dcdi", "shrinkwrap-from-dcdi", "shrinkwrap-from-autocorr"]


class ConfigError(ValueError):
    """Config file failed to parse or validate."""


class Variant(BaseModel):
    """One cell of the experiment matrix."""

    model_config = ConfigDict(extra="forbid")

    method: MethodName
    noise: bool = False

    @property
    def name(self) -> str:
        return f"{self.method}_{'noisy' if self.noise else 'nonoise'}"

    @property
    def seed_kind(self) -> SeedKind | None:
        if self.method == "shrinkwrap-from-dcdi":
            return "dcdi"
        if self.method == "shrinkwrap-from-autocorr":
            return "autocorr"
        return None


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "out"
    dump_volumes: bool = False
    write_traces: bool = True


def _default_variants() -> list[Variant]:
    return [
        Variant(method=m, noise=n)
        for n in (False, True)
        for m in ("dcdi", "shrinkwrap-from-dcdi", "shrinkwrap-from-autocorr")
    ]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    crystal: CrystalSpec = Field(default_factory=lambda: CrystalSpec(
        inclusions=default_inclusions(32)))
    forward: ForwardConfig = Field(default_factory=ForwardConfig)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    shrinkwrap: ShrinkwrapParams = Field(default_factory=ShrinkwrapParams)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    variants: list[Variant] = Field(default_factory=_default_variants, min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        uses_dcdi = any(v.method != "shrinkwrap-from-autocorr" for v in self.variants)
        if uses_dcdi and self.crystal.oversampling < 4:
            raise ValueError(
                "deterministic reconstruction needs oversampling >= 4 per axis "
                "for disjoint copies"
            )
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError("duplicate experiment variants")
        return self


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    payload = config.model_dump(mode="json", exclude_none=True)
    # the form factor is a callable hook, not configuration data
    payload.get("forward", {}).pop("form_factor", None)
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))
