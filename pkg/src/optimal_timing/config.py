"""Run configuration document (YAML or JSON), validated before any work.

Unknown keys are rejected at every level. Relative file paths are resolved
against the directory of the config file.
"""
from __future__ import annotations

import datetime as _dt
import os
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidArgumentError
from .stopnet import StopNetConfig

CONFIG_VERSION = 1
SEED_ENV = "OPTIMAL_TIMING_SEED"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ForecasterSection(_Strict):
    kind: Literal["gbm", "ar", "bootstrap", "lattice"]
    # gbm
    s0: float = Field(1.0, gt=0)
    mu: float = 0.0
    sigma: float = Field(0.0, ge=0)
    n_series: int = Field(1, ge=1)
    # ar / bootstrap
    history_file: Optional[str] = None
    series: Optional[List[str]] = None
    order: int = Field(1, ge=1)
    block_len: int = Field(5, ge=1)
    # lattice
    u: float = Field(1.1, gt=0)
    dn: float = Field(0.9, gt=0)
    p: float = Field(0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _needs_history(self):
        if self.kind in ("ar", "bootstrap") and not self.history_file:
            raise ValueError(f"forecaster kind {self.kind!r} requires history_file")
        if self.kind == "lattice" and not 0 < self.dn < self.u:
            raise ValueError("lattice requires 0 < dn < u")
        return self


class StopNetSection(_Strict):
    hidden_dim: int = Field(16, ge=1)
    mlp_hidden: List[int] = Field(default_factory=lambda: [16])
    input_features: Literal[1, 2] = 2
    learning_rate: float = Field(0.05, gt=0)
    batch_size: int = Field(256, ge=1)
    epochs: int = Field(200, ge=1)

    @field_validator("mlp_hidden")
    @classmethod
    def _positive(cls, v):
        if any(w < 1 for w in v):
            raise ValueError("layer widths must be >= 1")
        return v

    def build(self, seed: int) -> StopNetConfig:
        return StopNetConfig(
            hidden_dim=self.hidden_dim,
            mlp_hidden=tuple(self.mlp_hidden),
            input_features=self.input_features,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=seed,
        )


class CostSection(_Strict):
    weights: List[float]

    @field_validator("weights")
    @classmethod
    def _positive(cls, v):
        if not v or any(a <= 0 for a in v):
            raise ValueError("cost weights must be positive")
        return v


class BacktestSection(_Strict):
    train_start: _dt.date
    train_end: _dt.date
    decision_dates: Optional[List[_dt.date]] = None
    decision_start: Optional[_dt.date] = None
    decision_end: Optional[_dt.date] = None
    refit: bool = True

    @model_validator(mode="after")
    def _dates(self):
        if self.decision_dates is None and (self.decision_start is None or self.decision_end is None):
            raise ValueError("give decision_dates or both decision_start and decision_end")
        if self.decision_dates is not None and (self.decision_start or self.decision_end):
            raise ValueError("decision_dates excludes decision_start/decision_end")
        return self


class RunConfig(_Strict):
    version: Literal[1] = 1
    seed: Optional[int] = None
    horizon: int = Field(..., ge=1)
    n_paths: int = Field(1000, ge=1)
    normalize: bool = True
    forecaster: ForecasterSection
    stopnet: StopNetSection = Field(default_factory=StopNetSection)
    cost: Optional[CostSection] = None
    backtest: Optional[BacktestSection] = None

    def resolved_seed(self) -> int:
        """Config seed, else the ``OPTIMAL_TIMING_SEED`` environment variable, else 0."""
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV)
        if env is None or not env.strip():
            return 0
        try:
            return int(env)
        except ValueError:
            raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {env!r}") from None


class ConfigError(InvalidArgumentError):
    pass


def load_config(path) -> tuple[RunConfig, Path]:
    """Parse and validate a config file; returns it with its base directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: schema error:\n{exc}") from None
    return cfg, path.parent


def resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p
