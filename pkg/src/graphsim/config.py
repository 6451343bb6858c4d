"""Run configuration: one TOML or JSON file drives every pipeline stage."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .generators import ClassGrid
from .graph import GENERATORS as GENERATOR_NAMES
from .layout import RenderStyle
from .rater import API_KEY_ENV, DEFAULT_MODEL, EndpointConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    size_classes: dict[str, int] = Field(default_factory=lambda: {"S1": 25, "S2": 50, "S3": 100, "S4": 250})
    density_classes: dict[str, float] = Field(default_factory=lambda: {"D1": 1.2, "D2": 2.0, "D3": 3.5})
    tolerance: float = 0.2

    def build(self) -> ClassGrid:
        return ClassGrid(dict(self.size_classes), dict(self.density_classes), self.tolerance)


class LayoutConfig(_Strict):
    iterations: int = Field(500, ge=1)


class StyleConfig(_Strict):
    canvas: int = Field(1024, ge=64)
    node_fill: str = "#1f77b4"
    node_stroke: str = "#ffffff"
    edge_stroke: str = "#555555"
    edge_width: float = 1.5
    background: str = "#ffffff"
    margin: float = Field(0.05, ge=0.0, lt=0.4)

    def build(self) -> RenderStyle:
        return RenderStyle(**self.model_dump())


class CorpusConfig(_Strict):
    grid: GridConfig = Field(default_factory=GridConfig)
    generators: list[str] = Field(default_factory=lambda: list(GENERATOR_NAMES))
    instances_per_cell: int = Field(8, ge=1)
    base_seed: int = Field(20241008, ge=0, lt=2**64)
    max_attempts: int = Field(100, ge=1)
    connectivity: Literal["resample", "resample_then_repair"] = "resample_then_repair"
    sbm_ratio: float = Field(8.0, ge=1.0)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    style: StyleConfig = Field(default_factory=StyleConfig)

    @field_validator("generators")
    @classmethod
    def _known(cls, v: list[str]) -> list[str]:
        bad = [g for g in v if g not in GENERATOR_NAMES]
        if bad or not v or len(set(v)) != len(v):
            raise ValueError(f"generators must be distinct names from {GENERATOR_NAMES}")
        return v

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.model_dump(), sort_keys=True).encode()).hexdigest()


class MeasureConfig(_Strict):
    bins: int = Field(20, ge=2)


class RaterConfig(_Strict):
    kind: Literal["mock", "live"] = "mock"
    url: str = "https://api.openai.com/v1/chat/completions"
    model: str = DEFAULT_MODEL
    temperature: float = Field(0.0, ge=0.0, le=2.0)
    api_key_env: str = API_KEY_ENV
    rpm: float = Field(60.0, gt=0)
    concurrency: int = Field(4, ge=1)
    max_retries: int = Field(5, ge=0)
    timeout: float = Field(60.0, gt=0)
    backoff_base: float = Field(2.0, ge=0)
    cost_per_request_usd: float = Field(0.01, ge=0)

    def endpoint(self) -> EndpointConfig:
        data = self.model_dump()
        data.pop("kind")
        return EndpointConfig(**data)


class RunConfig(_Strict):
    version: int
    output_dir: str = "run"
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    measures: MeasureConfig = Field(default_factory=MeasureConfig)
    pairing: Literal["within_stratum", "all_pairs"] = "within_stratum"
    rater: RaterConfig = Field(default_factory=RaterConfig)
    jobs: int = Field(1, ge=1)
    verbosity: Literal["quiet", "info", "debug"] = "info"
    base_dir: Optional[str] = Field(None, exclude=True)

    @field_validator("version")
    @classmethod
    def _version(cls, v: int) -> int:
        if v != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {v}; expected {CONFIG_VERSION}")
        return v

    @property
    def out(self) -> Path:
        p = Path(self.output_dir)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p


def parse_config(data: dict, base_dir: Optional[Path] = None) -> RunConfig:
    if "base_dir" in data:
        raise ConfigError("unknown key 'base_dir'")
    try:
        cfg = RunConfig(**data, base_dir=str(base_dir) if base_dir else None)
        cfg.corpus.grid.build()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object")
    return parse_config(data, p.resolve().parent)
