"""Run configuration: JSON documents validated with pydantic.

A config is validated completely before anything runs.  The dumped model
(``model_dump(mode="json")``) is the effective configuration with every
default filled in; writing it out and loading it back reproduces the run.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .anderson import AASpec
from .errors import ConfigError, WorldError
from .fields import IdealField, PerturbedField
from .projection import OperatorSpec
from .samplers import SamplerConfig
from .world import DEFAULT_T_MIN, LabeledPointCloud, make_world


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WorldConfig(_Strict):
    generator: Optional[Literal["two-clusters", "two-moons", "ring"]] = "two-clusters"
    params: dict = Field(default_factory=dict)
    inline: Optional[dict] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        sources = [self.inline is not None, self.path is not None]
        if sum(sources) > 1:
            raise ValueError("give at most one of 'inline' and 'path'")
        if any(sources):
            self.generator = None
        return self


class FieldConfig(_Strict):
    kind: Literal["analytic-ideal", "perturbed"] = "analytic-ideal"
    epsilon: float = 0.0
    seed: int = 0


class FieldsConfig(_Strict):
    cond: FieldConfig = Field(default_factory=FieldConfig)
    uncond: FieldConfig = Field(default_factory=FieldConfig)


class OperatorConfig(_Strict):
    variant: Literal["G", "H", "G-prime", "G-lambda"] = "G"
    lam: float = Field(0.5, gt=0.0, lt=1.0)
    w: Optional[float] = None


class AAConfig(_Strict):
    m: int = Field(1, ge=0)
    beta: float = Field(1.0, gt=0.0, le=1.0)
    reg: float = Field(1e-10, ge=0.0)
    raw_first_step: bool = False


class SamplerSettings(_Strict):
    method: Literal["cfg", "cfg-mp", "cfg-mp-plus"] = "cfg-mp-plus"
    steps: int = Field(32, ge=1)
    w: float = 1.5
    K: int = Field(2, ge=0)
    operator: OperatorConfig = Field(default_factory=OperatorConfig)
    aa: AAConfig = Field(default_factory=AAConfig)
    t_min: float = Field(DEFAULT_T_MIN, gt=0.0, lt=0.5)
    seed: int = Field(0, ge=0)
    chains: int = Field(64, ge=1)
    record: Literal["final-only", "full-trajectory"] = "final-only"
    final_projection: Literal["skip", "clamp"] = "skip"
    on_divergence: Literal["flag", "raise"] = "flag"
    block_size: int = Field(64, ge=1)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _cfg_has_no_projection(self):
        if self.method == "cfg" and self.K > 0:
            raise ValueError("method 'cfg' has no projection phase; set K to 0")
        return self

    def build(self) -> SamplerConfig:
        data = self.model_dump()
        data["operator"] = OperatorSpec(**data["operator"])
        data["aa"] = AASpec(**data["aa"])
        return SamplerConfig(**data)


class OutputConfig(_Strict):
    dir: str = "out"
    format: Literal["csv", "json", "both"] = "both"
    svg: bool = True
    svg_chains: int = Field(16, ge=0)


class _Base(_Strict):
    world: WorldConfig = Field(default_factory=WorldConfig)
    label: str = "A"
    fields: FieldsConfig = Field(default_factory=FieldsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def build_world(self, base_dir=None) -> LabeledPointCloud:
        w = self.world
        try:
            if w.inline is not None:
                cloud = LabeledPointCloud.from_json(w.inline)
            elif w.path is not None:
                p = Path(w.path)
                if base_dir is not None and not p.is_absolute():
                    p = Path(base_dir) / p
                cloud = LabeledPointCloud.load(p)
            else:
                cloud = make_world(w.generator, **w.params)
        except (WorldError, TypeError, OSError) as exc:
            raise ConfigError(f"world: {exc}") from None
        if self.label not in cloud.label_names:
            raise ConfigError(
                f"label: {self.label!r} is not a label of the world {list(cloud.label_names)}"
            )
        return cloud

    def build_fields(self, cloud, t_min=DEFAULT_T_MIN):
        base = IdealField(cloud, t_min)

        def one(spec: FieldConfig):
            if spec.kind == "perturbed":
                return PerturbedField(base, spec.epsilon, spec.seed)
            return base

        return one(self.fields.cond), one(self.fields.uncond)


class RunConfig(_Base):
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)


class CompareConfig(_Base):
    runs: list[SamplerSettings] = Field(min_length=1)


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(doc, kind=RunConfig):
    try:
        return kind.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def load_config(path, kind=RunConfig):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, kind)
