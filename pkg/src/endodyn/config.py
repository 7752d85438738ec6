"""Run configuration: strict JSON schema and model construction.

Every default used by the CLI lives here:

=====================  ===========
cluster tolerance      ``1e-6``
ordering window        ``50``
drift tolerance        ``1e-9``
flow threshold tau     ``1.0``
conditional samples N  ``10000``
probe snapshots        ``20``
future horizon T       ``50 * m``
=====================  ===========
"""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import models as M
from .errors import ConfigError

SCHEMA_VERSION = "1"
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_X0_PATTERN = re.compile(rf"(?:uniform|equally-spaced)\({_NUM},{_NUM}\)")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ----------------------------------------------------------------------------
# samplers


class ConstantSpec(_Strict):
    dist: Literal["constant"]
    value: float

    def build(self):
        return M.Constant(self.value)


class UniformSpec(_Strict):
    dist: Literal["uniform"]
    low: float
    high: float

    def build(self):
        return M.Uniform(self.low, self.high)


class DiscreteSpec(_Strict):
    dist: Literal["discrete"]
    values: list[float]
    probs: list[float]

    def build(self):
        return M.Discrete(tuple(self.values), tuple(self.probs))


class ExponentialSpec(_Strict):
    dist: Literal["exponential"]
    scale: float = Field(gt=0)

    def build(self):
        return M.Exponential(self.scale)


SamplerSpec = Annotated[
    Union[ConstantSpec, UniformSpec, DiscreteSpec, ExponentialSpec], Field(discriminator="dist")
]


# ----------------------------------------------------------------------------
# model blocks


class HkSyncSpec(_Strict):
    kind: Literal["hk_sync"]
    epsilon: float = Field(gt=0)

    def build(self, m):
        return M.HkSyncModel(M.HkParams(m, self.epsilon))


class HkAsyncSpec(_Strict):
    kind: Literal["hk_async"]
    epsilon: float = Field(gt=0)
    pick_probabilities: list[float] | None = None

    def build(self, m):
        p = None if self.pick_probabilities is None else tuple(self.pick_probabilities)
        return M.AsyncHkModel(M.AsyncHkParams(M.HkParams(m, self.epsilon), p))


class HkLinkFailSpec(_Strict):
    kind: Literal["hk_linkfail"]
    epsilon: float = Field(gt=0)
    failure_prob: float | list[float] = 0.0

    def build(self, m):
        return M.LinkFailureHkModel(M.LinkFailParams(M.HkParams(m, self.epsilon), self.failure_prob))


class HkRandConfSpec(_Strict):
    kind: Literal["hk_randconf"]
    epsilon: float = Field(gt=0)
    confidence: SamplerSpec | None = None

    def build(self, m):
        sampler = None if self.confidence is None else self.confidence.build()
        return M.RandomConfidenceHkModel(M.RandConfParams(M.HkParams(m, self.epsilon), sampler))


class GossipSpec(_Strict):
    kind: Literal["gossip"]
    epsilon: float = Field(gt=0)
    gamma_low: float
    gamma_high: float
    gamma: SamplerSpec | None = None

    def build(self, m):
        sampler = None if self.gamma is None else self.gamma.build()
        return M.GossipModel(M.GossipParams(m, self.epsilon, self.gamma_low, self.gamma_high, sampler))


ModelSpec = Annotated[
    Union[HkSyncSpec, HkAsyncSpec, HkLinkFailSpec, HkRandConfSpec, GossipSpec],
    Field(discriminator="kind"),
]

CHECKS = (
    "convergence",
    "clusters",
    "symmetric",
    "balancedness",
    "subsymmetry",
    "weak_reciprocity",
    "pair_reciprocity",
    "v_ell",
    "lyapunov",
    "abs_prob",
    "identity",
)


class DiagnosticsSpec(_Strict):
    checks: list[Literal[CHECKS]] = ["convergence", "clusters"]
    n_samples: int = Field(10_000, ge=2)
    probes: int = Field(20, ge=1)
    probe_horizon: int | None = Field(None, ge=1)
    horizon: int | None = Field(None, ge=1)
    tau: float = Field(1.0, gt=0)
    tau_robustness: list[float] = [0.5, 2.0]
    flow_window: Literal["tail", "full"] = "tail"
    tol_cluster: float = Field(1e-6, gt=0)
    window: int = Field(50, ge=1)
    tol: float = Field(1e-9, gt=0)
    z: float = Field(3.0, gt=0)
    balancedness_bound: float | None = None
    gamma: float | None = None
    beta: float | None = Field(None, gt=0, le=0.5)
    ell: list[int] | None = None
    g: Literal["square", "abs", "exp", "linear"] = "square"
    n_inner: int = Field(8, ge=1)
    symmetric: list[Literal["sum", "spread", "max-min", "l1", "l2", "linf"]] = ["sum", "spread"]


class SweepSpec(_Strict):
    param: str
    values: list[float]
    seeds: list[int]

    @field_validator("values", "seeds")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("must not be empty")
        return v


class RunConfig(_Strict):
    model: ModelSpec
    m: int = Field(ge=2)
    x0: str | list[float]
    steps: int = Field(ge=1)
    master_seed: int = Field(ge=0, lt=2**64)
    replicas: int = Field(1, ge=1)
    output_dir: str = "out"
    retain_threshold: int = Field(64, ge=0)
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    sweep: SweepSpec | None = None

    @field_validator("x0")
    @classmethod
    def _x0_form(cls, v):
        if isinstance(v, str) and not _X0_PATTERN.fullmatch(v.replace(" ", "")):
            raise ValueError(f"x0 {v!r} is not 'uniform(lo,hi)' or 'equally-spaced(lo,hi)'")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if isinstance(self.x0, list) and len(self.x0) != self.m:
            raise ValueError(f"x0 has {len(self.x0)} entries, m is {self.m}")
        if self.sweep is not None and self.sweep.param not in type(self.model).model_fields:
            raise ValueError(f"sweep parameter {self.sweep.param!r} is not a field of the model block")
        return self

    @property
    def horizon(self) -> int:
        return self.diagnostics.horizon or 50 * self.m

    @property
    def probe_horizon(self) -> int:
        return self.diagnostics.probe_horizon or self.steps

    def build_model(self):
        try:
            return self.model.build(self.m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_param(self, name: str, value) -> "RunConfig":
        data = self.model_dump()
        data["model"][name] = value
        return RunConfig.model_validate(data)

    def echo(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed: int | None = None) -> RunConfig:
    """Read a JSON config; ``seed`` replaces ``master_seed`` when given."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        data["master_seed"] = seed
    return parse_config(data)
