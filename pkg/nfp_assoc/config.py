"""
Run configuration.

A run config is a JSON document with up to six sections (environment,
scenario, limits, solver, sweep, output). Every field has an urban-scenario default
and a matching command-line flag; flag values override the file, and the
merged document is validated once before any work starts.
"""

from __future__ import annotations

import json
import typing
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from nfp_assoc.channel import EnvironmentParams, db_to_linear
from nfp_assoc.errors import ConfigError
from nfp_assoc.experiments import SweepSpec
from nfp_assoc.instance import NetworkLimits
from nfp_assoc.scenario import DEFAULT_RATE_CHOICES, ScenarioConfig
from nfp_assoc.solvers import DEFAULT_NODE_BUDGET, ScoreWeights, SolverOptions


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvironmentSettings(_Section):
    alpha: float = 9.61
    beta: float = 0.16
    eta_los: float = Field(1.0, ge=0)
    eta_nlos: float = Field(20.0, ge=0)
    carrier_freq: float = Field(2e9, gt=0)
    pl_exponent: float = Field(2.0, gt=0)
    tx_power: float = Field(5.0, gt=0)
    noise_floor: float = Field(1e-13, gt=0)

    def to_env(self) -> EnvironmentParams:
        return EnvironmentParams(**self.model_dump())


class ScenarioSettings(_Section):
    area_side: float = Field(4000.0, gt=0)
    n_sc: int = Field(30, ge=0)
    n_d: int = Field(3, ge=0)
    density: float = Field(5e-6, gt=0)
    nfp_density: Optional[float] = Field(None, gt=0)
    sc_min_sep: float = Field(300.0, ge=0)
    nfp_min_sep: Optional[float] = Field(None, ge=0)
    nfp_height: float = Field(300.0, gt=0)
    rate_choices: List[float] = Field(default_factory=lambda: list(DEFAULT_RATE_CHOICES), min_length=1)
    pl_max: float = 115.0
    seed: int = Field(0, ge=0, lt=2 ** 64)
    max_attempts: int = Field(10_000, ge=1)

    def to_scenario_config(self) -> ScenarioConfig:
        data = self.model_dump()
        data["rate_choices"] = tuple(data["rate_choices"])
        return ScenarioConfig(**data)


class LimitsSettings(_Section):
    backhaul_rate: float = Field(2.9e9, gt=0)
    nfp_bandwidth: Union[float, List[float]] = 1e9
    nfp_max_links: Union[int, List[int]] = 16
    sinr_min_db: float = -5.0

    def to_limits(self, n_d: int) -> NetworkLimits:
        def per_nfp(name, value):
            if isinstance(value, list):
                if len(value) != n_d:
                    raise ConfigError(f"limits.{name} has {len(value)} entries for {n_d} NFPs")
                return tuple(value)
            return (value,) * n_d

        return NetworkLimits(
            backhaul_rate=self.backhaul_rate,
            nfp_bandwidth=per_nfp("nfp_bandwidth", self.nfp_bandwidth),
            nfp_max_links=per_nfp("nfp_max_links", self.nfp_max_links),
            sinr_min=db_to_linear(self.sinr_min_db),
        )


class SolverSettings(_Section):
    solver: Literal["cmca", "dmca", "exact", "all"] = "all"
    weights: str = "1,1"
    variant: Literal["pseudocode", "prose"] = "pseudocode"
    step2: Literal["break", "skip"] = "break"
    node_budget: int = Field(DEFAULT_NODE_BUDGET, ge=1)
    exact_bound: Literal["relaxed", "cardinality"] = "relaxed"

    @field_validator("weights")
    @classmethod
    def _weights_parse(cls, value: str) -> str:
        try:
            ScoreWeights.parse(value)
        except ConfigError as e:
            raise ValueError(str(e)) from None
        return value

    def solver_ids(self) -> List[str]:
        return ["cmca", "dmca", "exact"] if self.solver == "all" else [self.solver]

    def to_solver_options(self) -> SolverOptions:
        return SolverOptions(
            weights=ScoreWeights.parse(self.weights),
            step2=self.step2,
            variant=self.variant,
            node_budget=self.node_budget,
            exact_bound=self.exact_bound,
        )


class SweepSettings(_Section):
    kind: Literal["rate_ratio", "bandwidth_ratio", "timing"] = "rate_ratio"
    grid: List[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 1.0, 1.2])
    scenarios: int = Field(200, ge=1)
    solvers: List[Literal["cmca", "dmca", "exact"]] = Field(
        default_factory=lambda: ["cmca", "dmca", "exact"], min_length=1
    )
    repetitions: int = Field(5, ge=1)
    workers: Optional[int] = Field(None, ge=1)


class OutputSettings(_Section):
    out: Optional[str] = None
    scenario: Optional[str] = None
    snapshot: Optional[str] = None


SECTIONS = {
    "environment": EnvironmentSettings,
    "scenario": ScenarioSettings,
    "limits": LimitsSettings,
    "solver": SolverSettings,
    "sweep": SweepSettings,
    "output": OutputSettings,
}


class RunConfig(_Section):
    environment: EnvironmentSettings = Field(default_factory=EnvironmentSettings)
    scenario: ScenarioSettings = Field(default_factory=ScenarioSettings)
    limits: LimitsSettings = Field(default_factory=LimitsSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    def to_sweep_spec(self) -> SweepSpec:
        scenario = self.scenario.to_scenario_config()
        return SweepSpec(
            kind=self.sweep.kind,
            ratio_grid=tuple(self.sweep.grid) if self.sweep.kind != "timing" else (),
            n_scenarios=self.sweep.scenarios,
            base_config=scenario,
            base_limits=self.limits.to_limits(scenario.n_d),
            solvers=tuple(self.sweep.solvers),
            env=self.environment.to_env(),
            solver_options=self.solver.to_solver_options(),
            repetitions=self.sweep.repetitions,
            workers=self.sweep.workers,
        )


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"])
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def build_config(data: Optional[Dict[str, Any]] = None,
                 overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Merge flag overrides into a file document and validate the result."""
    merged: Dict[str, Any] = {k: dict(v) if isinstance(v, dict) else v for k, v in (data or {}).items()}
    for section, values in (overrides or {}).items():
        target = merged.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        target.update(values)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_describe(e)}") from None


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    return build_config(read_config_file(path) if path else None, overrides)


def _is_list_field(annotation) -> bool:
    return typing.get_origin(annotation) in (list, List)


def _allows_list(annotation) -> bool:
    if _is_list_field(annotation):
        return True
    return any(_is_list_field(arg) for arg in typing.get_args(annotation))


def flag_name(field_name: str) -> str:
    return "--" + field_name.replace("_", "-")


def add_config_flags(parser) -> None:
    """One --field-name flag per settings field; values are validated later by pydantic."""
    for section, model in SECTIONS.items():
        group = parser.add_argument_group(f"{section} settings")
        for name, info in model.model_fields.items():
            default = info.get_default(call_default_factory=True)
            group.add_argument(
                flag_name(name),
                dest=f"{section}.{name}",
                metavar=name.upper(),
                default=None,
                help=f"{section}.{name} (default: {default})",
            )


def overrides_from_args(args) -> Dict[str, Dict[str, Any]]:
    """Collect the flags the user actually set, splitting comma lists."""
    overrides: Dict[str, Dict[str, Any]] = {}
    for section, model in SECTIONS.items():
        for name, info in model.model_fields.items():
            value = getattr(args, f"{section}.{name}", None)
            if value is None:
                continue
            if _is_list_field(info.annotation) or (_allows_list(info.annotation) and "," in value):
                value = [v.strip() for v in value.split(",") if v.strip()]
            overrides.setdefault(section, {})[name] = value
    return overrides
