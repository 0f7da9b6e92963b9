#!/usr/bin/env python3
"""
Run configuration: INI sections parsed with configparser and validated into
pydantic models. Every violation is collected before anything is reported.
"""

import configparser
import os
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from errors import ConfigFileError, ConfigParseError, ConfigValidationError, GrowCoagError
from experiments import ExperimentPlan, PerturbInitial, Scenario, TailRadii, TruncationLadder
from grid import INTERPOLATION_METHODS, Exponential, InitialFamily, SizeGrid, Tabulated, TruncatedPowerLaw, make_grid, read_tabulated
from growth import GrowthField
from growth import family_from_name as growth_family
from kernels import KernelSpec, default_envelope_constant, natural_beta
from kernels import family_from_name as kernel_family
from solver import DEFAULT_WINDOW_CAP, SolverConfig

SECTIONS = ("kernel", "growth", "grid", "initial", "solver", "experiment", "output")


def _number_list(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    if str(value).strip().lower() in ("", "none"):
        return None
    text = str(value).replace(",", " ").split()
    return [float(x) for x in text]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelSection(Section):
    family: str
    params: List[float] = []
    beta: Optional[float] = Field(default=None, gt=0)
    k_env: Optional[float] = Field(default=None, gt=0)

    @field_validator("params", mode="before")
    @classmethod
    def _split(cls, value):
        return _number_list(value) or []


class GrowthSection(Section):
    family: str = "zero"
    params: List[float] = []
    A: float = Field(default=1.0, gt=0)
    B: float = Field(default=1.0, gt=0)

    @field_validator("params", mode="before")
    @classmethod
    def _split(cls, value):
        return _number_list(value) or []


class GridSection(Section):
    vmin: float = Field(default=1e-4, gt=0)
    vmax: float = Field(default=1e2, gt=0)
    cells: int = Field(default=256, ge=8)


class InitialSection(Section):
    family: str = "exponential"
    scale: float = Field(default=1.0, gt=0)
    amplitude: float = Field(default=1.0, ge=0)
    exponent: float = 0.0
    lower: float = Field(default=0.0, ge=0)
    upper: float = Field(default=1.0, gt=0)
    path: Optional[str] = None


class SolverSection(Section):
    n: int = Field(default=50, ge=2)
    T_final: float = Field(default=1.0, gt=0)
    substeps_per_window: int = Field(default=8, ge=4)
    picard_tol: float = Field(default=1e-10, gt=0)
    picard_max_iters: int = Field(default=60, ge=1)
    window_cap: Optional[float] = Field(default=DEFAULT_WINDOW_CAP, gt=0)
    truncate_initial: bool = True
    interpolation: str = "pchip"
    output_times: Optional[List[float]] = None
    cache_dir: Optional[str] = None

    @field_validator("output_times", "window_cap", "cache_dir", mode="before")
    @classmethod
    def _none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @field_validator("output_times", mode="before")
    @classmethod
    def _split(cls, value):
        return _number_list(value)

    @field_validator("interpolation")
    @classmethod
    def _method(cls, value):
        if value not in INTERPOLATION_METHODS:
            raise ValueError(f"interpolation must be one of {INTERPOLATION_METHODS}")
        return value


class ExperimentSection(Section):
    amplitudes: List[float] = [1e-1, 1e-2, 1e-3]
    direction_scale: float = Field(default=0.5, gt=0)
    ns: List[int] = [4, 8, 16, 32]
    radii: List[float] = [1.0, 5.0, 25.0]
    tail_ns: Optional[List[int]] = None
    workers: int = Field(default=4, ge=1)

    @field_validator("amplitudes", "radii", mode="before")
    @classmethod
    def _floats(cls, value):
        return _number_list(value)

    @field_validator("ns", "tail_ns", mode="before")
    @classmethod
    def _ints(cls, value):
        values = _number_list(value)
        if values is not None and any(int(v) != v for v in values):
            raise ValueError("ns must be integers")
        return [int(v) for v in values] if values is not None else values


class OutputSection(Section):
    directory: str = "out"
    verification_mode: bool = False


class RunConfig(BaseModel):
    kernel: KernelSection
    growth: GrowthSection = GrowthSection()
    grid: GridSection = GridSection()
    initial: InitialSection = InitialSection()
    solver: SolverSection = SolverSection()
    experiment: Optional[ExperimentSection] = None
    output: OutputSection = OutputSection()
    source: Dict[str, Dict[str, str]] = {}

    @property
    def verification_mode(self) -> bool:
        return self.output.verification_mode

    def kernel_spec(self) -> KernelSpec:
        family = kernel_family(self.kernel.family, self.kernel.params)
        beta = self.kernel.beta if self.kernel.beta is not None else natural_beta(family)
        k_env = self.kernel.k_env if self.kernel.k_env is not None else default_envelope_constant(family, beta)
        return KernelSpec(family, beta, k_env)

    def growth_field(self) -> GrowthField:
        return GrowthField(growth_family(self.growth.family, self.growth.params), self.growth.A, self.growth.B)

    def size_grid(self) -> SizeGrid:
        return make_grid(self.grid.vmin, self.grid.vmax, self.grid.cells)

    def initial_family(self) -> InitialFamily:
        section = self.initial
        key = section.family.strip().lower().replace("-", "_")
        if key == "exponential":
            return Exponential(section.scale, section.amplitude)
        if key == "power_law":
            return TruncatedPowerLaw(section.exponent, section.lower, section.upper, section.amplitude)
        return Tabulated(section.path)

    def solver_config(self, **overrides) -> SolverConfig:
        values = self.solver.model_dump()
        values["verification_mode"] = self.verification_mode
        values.update(overrides)
        return SolverConfig(**values)

    def scenario(self) -> Scenario:
        return Scenario(self.kernel_spec(), self.growth_field(), self.size_grid(), self.initial_family(),
                        self.solver_config())

    def plan(self, variation: str, out_dir: Optional[str] = None) -> ExperimentPlan:
        experiment = self.experiment or ExperimentSection()
        if variation == "depend":
            chosen = PerturbInitial(tuple(experiment.amplitudes), Exponential(scale=experiment.direction_scale))
        elif variation == "converge":
            chosen = TruncationLadder(tuple(experiment.ns))
        else:
            chosen = TailRadii(tuple(experiment.radii), tuple(experiment.tail_ns) if experiment.tail_ns else None)
        workers = 1 if self.verification_mode else experiment.workers
        return ExperimentPlan(self.scenario(), chosen, out_dir, workers)


def _format_errors(section: str, error: ValidationError) -> List[str]:
    messages = []
    for item in error.errors():
        where = ".".join(str(x) for x in item["loc"])
        messages.append(f"[{section}] {where}: {item['msg']}")
    return messages


def _cross_checks(config: RunConfig) -> List[str]:
    violations = []
    n = config.solver.n
    if config.grid.vmax <= config.grid.vmin:
        violations.append(f"[grid] vmax ({config.grid.vmax:g}) must exceed vmin ({config.grid.vmin:g})")
    if 1.0 / n < config.grid.vmin or n > config.grid.vmax:
        violations.append(f"containment rule: truncation window [1/{n}, {n}] must lie inside the grid "
                          f"[{config.grid.vmin:g}, {config.grid.vmax:g}]")

    spec = None
    if config.kernel is not None:
        try:
            spec = config.kernel_spec()
        except GrowCoagError as e:
            violations.append(f"[kernel] {e}")
    try:
        config.growth_field()
    except GrowCoagError as e:
        violations.append(f"[growth] {e}")

    family = config.initial.family.strip().lower().replace("-", "_")
    if family not in ("exponential", "power_law", "tabulated"):
        violations.append(f"[initial] unknown family {config.initial.family!r}; "
                          "choose from ['exponential', 'power_law', 'tabulated']")
    elif family == "tabulated":
        if not config.initial.path:
            violations.append("[initial] tabulated data needs a path")
        else:
            try:
                read_tabulated(config.initial.path)
            except GrowCoagError as e:
                violations.append(f"[initial] {e}")

    if spec is not None:
        beta = spec.beta
        # int_0^1 v^{-2 beta} c0 dv is finite for data bounded at 0 iff 2 beta < 1
        if family == "exponential" and 2.0 * beta >= 1.0:
            violations.append(f"[initial] M_-2beta diverges at 0 for exponential data: need 2*beta < 1, got beta={beta:g}")
        if family == "power_law" and config.initial.lower == 0 and config.initial.exponent - 2.0 * beta <= -1.0:
            violations.append("[initial] M_-2beta diverges at 0: exponent - 2*beta must exceed -1")
    if family == "power_law" and config.initial.upper <= config.initial.lower:
        violations.append("[initial] power-law upper must exceed lower")

    if config.experiment is not None:
        exp = config.experiment
        if any(x >= y for x, y in zip(exp.ns, exp.ns[1:])) or len(exp.ns) < 2:
            violations.append("[experiment] ns must hold at least two increasing values")
        if any(m > config.grid.vmax or 1.0 / m < config.grid.vmin for m in exp.ns):
            violations.append("[experiment] every n in ns must satisfy the containment rule")
        if exp.tail_ns and any(m > config.grid.vmax or 1.0 / m < config.grid.vmin for m in exp.tail_ns):
            violations.append("[experiment] every n in tail_ns must satisfy the containment rule")
        if any(x >= y for x, y in zip(exp.radii, exp.radii[1:])):
            violations.append("[experiment] radii must be increasing")
        if exp.radii and (exp.radii[0] < config.grid.vmin or exp.radii[-1] > config.grid.vmax):
            violations.append("[experiment] radii must lie inside the grid")
        diffs = [y - x for x, y in zip(exp.amplitudes, exp.amplitudes[1:])]
        if not exp.amplitudes or not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
            violations.append("[experiment] amplitudes must be strictly monotone")
    return violations


def validate_run_config(raw: Dict[str, Dict[str, str]]) -> RunConfig:
    """RunConfig from raw section dicts, or ConfigValidationError listing every violation"""
    violations: List[str] = []
    sections = {}
    unknown = sorted(set(raw) - set(SECTIONS))
    violations += [f"unknown section [{name}]" for name in unknown]
    if "kernel" not in raw:
        violations.append("missing required section [kernel]")

    models = {"kernel": KernelSection, "growth": GrowthSection, "grid": GridSection, "initial": InitialSection,
              "solver": SolverSection, "experiment": ExperimentSection, "output": OutputSection}
    for name, model in models.items():
        if name not in raw:
            continue
        try:
            sections[name] = model(**raw[name])
        except ValidationError as e:
            violations += _format_errors(name, e)
            # cross-checks below still run, against the defaults
            if name != "kernel":
                sections[name] = model()

    if violations:
        partial = RunConfig.model_construct(**{**sections, "kernel": sections.get("kernel"), "source": raw})
        raise ConfigValidationError(violations + _cross_checks(partial))
    config = RunConfig(**sections, source=raw)
    violations = _cross_checks(config)
    if violations:
        raise ConfigValidationError(violations)
    return config


def parse_config(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigFileError(f"configuration file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except (configparser.Error, UnicodeDecodeError) as e:
        raise ConfigParseError(f"{path}: {e}") from e
    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    if "initial" in raw and raw["initial"].get("path") and not os.path.isabs(raw["initial"]["path"]):
        raw["initial"]["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), raw["initial"]["path"])
    return validate_run_config(raw)
