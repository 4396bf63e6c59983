"""Run configuration: strict JSON schema and construction of solver objects."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import KernelSet, polynomial_kernel, quadratic_kernel, zero_kernel
from .mesh import Mesh, build_paper_mesh, build_uniform
from .scheme import SchemeParams
from .state import PhaseState, discretize_initial, paper_sine_initial


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation as ``path: message``."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Domain(_Strict):
    L: float = Field(1.0, gt=0)
    T: float = Field(ge=0)


class UniformMeshSpec(_Strict):
    type: Literal["uniform"]
    Nx: int = Field(ge=1)
    Nv: int = Field(ge=2)
    v_h: float = Field(gt=0)

    @field_validator("Nv")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("Nv must be even so v=0 is an interface")
        return v


class PaperMeshSpec(_Strict):
    type: Literal["paper"]
    level: int = Field(ge=1)
    v_h: float = Field(5.0, gt=0)


class ExplicitMeshSpec(_Strict):
    type: Literal["explicit"]
    x_interfaces: list[float] = Field(min_length=2)
    v_interfaces: list[float] = Field(min_length=2)


MeshSpec = Annotated[Union[UniformMeshSpec, PaperMeshSpec, ExplicitMeshSpec], Field(discriminator="type")]


class TimeStep(_Strict):
    mode: Literal["auto", "fixed"] = "auto"
    xi: float = 0.1
    value: Optional[float] = Field(None, gt=0)

    @field_validator("xi")
    @classmethod
    def _xi(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("xi must lie in (0,1)")
        return v

    @model_validator(mode="after")
    def _fixed_needs_value(self):
        if self.mode == "fixed" and self.value is None:
            raise ValueError("fixed mode needs 'value'")
        return self


class QuadraticKernelSpec(_Strict):
    type: Literal["quadratic"]
    coefficient: float


class ZeroKernelSpec(_Strict):
    type: Literal["zero"]


class PolynomialKernelSpec(_Strict):
    type: Literal["polynomial"]
    coefficients: list[float] = Field(min_length=1)


KernelSpec = Annotated[Union[QuadraticKernelSpec, ZeroKernelSpec, PolynomialKernelSpec],
                       Field(discriminator="type")]


class Kernels(_Strict):
    K11: KernelSpec
    K12: KernelSpec
    K21: KernelSpec
    K22: KernelSpec


class PaperSineInitial(_Strict):
    type: Literal["paper_sine"]
    amplitude: float = Field(99 / 101, ge=0)
    tail_power: float = Field(100.0, gt=1)


class ConstantInitial(_Strict):
    type: Literal["constant"]
    f: float = Field(ge=0)
    g: float = Field(ge=0)


_EXPR_NAMES = {
    "np": np, "pi": math.pi, "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
    "abs": np.abs, "where": np.where, "minimum": np.minimum, "maximum": np.maximum,
}


def compile_expression(text: str):
    code = compile(text, "<initial>", "eval")
    for name in code.co_names:
        if name.startswith("_"):
            raise ValueError(f"name {name!r} is not allowed in expression")
        if name not in _EXPR_NAMES and name not in ("x", "v") and not hasattr(np, name):
            raise ValueError(f"unknown name {name!r} in expression")

    def fn(x, v):
        return eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "x": x, "v": v})

    return fn


class ExpressionInitial(_Strict):
    type: Literal["expression"]
    f: str
    g: str

    @field_validator("f", "g")
    @classmethod
    def _compiles(cls, v):
        try:
            compile_expression(v)
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression: {exc.msg}") from None
        return v


class TableInitial(_Strict):
    type: Literal["table"]
    f: list[list[float]]
    g: list[list[float]]


InitialSpec = Annotated[Union[PaperSineInitial, ConstantInitial, ExpressionInitial, TableInitial],
                        Field(discriminator="type")]


class Output(_Strict):
    directory: str = "out"
    snapshot_every: int = Field(10, ge=0)
    diagnostics_every: int = Field(1, ge=1)
    tail_M: Optional[float] = Field(None, gt=0)
    figures: bool = True


class AuditSpec(_Strict):
    mass_rtol: float = Field(1e-12, gt=0)
    l2_rtol: float = Field(1e-12, gt=0)
    linf_atol: float = Field(1e-13, gt=0)
    envelope_C: float = Field(1.0, gt=0)
    envelope_lambda1: float = Field(2.0, gt=1)
    envelope_lambda2: float = Field(1.0, ge=1)
    envelope_slack: float = Field(10.0, gt=0)


class NoExperiment(_Strict):
    type: Literal["none"]


class TimeEOCSpec(_Strict):
    type: Literal["time_eoc"]
    levels: int = Field(4, ge=2)
    dt0: float = Field(gt=0)
    reference_extra_levels: int = Field(2, ge=1)


class SpaceEOCSpec(_Strict):
    type: Literal["space_eoc"]
    family: Literal["paper_nonequidistant", "equidistant"]
    levels: int = Field(4, ge=2)
    dt: float = Field(gt=0)
    reference_extra_levels: int = Field(2, ge=1)
    dx0: float = Field(1 / 3, gt=0)
    dv0: float = Field(5 / 6, gt=0)


ExperimentSpec = Annotated[Union[NoExperiment, TimeEOCSpec, SpaceEOCSpec], Field(discriminator="type")]


class RunConfig(_Strict):
    domain: Domain
    mesh: MeshSpec
    dt: TimeStep = TimeStep()
    form: Literal["flux", "convex"] = "flux"
    kernels: Kernels
    initial: InitialSpec
    output: Output = Output()
    audit: AuditSpec = AuditSpec()
    experiment: ExperimentSpec = NoExperiment(type="none")

    # convenience accessors
    @property
    def xi(self) -> float:
        return self.dt.xi

    @property
    def snapshot_every(self) -> int:
        return self.output.snapshot_every


def _format_error(err) -> str:
    path = ".".join(str(p) for p in err["loc"]) or "<root>"
    msg = err["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    if err["type"] == "extra_forbidden":
        msg = "unknown key"
    return f"{path}: {msg}"


def parse_config(text: str) -> RunConfig:
    """Validate JSON text; raise :class:`ConfigError` listing all violations."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: not valid JSON ({exc.msg} at line {exc.lineno})"]) from None
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_format_error(e) for e in exc.errors()]) from None


BUNDLED = ("paper_section5", "paper_section5_space_equidistant", "paper_section5_space_paper")


def bundled_config_text(name: str) -> str:
    name = name.removesuffix(".json")
    return resources.files("crossfv").joinpath("data", f"{name}.json").read_text(encoding="utf-8")


def load_config(path: str | Path) -> RunConfig:
    """Parse a config file; a bare bundled name (e.g. ``paper_section5``) also works."""
    p = Path(path)
    if not p.exists() and p.name.removesuffix(".json") in BUNDLED and len(p.parts) == 1:
        return parse_config(bundled_config_text(p.name))
    return parse_config(p.read_text(encoding="utf-8"))


# -- construction --------------------------------------------------------------

def build_mesh(cfg: RunConfig) -> Mesh:
    spec, L = cfg.mesh, cfg.domain.L
    if isinstance(spec, UniformMeshSpec):
        return build_uniform(L, spec.Nx, spec.v_h, spec.Nv)
    if isinstance(spec, PaperMeshSpec):
        return build_paper_mesh(spec.level, L, spec.v_h)
    mesh = Mesh(np.array(spec.x_interfaces), np.array(spec.v_interfaces))
    if not math.isclose(mesh.L, L):
        raise ConfigError([f"mesh.x_interfaces: must span [-L, L] with L={L}"])
    return mesh


def _kernel(spec, L: float):
    if isinstance(spec, QuadraticKernelSpec):
        return quadratic_kernel(spec.coefficient, L)
    if isinstance(spec, ZeroKernelSpec):
        return zero_kernel(L)
    return polynomial_kernel(spec.coefficients, L)


def build_kernels(cfg: RunConfig) -> KernelSet:
    L, k = cfg.domain.L, cfg.kernels
    return KernelSet(_kernel(k.K11, L), _kernel(k.K12, L), _kernel(k.K21, L), _kernel(k.K22, L))


def initial_evaluators(cfg: RunConfig):
    """``(f0, g0)`` evaluators, or ``None`` for tabulated cell values."""
    spec = cfg.initial
    if isinstance(spec, PaperSineInitial):
        return paper_sine_initial(spec.amplitude, spec.tail_power)
    if isinstance(spec, ConstantInitial):
        return (lambda x, v, c=spec.f: np.full(np.broadcast(x, v).shape, c),
                lambda x, v, c=spec.g: np.full(np.broadcast(x, v).shape, c))
    if isinstance(spec, ExpressionInitial):
        return compile_expression(spec.f), compile_expression(spec.g)
    return None


def build_initial(cfg: RunConfig, mesh: Mesh) -> PhaseState:
    ev = initial_evaluators(cfg)
    if ev is not None:
        return discretize_initial(mesh, *ev)
    f = np.array(cfg.initial.f, dtype=np.float64)
    g = np.array(cfg.initial.g, dtype=np.float64)
    errors = [f"initial.{n}: shape {a.shape} does not match mesh {mesh.shape}"
              for n, a in (("f", f), ("g", g)) if a.shape != mesh.shape]
    errors += [f"initial.{n}: entries must be finite and nonnegative"
               for n, a in (("f", f), ("g", g)) if a.shape == mesh.shape
               and not (np.all(np.isfinite(a)) and np.all(a >= 0))]
    if errors:
        raise ConfigError(errors)
    return PhaseState(0, 0.0, f, g)


def build_params(cfg: RunConfig) -> SchemeParams:
    return SchemeParams(T=cfg.domain.T, xi=cfg.dt.xi, cfl_mode=cfg.dt.mode, dt=cfg.dt.value)
