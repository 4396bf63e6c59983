"""Explicit upwind finite volume update and the time loop.

Space is periodic (wrap-around ghost cells), velocity has no-flux walls.
Transport in x is upwinded on the sign of the velocity-cell centre ``v_j``,
transport in v on the sign of the space-cell drift ``Upsilon_i``; a positive
drift moves mass toward lower velocities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .kernels import KernelSet, WeightTables, cw_constant, drift_bound, weight_tables
from .mesh import Mesh
from .state import InteractionField, PhaseState, interaction, macro_density

logger = logging.getLogger(__name__)


class CFLViolation(RuntimeError):
    """The time step breaks the positivity condition at some step."""

    def __init__(self, step: int, report: "CFLReport"):
        self.step = step
        self.report = report
        i, j, sp = report.worst_cell
        super().__init__(
            f"CFL condition violated at step {step}: cell (i={i}, j={j}) of species {sp} "
            f"has CFL number {report.number:.6g} > 1 - xi = {report.limit:.6g}")


def positive_part(a):
    return np.maximum(a, 0.0)


def negative_part(a):
    return np.maximum(-np.asarray(a), 0.0)


def max_stable_dt(mesh: Mesh, C_W: float, xi: float) -> float:
    """``(1 - xi) * alpha * h / (v_h + C_W)``."""
    return (1.0 - xi) * mesh.alpha * mesh.h / (mesh.v_h + C_W)


class CFLReport(NamedTuple):
    ok: bool
    number: float
    limit: float
    worst_cell: tuple[int, int, str]

    def __bool__(self):
        return self.ok


def cfl_numbers(dt: float, mesh: Mesh, ups: np.ndarray) -> np.ndarray:
    """Per-cell ``dt * (|v_j| / dx_i + |Upsilon_i| / dv_j)`` for one species."""
    return dt * (np.abs(mesh.v_centers)[None, :] / mesh.dx[:, None]
                 + np.abs(ups)[:, None] / mesh.dv[None, :])


def cfl_satisfied(dt: float, mesh: Mesh, ups: InteractionField, xi: float) -> CFLReport:
    limit = 1.0 - xi
    best = (-1.0, (0, 0, "f"))
    for name, u in (("f", ups.ups_f), ("g", ups.ups_g)):
        c = cfl_numbers(dt, mesh, u)
        i, j = np.unravel_index(np.argmax(c), c.shape)
        if c[i, j] > best[0]:
            best = (float(c[i, j]), (int(i), int(j), name))
    return CFLReport(best[0] <= limit, best[0], limit, best[1])


# -- single step ---------------------------------------------------------------

def _flux_update(p: np.ndarray, mesh: Mesh, ups: np.ndarray, dt: float) -> np.ndarray:
    vp = positive_part(mesh.v_centers)[None, :]
    vm = negative_part(mesh.v_centers)[None, :]
    up = positive_part(ups)[:, None]
    um = negative_part(ups)[:, None]
    dv = mesh.dv[None, :]
    dx = mesh.dx[:, None]

    # x-fluxes through i+1/2, ghost cell p[Nx] = p[0]
    p_right = np.roll(p, -1, axis=0)
    xF_right = dt * dv * (p * vp - p_right * vm)
    xF_left = np.roll(xF_right, 1, axis=0)

    # v-fluxes through j+1/2; outermost interfaces carry nothing
    vF = np.zeros((mesh.Nx, mesh.Nv + 1))
    vF[:, 1:-1] = dt * dx * (p[:, :-1] * um - p[:, 1:] * up)

    return p - (xF_right - xF_left + vF[:, 1:] - vF[:, :-1]) / (dx * dv)


def step_flux_form(state: PhaseState, mesh: Mesh, ups: InteractionField, dt: float) -> PhaseState:
    """One explicit step written as a difference of interface fluxes."""
    return PhaseState(
        state.n + 1, state.t + dt,
        _flux_update(state.f, mesh, ups.ups_f, dt),
        _flux_update(state.g, mesh, ups.ups_g, dt),
    )


def _convex_update(p: np.ndarray, mesh: Mesh, ups: np.ndarray, dt: float) -> np.ndarray:
    nx, nv = mesh.shape
    lam_x = dt / mesh.dx[:, None]
    lam_v = dt / mesh.dv[None, :]
    vp = positive_part(mesh.v_centers)[None, :]
    vm = negative_part(mesh.v_centers)[None, :]
    up = positive_part(ups)[:, None]
    um = negative_part(ups)[:, None]

    # the wall at the top (bottom) removes the upward (downward) exchange
    has_up = np.ones((1, nv))
    has_up[0, -1] = 0.0
    has_down = np.ones((1, nv))
    has_down[0, 0] = 0.0

    c_centre = 1.0 - lam_x * (vp + vm) - lam_v * (um * has_up + up * has_down)
    c_east = lam_x * vm * np.ones((nx, 1))
    c_west = lam_x * vp * np.ones((nx, 1))
    c_north = lam_v * up * has_up
    c_south = lam_v * um * has_down

    north = np.zeros_like(p)
    north[:, :-1] = p[:, 1:]
    south = np.zeros_like(p)
    south[:, 1:] = p[:, :-1]
    east = np.concatenate([p[1:], p[:1]], axis=0)
    west = np.concatenate([p[-1:], p[:-1]], axis=0)

    return c_centre * p + c_east * east + c_west * west + c_north * north + c_south * south


def step_convex_form(state: PhaseState, mesh: Mesh, ups: InteractionField, dt: float) -> PhaseState:
    """The same step as a nonnegative-weight combination of five neighbours."""
    return PhaseState(
        state.n + 1, state.t + dt,
        _convex_update(state.f, mesh, ups.ups_f, dt),
        _convex_update(state.g, mesh, ups.ups_g, dt),
    )


STEPPERS = {"flux": step_flux_form, "convex": step_convex_form}


# -- time loop -----------------------------------------------------------------

@dataclass
class SchemeParams:
    T: float
    xi: float = 0.1
    cfl_mode: str = "auto"
    dt: float | None = None

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"xi must lie in (0,1), got {self.xi}")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.cfl_mode not in ("auto", "fixed"):
            raise ValueError(f"unknown cfl_mode {self.cfl_mode!r}")
        if self.cfl_mode == "fixed" and not (self.dt is not None and self.dt > 0):
            raise ValueError("fixed cfl_mode needs dt > 0")


def step_count(T: float, dt: float) -> int:
    """Number of steps to reach ``T``; ratios within 1e-9 of an integer round."""
    if T <= 0:
        return 0
    r = T / dt
    n = round(r)
    if abs(r - n) <= 1e-9 * max(1.0, r):
        return int(n)
    return int(math.ceil(r))


@dataclass
class Simulation:
    """A configured run: mesh, kernels, initial state and step control.

    Iterating over :meth:`states` yields the state at every time level,
    starting with the initial one. Interaction terms are recomputed from the
    time-n state before each step.
    """

    mesh: Mesh
    kernels: KernelSet
    initial: PhaseState
    params: SchemeParams
    form: str = "flux"
    check_cfl: bool = True
    weights: WeightTables = field(init=False)

    def __post_init__(self):
        self.weights = weight_tables(self.mesh, self.kernels)
        self.C_W = cw_constant(self.kernels)
        m_f, m_g = self.initial.mass(self.mesh)
        self.drift_bound = drift_bound(self.kernels, m_f, m_g)
        if self.params.cfl_mode == "auto":
            self.dt = max_stable_dt(self.mesh, self.drift_bound, self.params.xi)
        else:
            self.dt = float(self.params.dt)
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        self.n_steps = step_count(self.params.T, self.dt)
        self._step = STEPPERS[self.form]

    def interaction(self, state: PhaseState) -> InteractionField:
        return interaction(self.weights, macro_density(state, self.mesh))

    def step_sizes(self) -> list[float]:
        """``dt`` for every step; the last is shortened to land on ``T``."""
        T, dt = self.params.T, self.dt
        sizes = [dt] * self.n_steps
        if self.n_steps:
            sizes[-1] = T - (self.n_steps - 1) * dt
        return sizes

    def states(self) -> Iterator[PhaseState]:
        state = self.initial
        yield state
        for n, dt in enumerate(self.step_sizes()):
            ups = self.interaction(state)
            if self.check_cfl:
                report = cfl_satisfied(dt, self.mesh, ups, self.params.xi)
                if not report.ok:
                    raise CFLViolation(n, report)
            state = self._step(state, self.mesh, ups, dt)
            if n == self.n_steps - 1:
                # exact final time
                state = PhaseState(state.n, self.params.T, state.f, state.g)
            yield state

    def run(self) -> PhaseState:
        state = self.initial
        for state in self.states():
            pass
        return state


@dataclass
class SimulationResult:
    final: PhaseState
    dt: float
    n_steps: int
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def simulate(sim: Simulation, tail_M: float | None = None, diagnostics_every: int = 1,
             snapshot_every: int = 10, on_snapshot=None, audit=None,
             keep_snapshots: bool = False) -> SimulationResult:
    """Run ``sim`` to its final time collecting diagnostics and snapshots.

    Snapshots (every ``snapshot_every`` steps and at the final step) go to
    ``on_snapshot(state)`` and, if ``keep_snapshots``, into the result. An
    optional ``audit`` (see :class:`~crossfv.diagnostics.InvariantAudit`) sees
    every record and raises on the first failed invariant.
    """
    from .diagnostics import record

    M = 0.5 * sim.mesh.v_h if tail_M is None else tail_M
    result = SimulationResult(sim.initial, sim.dt, sim.n_steps)
    last = sim.n_steps
    try:
        for state in sim.states():
            n = state.n
            if n % diagnostics_every == 0 or n == last:
                rec = record(state, sim.mesh, M)
                result.records.append(rec)
                if audit is not None:
                    audit.check(rec, n)
            if snapshot_every and (n % snapshot_every == 0 or n == last):
                if on_snapshot is not None:
                    on_snapshot(state)
                if keep_snapshots:
                    result.snapshots.append(state)
            result.final = state
    except RuntimeError as exc:
        # CFL aborts and audit failures carry what was computed so far
        exc.partial = result
        raise
    logger.info("simulated %d steps of dt=%.6g to t=%.6g", sim.n_steps, sim.dt, result.final.t)
    return result
