"""Refinement studies: space-time error norms against a fine reference run and
experimental orders of convergence.

Runs are advanced in lock-step with the reference so only one state per run
is held in memory. In time studies the reference is sampled at the coarse
run's time nodes; in phase-space studies the reference is projected onto each
coarse mesh by cell averaging.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .kernels import KernelSet
from .mesh import Mesh, MeshError, bisect, build_paper_mesh, build_uniform, is_nested
from .scheme import SchemeParams, Simulation
from .state import discretize_initial, fmt, total

logger = logging.getLogger(__name__)

TIME_ALIGNMENT = "reference sampled at coarse time nodes, piecewise constant on [t^n, t^n+1)"
SPACE_ALIGNMENT = "reference projected onto coarse cells by measure-weighted averaging"


def _child_slices(coarse: np.ndarray, fine: np.ndarray, axis: str) -> np.ndarray:
    bad = is_nested(coarse, fine)
    if bad is not None:
        raise MeshError(f"meshes are not nested: coarse {axis}-interface {bad} "
                        f"at {coarse[bad]!r} is not a fine interface")
    fine_centres = 0.5 * (fine[:-1] + fine[1:])
    owner = np.searchsorted(coarse, fine_centres) - 1
    return np.searchsorted(owner, np.arange(coarse.size - 1))


def restrict(fine_field: np.ndarray, fine_mesh: Mesh, coarse_mesh: Mesh) -> np.ndarray:
    """Measure-weighted average of fine cells over each coarse cell.

    This is the L2 projection onto piecewise constants of the coarse mesh.
    """
    if (np.array_equal(fine_mesh.x_interfaces, coarse_mesh.x_interfaces)
            and np.array_equal(fine_mesh.v_interfaces, coarse_mesh.v_interfaces)):
        return np.array(fine_field, dtype=np.float64, copy=True)
    sx = _child_slices(coarse_mesh.x_interfaces, fine_mesh.x_interfaces, "x")
    sv = _child_slices(coarse_mesh.v_interfaces, fine_mesh.v_interfaces, "v")
    weighted = fine_field * fine_mesh.cell_areas
    summed = np.add.reduceat(np.add.reduceat(weighted, sx, axis=0), sv, axis=1)
    return summed / coarse_mesh.cell_areas


@dataclass
class ErrorAccumulator:
    """Running ``(L1, squared L2)`` space-time errors on one mesh."""

    mesh: Mesh
    err1: float = 0.0
    err2: float = 0.0

    def add(self, dt: float, a, b):
        """Accumulate one time slab; ``a`` and ``b`` are ``(f, g)`` pairs."""
        areas = self.mesh.cell_areas
        if a[0].shape != self.mesh.shape or b[0].shape != self.mesh.shape:
            raise ValueError(f"field shape does not match the norm mesh {self.mesh.shape}")
        df = a[0] - b[0]
        dg = a[1] - b[1]
        self.err1 += dt * total(areas * (np.abs(df) + np.abs(dg)))
        self.err2 += dt * total(areas * (df * df + dg * dg))


def error_norms(run_a: Iterable, run_b: Iterable, norm_mesh: Mesh,
                norm_dt: Sequence[float]) -> tuple[float, float]:
    """Space-time ``L1`` and squared ``L2`` distance of two sampled trajectories.

    ``run_a`` and ``run_b`` yield ``(f, g)`` pairs (or states) on ``norm_mesh``
    at the time nodes ``t^0 .. t^{N-1}``; ``norm_dt[n]`` is the length of slab n.
    """
    acc = ErrorAccumulator(norm_mesh)
    count = 0
    for dt, a, b in zip(norm_dt, run_a, run_b):
        acc.add(dt, _pair(a), _pair(b))
        count += 1
    if count != len(norm_dt):
        raise ValueError(f"trajectories cover {count} slabs, expected {len(norm_dt)}")
    return acc.err1, acc.err2


def _pair(s):
    return (s.f, s.g) if hasattr(s, "f") else s


def eoc(errors: Sequence[float], steps: Sequence[float]) -> list[float | None]:
    """Experimental orders ``log(e_{l-1}/e_l) / log(s_{l-1}/s_l)``; the first
    entry, and any involving a non-positive error, is ``None``."""
    if len(errors) != len(steps) or len(errors) < 2:
        raise ValueError("need equally many errors and steps, at least two")
    for a, b in zip(steps, steps[1:]):
        if not (b < a):
            raise ValueError("step sizes must be strictly decreasing")
    out: list[float | None] = [None]
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 > 0 and e1 > 0:
            out.append((math.log(e0) - math.log(e1)) / (math.log(steps[k - 1]) - math.log(steps[k])))
        else:
            out.append(None)
    return out


@dataclass
class LevelRow:
    level: int
    xv_cells: int
    txv_cells: int
    dt: float
    alpha_h: float
    h: float
    err1: float
    err2: float
    eoc1: float | None = None
    eoc2: float | None = None


EOC_HEADER = ("level", "xv_cells", "txv_cells", "dt", "alpha_h", "h", "err1", "eoc1", "err2", "eoc2")


@dataclass
class ErrorReport:
    kind: str
    rows: list[LevelRow]
    metadata: dict = field(default_factory=dict)

    def csv_rows(self):
        for r in self.rows:
            yield (str(r.level), str(r.xv_cells), str(r.txv_cells), fmt(r.dt), fmt(r.alpha_h),
                   fmt(r.h), fmt(r.err1), "" if r.eoc1 is None else fmt(r.eoc1),
                   fmt(r.err2), "" if r.eoc2 is None else fmt(r.eoc2))

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


def _fill_eoc(rows: list[LevelRow], steps: list[float]):
    if len(rows) < 2:
        return
    for name in ("err1", "err2"):
        orders = eoc([getattr(r, name) for r in rows], steps)
        for r, o in zip(rows, orders):
            setattr(r, "eoc" + name[-1], o)


@dataclass
class Setup:
    """Everything of a run except mesh and time step."""

    kernels: KernelSet
    f0: Callable
    g0: Callable
    T: float
    xi: float = 0.1
    form: str = "flux"

    def simulation(self, mesh: Mesh, dt: float) -> Simulation:
        initial = discretize_initial(mesh, self.f0, self.g0)
        params = SchemeParams(T=self.T, xi=self.xi, cfl_mode="fixed", dt=dt)
        return Simulation(mesh, self.kernels, initial, params, form=self.form)


class _Stepper:
    """Pulls states from several runs, in parallel when a pool is given."""

    def __init__(self, threads: int):
        self.pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def advance(self, iterators):
        if self.pool is None or len(iterators) < 2:
            return [next(it) for it in iterators]
        return list(self.pool.map(next, iterators))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def run_time_eoc(setup: Setup, mesh: Mesh, dt0: float, levels: int,
                 reference_extra_levels: int = 2, threads: int = 1) -> ErrorReport:
    """Halve ``dt`` per level on a fixed mesh; compare against a run
    ``reference_extra_levels`` halvings finer than the last level."""
    if levels < 1 or reference_extra_levels < 1:
        raise ValueError("need levels >= 1 and reference_extra_levels >= 1")
    dts = [dt0 / 2 ** k for k in range(levels)]
    ref_power = levels - 1 + reference_extra_levels
    ref = setup.simulation(mesh, dt0 / 2 ** ref_power)
    sims = [setup.simulation(mesh, dt) for dt in dts]
    ratios = [2 ** (ref_power - k) for k in range(levels)]
    sizes = [s.step_sizes() for s in sims]
    accs = [ErrorAccumulator(mesh) for _ in sims]
    iters = [s.states() for s in sims]
    stepper = _Stepper(threads)
    try:
        for m, ref_state in enumerate(ref.states()):
            due = [k for k in range(levels) if m % ratios[k] == 0 and m // ratios[k] < sims[k].n_steps]
            states = stepper.advance([iters[k] for k in due])
            for k, st in zip(due, states):
                n = m // ratios[k]
                assert st.n == n
                accs[k].add(sizes[k][n], (ref_state.f, ref_state.g), (st.f, st.g))
    finally:
        stepper.close()

    rows = [LevelRow(k + 1, mesh.Nx * mesh.Nv, mesh.Nx * mesh.Nv * sims[k].n_steps, dts[k],
                     mesh.alpha_h, mesh.h, accs[k].err1, accs[k].err2) for k in range(levels)]
    _fill_eoc(rows, dts)
    meta = {
        "experiment": "time_eoc",
        "reference_dt": ref.dt,
        "reference_level": levels + reference_extra_levels,
        "time_alignment": TIME_ALIGNMENT,
        "T": setup.T,
    }
    return ErrorReport("time", rows, meta)


def family_base_mesh(family: str, L: float = 1.0, v_h: float = 5.0,
                     dx0: float = 1 / 3, dv0: float = 5 / 6) -> Mesh:
    """Level-1 mesh of a refinement family."""
    if family == "paper_nonequidistant":
        return build_paper_mesh(1, L, v_h)
    if family == "equidistant":
        nx = round(2 * L / dx0)
        nv = round(2 * v_h / dv0)
        if not (math.isclose(nx * dx0, 2 * L) and math.isclose(nv * dv0, 2 * v_h)):
            raise MeshError(f"widths dx0={dx0}, dv0={dv0} do not tile the domain")
        return build_uniform(L, nx, v_h, nv)
    raise ValueError(f"unknown mesh family {family!r}")


def run_space_eoc(setup: Setup, base_mesh: Mesh, dt: float, levels: int,
                  reference_extra_levels: int = 2, mesh_family: str = "",
                  threads: int = 1) -> ErrorReport:
    """Bisect ``base_mesh`` per level at fixed ``dt``; compare against a run
    ``reference_extra_levels`` bisections finer than the last level."""
    if levels < 1 or reference_extra_levels < 1:
        raise ValueError("need levels >= 1 and reference_extra_levels >= 1")
    meshes = [base_mesh]
    for _ in range(levels - 1 + reference_extra_levels):
        meshes.append(bisect(meshes[-1]))
    ref_mesh = meshes[-1]
    level_meshes = meshes[:levels]

    ref = setup.simulation(ref_mesh, dt)
    sims = [setup.simulation(m, dt) for m in level_meshes]
    sizes = ref.step_sizes()
    accs = [ErrorAccumulator(m) for m in level_meshes]
    iters = [s.states() for s in sims]
    stepper = _Stepper(threads)
    try:
        for n, ref_state in enumerate(ref.states()):
            if n == ref.n_steps:
                break
            states = stepper.advance(iters)
            for m, acc, st in zip(level_meshes, accs, states):
                rf = restrict(ref_state.f, ref_mesh, m)
                rg = restrict(ref_state.g, ref_mesh, m)
                acc.add(sizes[n], (rf, rg), (st.f, st.g))
    finally:
        stepper.close()

    rows = [LevelRow(k + 1, m.Nx * m.Nv, m.Nx * m.Nv * ref.n_steps, dt, m.alpha_h, m.h,
                     accs[k].err1, accs[k].err2) for k, m in enumerate(level_meshes)]
    _fill_eoc(rows, [m.h for m in level_meshes])
    meta = {
        "experiment": "space_eoc",
        "mesh_family": mesh_family,
        "reference_level": levels + reference_extra_levels,
        "reference_cells": ref_mesh.Nx * ref_mesh.Nv,
        "space_alignment": SPACE_ALIGNMENT,
        "T": setup.T,
    }
    return ErrorReport("space", rows, meta)
