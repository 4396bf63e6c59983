"""Cell-averaged phase-space densities, macroscopic densities and drifts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .kernels import WeightTables
from .mesh import Mesh

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

_GL3_NODES, _GL3_WEIGHTS = np.polynomial.legendre.leggauss(3)


def ordered_sum(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` strictly left to right.

    ``np.sum`` uses pairwise blocking; a running sum pins the order so
    reductions are reproducible independent of array layout.
    """
    a = np.asarray(a)
    if a.shape[axis] == 0:
        return np.sum(a, axis=axis)
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


def total(a: np.ndarray) -> float:
    """Row-major sequential sum of all entries."""
    return float(ordered_sum(np.ravel(a)))


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Cell averages ``f[i, j]``, ``g[i, j]`` at time level ``n``."""

    n: int
    t: float
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.f.shape != self.g.shape or self.f.ndim != 2:
            raise ValueError(f"f and g must be 2-D with equal shape, got {self.f.shape}, {self.g.shape}")

    def species(self):
        return (("f", self.f), ("g", self.g))

    def mass(self, mesh: Mesh) -> tuple[float, float]:
        return total(mesh.cell_areas * self.f), total(mesh.cell_areas * self.g)


class MacroDensity(NamedTuple):
    rho: np.ndarray
    eta: np.ndarray


class InteractionField(NamedTuple):
    """Drift values at the space-cell centres, one per species."""

    ups_f: np.ndarray
    ups_g: np.ndarray


def _cell_average(mesh: Mesh, fn: Evaluator, name: str) -> np.ndarray:
    # tensor 3x3 Gauss-Legendre per cell
    xc, dx = mesh.x_centers, mesh.dx
    vc, dv = mesh.v_centers, mesh.dv
    avg = np.zeros(mesh.shape)
    for a, wa in zip(_GL3_NODES, _GL3_WEIGHTS):
        x = xc + 0.5 * dx * a
        for b, wb in zip(_GL3_NODES, _GL3_WEIGHTS):
            v = vc + 0.5 * dv * b
            X, V = np.meshgrid(x, v, indexing="ij")
            vals = np.asarray(fn(X, V), dtype=np.float64) * np.ones(mesh.shape)
            avg += 0.25 * wa * wb * vals
    bad = ~np.isfinite(avg)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"initial datum {name} is not finite on cell (i={i}, j={j}) "
                         f"centred at ({xc[i]:.6g}, {vc[j]:.6g})")
    avg[(avg < 0) & (avg > -1e-15)] = 0.0
    return avg


def discretize_initial(mesh: Mesh, f0: Evaluator, g0: Evaluator) -> PhaseState:
    """Cell averages of ``f0`` and ``g0`` over the truncated phase space.

    Evaluators take broadcastable arrays ``(x, v)``. Anything outside
    ``(-v_h, v_h)`` is dropped; see :func:`truncated_mass`.
    """
    return PhaseState(0, 0.0, _cell_average(mesh, f0, "f0"), _cell_average(mesh, g0, "g0"))


def truncated_mass(mesh: Mesh, p0: Evaluator) -> float:
    """Mass of ``p0`` with ``|v| > v_h``, i.e. what the velocity cut-off discards."""
    L, lo, hi = mesh.L, mesh.v_interfaces[0], mesh.v_interfaces[-1]

    def fn(v, x):
        return float(p0(np.float64(x), np.float64(v)))

    upper, _ = integrate.dblquad(fn, -L, L, hi, np.inf, epsabs=1e-300, epsrel=1e-10)
    lower, _ = integrate.dblquad(fn, -L, L, -np.inf, lo, epsabs=1e-300, epsrel=1e-10)
    return upper + lower


def macro_density(state: PhaseState, mesh: Mesh) -> MacroDensity:
    """``rho_i = sum_j dv_j f_ij`` (and ``eta`` from g), summed in ascending j."""
    dv = mesh.dv[None, :]
    return MacroDensity(ordered_sum(state.f * dv, axis=1), ordered_sum(state.g * dv, axis=1))


def interaction(weights: WeightTables, md: MacroDensity) -> InteractionField:
    """Discrete drifts ``Upsilon_f`` and ``Upsilon_g`` at the space-cell centres."""
    rho = md.rho[None, :]
    eta = md.eta[None, :]
    ups_f = ordered_sum(rho * weights.w11 + eta * weights.w12, axis=1)
    ups_g = ordered_sum(eta * weights.w22 + rho * weights.w21, axis=1)
    return InteractionField(ups_f, ups_g)


# -- initial data --------------------------------------------------------------

def paper_sine_initial(amplitude: float = 99 / 101, tail_power: float = 100.0):
    """Sinusoidal-in-x data, flat for ``|v| <= 1`` and ``|v|**-tail_power`` beyond.

    Returns ``(f0, g0)``; ``g0`` carries the opposite phase of ``f0``.
    """
    def profile(v):
        av = np.abs(v)
        with np.errstate(divide="ignore", over="ignore"):
            tail = np.where(av <= 1.0, 1.0, np.power(np.maximum(av, 1.0), -tail_power))
        return tail

    def f0(x, v):
        return amplitude * (0.5 + 0.5 * np.sin(math.pi * x)) * profile(v)

    def g0(x, v):
        return amplitude * (0.5 - 0.5 * np.sin(math.pi * x)) * profile(v)

    return f0, g0


def paper_sine_mass(L: float = 1.0, v_h: float = 5.0, amplitude: float = 99 / 101,
                    tail_power: float = 100.0) -> float:
    """Closed-form mass of either species of :func:`paper_sine_initial` on
    ``[-L, L] x [-v_h, v_h]`` with ``L`` an integer number of half-periods."""
    x_part = amplitude * L  # sine integrates to zero over whole periods of length 2
    v_part = 2.0 + 2.0 * (1.0 - v_h ** (1.0 - tail_power)) / (tail_power - 1.0)
    return x_part * v_part


# -- field dump ----------------------------------------------------------------

FIELD_HEADER = ("i", "j", "x_center", "v_center", "dx", "dv", "f", "g")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def field_rows(state: PhaseState, mesh: Mesh):
    """Rows of the snapshot CSV, lexicographic in ``(i, j)``."""
    for i in range(mesh.Nx):
        xs, dxs = fmt(mesh.x_centers[i]), fmt(mesh.dx[i])
        for j in range(mesh.Nv):
            yield (str(i), str(j), xs, fmt(mesh.v_centers[j]), dxs, fmt(mesh.dv[j]),
                   fmt(state.f[i, j]), fmt(state.g[i, j]))


def read_field_csv(path, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    import csv

    f = np.zeros(mesh.shape)
    g = np.zeros(mesh.shape)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != FIELD_HEADER:
            raise ValueError(f"unexpected header {header}")
        for row in reader:
            i, j = int(row[0]), int(row[1])
            f[i, j] = float(row[6])
            g[i, j] = float(row[7])
    return f, g
