"""Admissible phase-space meshes and their refinement hierarchies.

A mesh is the tensor product of a partition of the periodic space interval
``[-L, L]`` and a partition of the truncated velocity interval ``[-v_h, v_h]``.
Both partitions are stored as explicit interface arrays so that piecewise
uniform meshes and bisection refinement go through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh cannot be constructed from the given parameters."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tensor-product mesh of cells ``(x_{i-1/2}, x_{i+1/2}) x (v_{j-1/2}, v_{j+1/2})``."""

    x_interfaces: np.ndarray
    v_interfaces: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x_interfaces)
        v = _frozen(self.v_interfaces)
        for name, arr in (("x", x), ("v", v)):
            if arr.ndim != 1 or arr.size < 2:
                raise MeshError(f"{name} interfaces need at least two points")
            if not np.all(np.isfinite(arr)):
                raise MeshError(f"{name} interfaces must be finite")
            if not np.all(np.diff(arr) > 0):
                raise MeshError(f"{name} interfaces must be strictly increasing")
        if not np.isclose(x[0], -x[-1], rtol=0.0, atol=1e-14 * abs(x[-1])):
            raise MeshError("x domain must be symmetric, [-L, L]")
        object.__setattr__(self, "x_interfaces", x)
        object.__setattr__(self, "v_interfaces", v)

    @property
    def Nx(self) -> int:
        return self.x_interfaces.size - 1

    @property
    def Nv(self) -> int:
        return self.v_interfaces.size - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Nv)

    @property
    def L(self) -> float:
        return float(self.x_interfaces[-1])

    @property
    def v_h(self) -> float:
        """Velocity cut-off: largest interface magnitude."""
        return float(max(-self.v_interfaces[0], self.v_interfaces[-1]))

    @cached_property
    def dx(self) -> np.ndarray:
        return _frozen(np.diff(self.x_interfaces))

    @cached_property
    def dv(self) -> np.ndarray:
        return _frozen(np.diff(self.v_interfaces))

    @cached_property
    def x_centers(self) -> np.ndarray:
        return _frozen(0.5 * (self.x_interfaces[:-1] + self.x_interfaces[1:]))

    @cached_property
    def v_centers(self) -> np.ndarray:
        return _frozen(0.5 * (self.v_interfaces[:-1] + self.v_interfaces[1:]))

    @cached_property
    def cell_areas(self) -> np.ndarray:
        """``|C_ij| = dx_i * dv_j`` as an ``(Nx, Nv)`` array."""
        return _frozen(np.outer(self.dx, self.dv))

    @cached_property
    def h(self) -> float:
        return float(max(self.dx.max(), self.dv.max()))

    @cached_property
    def alpha(self) -> float:
        return float(min(self.dx.min(), self.dv.min()) / self.h)

    @property
    def alpha_h(self) -> float:
        return self.alpha * self.h

    @property
    def measure(self) -> float:
        return float((self.x_interfaces[-1] - self.x_interfaces[0])
                     * (self.v_interfaces[-1] - self.v_interfaces[0]))

    def summary(self) -> dict[str, float]:
        return {
            "Nx": self.Nx,
            "Nv": self.Nv,
            "L": self.L,
            "v_h": self.v_h,
            "h": self.h,
            "alpha": self.alpha,
            "alpha_h": self.alpha_h,
        }

    def __repr__(self):
        return (f"Mesh(Nx={self.Nx}, Nv={self.Nv}, L={self.L:g}, v_h={self.v_h:g}, "
                f"h={self.h:.4g}, alpha={self.alpha:.4g})")


def _uniform_interfaces(a: float, b: float, n: int) -> np.ndarray:
    pts = np.linspace(a, b, n + 1)
    pts[0], pts[-1] = a, b
    return pts


def build_uniform(L: float, Nx: int, v_max: float, Nv: int) -> Mesh:
    """Equidistant mesh on ``[-L, L] x [-v_max, v_max]``.

    ``Nv`` must be even so that ``v = 0`` is an interface.
    """
    if int(Nx) != Nx or int(Nv) != Nv:
        raise MeshError("cell counts must be integers")
    if Nx < 1 or Nv < 1:
        raise MeshError(f"cell counts must be positive, got Nx={Nx}, Nv={Nv}")
    if Nv % 2:
        raise MeshError(f"Nv must be even so v=0 is an interface, got {Nv}")
    if not (L > 0 and v_max > 0):
        raise MeshError("L and v_max must be positive")
    return Mesh(_uniform_interfaces(-L, L, int(Nx)), _uniform_interfaces(-v_max, v_max, int(Nv)))


def _cell_count(length: Fraction, width: Fraction, segment: str) -> int:
    q = length / width
    if q.denominator != 1:
        raise MeshError(f"{segment} segment of length {float(length)} is not tiled by "
                        f"cells of width {float(width)} ({float(q)} cells)")
    return int(q)


def build_paper_velocity_mesh(level: int, v_h: float) -> np.ndarray:
    """Piecewise uniform velocity interfaces on ``[-v_h, v_h]``.

    The inner segment ``(-v_h/4, v_h/4)`` uses width ``2**(-level-1)``, the two
    outer segments use ``15 / 2**(level+1)``. Returns the interface array.
    """
    if level < 1:
        raise MeshError(f"level must be >= 1, got {level}")
    if not v_h > 0:
        raise MeshError("v_h must be positive")
    vh = Fraction(v_h)
    inner_w = Fraction(1, 2 ** (level + 1))
    outer_w = Fraction(15, 2 ** (level + 1))
    n_in = _cell_count(vh / 2, inner_w, "inner")
    n_out = _cell_count(3 * vh / 4, outer_w, "outer")

    q = vh / 4
    pts = [-vh + k * outer_w for k in range(n_out)]
    pts += [-q + k * inner_w for k in range(n_in)]
    pts += [q + k * outer_w for k in range(n_out + 1)]
    return np.array([float(p) for p in pts])


def build_paper_mesh(level: int, L: float = 1.0, v_h: float = 5.0) -> Mesh:
    """Level-``level`` phase-space mesh: uniform ``dx = 2**(1-level)/3`` in space
    composed with :func:`build_paper_velocity_mesh`."""
    if level < 1:
        raise MeshError(f"level must be >= 1, got {level}")
    nx = _cell_count(2 * Fraction(L), Fraction(2, 3 * 2 ** level), "space")
    # generate by bisection from the coarsest tiling level so levels nest bit-exactly
    k = 0
    while k < level - 1 and nx % 2 == 0:
        nx //= 2
        k += 1
    x = _uniform_interfaces(-L, L, nx)
    for _ in range(k):
        x = _bisect_interfaces(x)
    return Mesh(x, build_paper_velocity_mesh(level, v_h))


def _bisect_interfaces(pts: np.ndarray) -> np.ndarray:
    out = np.empty(2 * pts.size - 1)
    out[0::2] = pts
    out[1::2] = 0.5 * (pts[:-1] + pts[1:])
    return out


def bisect(mesh: Mesh, directions: str = "xv") -> Mesh:
    """Split every cell at its midpoint in each of the given directions."""
    x = _bisect_interfaces(mesh.x_interfaces) if "x" in directions else mesh.x_interfaces
    v = _bisect_interfaces(mesh.v_interfaces) if "v" in directions else mesh.v_interfaces
    return Mesh(x, v)


def refine(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh = bisect(mesh)
    return mesh


def is_nested(coarse: np.ndarray, fine: np.ndarray, rtol: float = 1e-12) -> int | None:
    """Return ``None`` if every coarse interface is a fine interface, else the
    index of the first coarse interface without a match."""
    scale = max(abs(fine[0]), abs(fine[-1]), 1.0)
    pos = np.searchsorted(fine, coarse)
    for k, (c, p) in enumerate(zip(coarse, pos)):
        near = [fine[q] for q in (p - 1, p) if 0 <= q < fine.size]
        if not any(abs(c - f) <= rtol * scale for f in near):
            return k
    return None
