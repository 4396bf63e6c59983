"""Interaction-kernel derivatives and the cell-integral weight tables.

A :class:`Kernel` represents the derivative ``K'`` of an interaction
potential. The drift felt at the space-cell centre ``x_i`` is assembled from
the cell integrals

    w[i, k] = int_{x_{k-1/2}}^{x_{k+1/2}} K'(x_i - y) dy,

which are precomputed once per mesh. Differences ``x_i - y`` range over
``(-2L, 2L)`` and the kernel is evaluated there as given (no periodisation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .mesh import Mesh


class QuadratureError(RuntimeError):
    pass


_GL4_NODES, _GL4_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Derivative ``K'`` of a pair potential on a space domain ``(-L, L)``.

    Exactly one of ``poly`` (coefficients of ``K'`` in increasing powers) and
    ``func`` (a vectorised callable) describes the kernel.
    """

    L: float
    poly: Optional[Polynomial] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    tol: float = 1e-12
    sup_norm: float = field(default=np.nan)
    sup_norm_extended: float = field(default=np.nan)
    label: str = ""

    def __post_init__(self):
        if (self.poly is None) == (self.func is None):
            raise ValueError("give exactly one of poly or func")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if np.isnan(self.sup_norm):
            object.__setattr__(self, "sup_norm", self._sup(self.L))
        if np.isnan(self.sup_norm_extended):
            object.__setattr__(self, "sup_norm_extended", self._sup(2 * self.L))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.poly is not None:
            return self.poly(x)
        return np.asarray(self.func(x), dtype=np.float64) * np.ones_like(x)

    @property
    def is_polynomial(self) -> bool:
        return self.poly is not None

    def _sup(self, a: float) -> float:
        if self.poly is not None:
            pts = [-a, a]
            if self.poly.degree() >= 2:
                for r in self.poly.deriv().roots():
                    if abs(r.imag) < 1e-12 and -a <= r.real <= a:
                        pts.append(r.real)
            return float(np.max(np.abs(self.poly(np.array(pts)))))
        # sampled bound for generic kernels; the declared value wins when given
        xs = np.linspace(-a, a, 20001)
        return float(np.max(np.abs(self(xs))))


def polynomial_kernel(coefficients, L: float, label: str = "") -> Kernel:
    """Kernel whose derivative is ``sum_k c_k x**k``."""
    return Kernel(L=L, poly=Polynomial(np.asarray(coefficients, dtype=np.float64)), label=label)


def quadratic_kernel(coefficient: float, L: float) -> Kernel:
    """Potential ``coefficient * x**2 / 2``; its derivative is ``coefficient * x``."""
    k = polynomial_kernel([0.0, coefficient], L, label=f"quadratic({coefficient:g})")
    return k


def zero_kernel(L: float) -> Kernel:
    return polynomial_kernel([0.0], L, label="zero")


def callable_kernel(func, L: float, tol: float = 1e-12, sup_norm: float | None = None,
                    sup_norm_extended: float | None = None, label: str = "") -> Kernel:
    return Kernel(
        L=L, func=func, tol=tol,
        sup_norm=np.nan if sup_norm is None else float(sup_norm),
        sup_norm_extended=np.nan if sup_norm_extended is None else float(sup_norm_extended),
        label=label or getattr(func, "__name__", "callable"),
    )


class KernelSet(NamedTuple):
    """The four kernels: ``k11`` and ``k12`` drive species f, ``k22`` and ``k21`` drive g."""

    k11: Kernel
    k12: Kernel
    k21: Kernel
    k22: Kernel

    @property
    def L(self) -> float:
        return self.k11.L

    def check_domain(self):
        Ls = {k.L for k in self}
        if len(Ls) != 1:
            raise ValueError(f"kernels disagree on L: {sorted(Ls)}")


def cw_constant(kernels: KernelSet) -> float:
    """``max(|K'_11| + |K'_12|, |K'_22| + |K'_21|)`` with sup norms over ``(-L, L)``."""
    kernels.check_domain()
    return float(max(kernels.k11.sup_norm + kernels.k12.sup_norm,
                     kernels.k22.sup_norm + kernels.k21.sup_norm))


def drift_bound(kernels: KernelSet, mass_f: float, mass_g: float) -> float:
    """Bound on ``|Upsilon|`` valid for raw kernel evaluation on ``(-2L, 2L)``.

    ``|Upsilon_f| <= sup|K'_11| * mass_f + sup|K'_12| * mass_g`` with sups over
    the full difference range; likewise for g.
    """
    return float(max(
        kernels.k11.sup_norm_extended * mass_f + kernels.k12.sup_norm_extended * mass_g,
        kernels.k22.sup_norm_extended * mass_g + kernels.k21.sup_norm_extended * mass_f,
    ))


def _poly_table(x_centers: np.ndarray, x_interfaces: np.ndarray, poly: Polynomial) -> np.ndarray:
    # int_a^b K'(x - y) dy = P(x - a) - P(x - b) with P' = K'
    P = poly.integ()
    lo = x_interfaces[:-1]
    hi = x_interfaces[1:]
    return P(x_centers[:, None] - lo[None, :]) - P(x_centers[:, None] - hi[None, :])


def _gauss_panels(kernel: Kernel, xc: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                  panels: int) -> np.ndarray:
    width = (hi - lo) / panels
    total = np.zeros((xc.size, lo.size))
    for p in range(panels):
        a = lo + p * width
        mid = a + 0.5 * width
        for node, weight in zip(_GL4_NODES, _GL4_WEIGHTS):
            y = mid + 0.5 * width * node
            total += (0.5 * weight * width)[None, :] * kernel(xc[:, None] - y[None, :])
    return total


def _quadrature_table(x_centers, x_interfaces, kernel: Kernel, max_rounds: int = 12) -> np.ndarray:
    lo = x_interfaces[:-1]
    hi = x_interfaces[1:]
    panels = 1
    prev = _gauss_panels(kernel, x_centers, lo, hi, panels)
    for _ in range(max_rounds):
        panels *= 2
        cur = _gauss_panels(kernel, x_centers, lo, hi, panels)
        diff = np.abs(cur - prev)
        if np.all(diff < kernel.tol):
            return cur
        prev = cur
    i, k = np.unravel_index(np.argmax(diff), diff.shape)
    raise QuadratureError(
        f"weight quadrature did not converge for cell (i={i}, k={k}): "
        f"change {diff[i, k]:.3e} > tol {kernel.tol:.1e} after {panels} panels")


def weight_table(mesh: Mesh, kernel: Kernel, method: str = "auto") -> np.ndarray:
    """``(Nx, Nx)`` array of cell integrals ``int_{C_k} K'(x_i - y) dy``.

    ``method`` is ``"exact"`` (polynomial antiderivative), ``"quadrature"``
    (adaptive composite 4-point Gauss-Legendre) or ``"auto"``.
    """
    if method == "auto":
        method = "exact" if kernel.is_polynomial else "quadrature"
    if method == "exact":
        if not kernel.is_polynomial:
            raise ValueError("exact weights need a polynomial kernel")
        w = _poly_table(mesh.x_centers, mesh.x_interfaces, kernel.poly)
    elif method == "quadrature":
        w = _quadrature_table(mesh.x_centers, mesh.x_interfaces, kernel)
    else:
        raise ValueError(f"unknown method {method!r}")
    w.setflags(write=False)
    return w


class WeightTables(NamedTuple):
    w11: np.ndarray
    w12: np.ndarray
    w21: np.ndarray
    w22: np.ndarray


def weight_tables(mesh: Mesh, kernels: KernelSet) -> WeightTables:
    kernels.check_domain()
    if not np.isclose(kernels.L, mesh.L):
        raise ValueError(f"kernel domain L={kernels.L} does not match mesh L={mesh.L}")
    return WeightTables(*(weight_table(mesh, k) for k in kernels))
