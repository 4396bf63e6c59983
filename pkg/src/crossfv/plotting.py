"""Figures written next to the CSV output.

Uses the object-oriented matplotlib API with an Agg canvas so nothing touches
the global pyplot state or needs a display.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .diagnostics import DiagnosticsRecord
from .eoc import ErrorReport
from .mesh import Mesh
from .state import PhaseState

FIG_WIDTH = 7.0
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _new_figure(ncols: int = 1, nrows: int = 1, width: float = FIG_WIDTH, height=None):
    if height is None:
        height = width * GOLDEN * nrows / max(ncols, 1) * (1.3 if ncols > 1 else 1.0)
    fig = Figure(figsize=(width, height), layout="constrained")
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, dpi=150, format=path.suffix.lstrip(".") or "png", metadata={"Software": None})
    tmp.replace(path)
    return path


def _slope_triangle(ax, x, y, order: float, label: str):
    # anchored below the last two data points
    x0, x1 = x[-2], x[-1]
    y1 = y[-1] * 0.6
    y0 = y1 * (x0 / x1) ** order
    ax.plot([x1, x0, x0, x1], [y1, y1, y0, y1], color="0.4", lw=0.9)
    ax.annotate(label, (x0, np.sqrt(y0 * y1)), xytext=(4, 0), textcoords="offset points",
                fontsize=8, color="0.3", va="center")


def plot_eoc(report: ErrorReport, path) -> Path:
    """Log-log errors against the refined quantity with reference slopes."""
    step = report.column("dt") if report.kind == "time" else report.column("h")
    step = np.asarray(step, dtype=float)
    err1 = np.asarray(report.column("err1"))
    err2 = np.asarray(report.column("err2"))
    fig, axes = _new_figure()
    ax = axes[0, 0]
    ax.loglog(step, err1, "o-", color="#1f4e79", label=r"$L^1(Q_T)$ error")
    ax.loglog(step, err2, "s-", color="#c0504d", label=r"squared $L^2(Q_T)$ error")
    if len(step) >= 2:
        if report.kind == "time":
            _slope_triangle(ax, step, err1, 1.0, "1")
            _slope_triangle(ax, step, err2, 2.0, "2")
        else:
            _slope_triangle(ax, step, err2, 1.0, "1")
    ax.set_xlabel(r"$\Delta t$" if report.kind == "time" else r"$h$")
    ax.set_ylabel("error")
    ax.grid(True, which="both", lw=0.3, alpha=0.6)
    ax.legend(frameon=False, fontsize=9)
    title = "time refinement" if report.kind == "time" else \
        f"phase-space refinement ({report.metadata.get('mesh_family', '')})"
    ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_diagnostics(records: list[DiagnosticsRecord], path) -> Path:
    """Mass drift, minimum, squared L2 norm and sup norm over time."""
    t = np.array([r.t for r in records])
    fig, axes = _new_figure(2, 2, height=FIG_WIDTH * 0.7)
    panels = [
        ("relative mass drift", lambda r, s: getattr(r, f"mass_{s}")),
        ("minimum", lambda r, s: getattr(r, f"min_{s}")),
        (r"squared $L^2$ norm", lambda r, s: getattr(r, f"l2sq_{s}")),
        (r"$L^\infty$ norm", lambda r, s: getattr(r, f"linf_{s}")),
    ]
    for ax, (title, get) in zip(axes.flat, panels):
        for sp, color in (("f", "#1f4e79"), ("g", "#c0504d")):
            y = np.array([get(r, sp) for r in records])
            if title.startswith("relative"):
                y = (y - y[0]) / y[0] if y[0] else y - y[0]
            ax.plot(t, y, color=color, lw=1.2, label=sp)
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("t", fontsize=8)
        ax.tick_params(labelsize=7)
    axes[0, 0].legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_phase_state(state: PhaseState, mesh: Mesh, path) -> Path:
    """Both densities over phase space on the true (possibly non-uniform) cells."""
    fig, axes = _new_figure(2, 1, height=FIG_WIDTH * 0.42)
    for ax, (name, p) in zip(axes.flat, state.species()):
        im = ax.pcolormesh(mesh.x_interfaces, mesh.v_interfaces, p.T, shading="flat", cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title(f"{name}  (t = {state.t:.4g})", fontsize=9)
        ax.set_xlabel("x", fontsize=8)
        ax.set_ylabel("v", fontsize=8)
        ax.tick_params(labelsize=7)
    return _save(fig, path)
