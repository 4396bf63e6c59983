"""Structure-preservation monitors: mass, positivity, norms, tails."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Callable, NamedTuple

import numpy as np

from .mesh import Mesh
from .state import PhaseState, fmt, total


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_f: float
    mass_g: float
    min_f: float
    min_g: float
    l1_f: float
    l1_g: float
    l2sq_f: float
    l2sq_g: float
    linf_f: float
    linf_g: float
    tail_f: float
    tail_g: float

    @classmethod
    def header(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def row(self) -> tuple[str, ...]:
        return tuple(fmt(x) for x in astuple(self))


def convex_functional(p: np.ndarray, mesh: Mesh, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sum_ij |C_ij| phi(p_ij)`` in row-major order."""
    return total(mesh.cell_areas * phi(p))


def _outside_length(a: np.ndarray, b: np.ndarray, M: float) -> np.ndarray:
    upper = np.clip(b - np.maximum(a, M), 0.0, None)
    lower = np.clip(np.minimum(b, -M) - a, 0.0, None)
    return upper + lower


def tail_mass(p: np.ndarray, mesh: Mesh, M: float) -> float:
    """Mass carried by ``|v| >= M``; cells straddling ``±M`` count fractionally."""
    if not 0 < M:
        raise ValueError(f"tail threshold must be positive, got {M}")
    if M > mesh.v_h * (1 + 1e-14):
        raise ValueError(f"tail threshold {M} exceeds the velocity cut-off {mesh.v_h}")
    frac = _outside_length(mesh.v_interfaces[:-1], mesh.v_interfaces[1:], M)
    return total(p * mesh.dx[:, None] * frac[None, :])


def record(state: PhaseState, mesh: Mesh, tail_M: float) -> DiagnosticsRecord:
    vals = {"t": state.t}
    for name, p in state.species():
        weighted = mesh.cell_areas * p
        vals[f"mass_{name}"] = total(weighted)
        vals[f"min_{name}"] = float(p.min())
        vals[f"l1_{name}"] = total(np.abs(weighted))
        vals[f"l2sq_{name}"] = total(mesh.cell_areas * p * p)
        vals[f"linf_{name}"] = float(np.abs(p).max())
        vals[f"tail_{name}"] = tail_mass(p, mesh, tail_M)
    return DiagnosticsRecord(**vals)


def choose_vh(epsilon: float, C_T: float, alpha: float, lambda1: float) -> float:
    """Velocity cut-off for which the tail bound
    ``2 C_T / (alpha**(1+lambda1) (lambda1-1)) * v_h**(1-lambda1)`` equals ``epsilon``.

    Uses the exponent ``1/(lambda1 - 1)`` that inverts this bound.
    """
    if lambda1 <= 1:
        raise ValueError(f"lambda1 must exceed 1 for an integrable tail, got {lambda1}")
    if not epsilon > 0 or not C_T > 0 or not 0 < alpha <= 1:
        raise ValueError("need epsilon > 0, C_T > 0 and alpha in (0, 1]")
    base = 2.0 * C_T / (alpha ** (1.0 + lambda1) * (lambda1 - 1.0) * epsilon)
    return base ** (1.0 / (lambda1 - 1.0))


VH_EXPONENT_CONVENTION = "1/(lambda1-1)"


def envelope(mesh: Mesh, C: float, lambda1: float, lambda2: float) -> np.ndarray:
    """``C / (1 + |v_j|**lambda1 + |x_i|**lambda2)`` on cell centres."""
    ax = np.abs(mesh.x_centers)[:, None] ** lambda2
    av = np.abs(mesh.v_centers)[None, :] ** lambda1
    return C / (1.0 + av + ax)


class EnvelopeReport(NamedTuple):
    ok: bool
    ratio: float
    worst_cell: tuple[int, int, str]

    def __bool__(self):
        return self.ok


def tail_envelope_check(state: PhaseState, mesh: Mesh, C: float, lambda1: float,
                        lambda2: float, C_T_cap: float) -> EnvelopeReport:
    """Check ``p_ij <= C_T_cap * C / (1 + |v_j|**lambda1 + |x_i|**lambda2)``.

    ``ratio`` is the largest ``p / (C_T_cap * R)`` over cells and species.
    """
    if not (lambda1 > 1 and 1 <= lambda2 <= lambda1):
        raise ValueError("need lambda1 > 1 and 1 <= lambda2 <= lambda1")
    bound = C_T_cap * envelope(mesh, C, lambda1, lambda2)
    worst = (-np.inf, (0, 0, "f"))
    ok = True
    for name, p in state.species():
        ok &= bool(np.all(p <= bound))
        r = p / bound
        i, j = np.unravel_index(np.argmax(r), r.shape)
        if r[i, j] > worst[0]:
            worst = (float(r[i, j]), (int(i), int(j), name))
    return EnvelopeReport(ok, worst[0], worst[1])


def calibrate_envelope_cap(state: PhaseState, mesh: Mesh, C: float, lambda1: float,
                           lambda2: float, slack: float = 10.0) -> float:
    """Empirical cap: ``slack * max(p0 / R)`` over the initial state."""
    R = envelope(mesh, C, lambda1, lambda2)
    return slack * max(float(np.max(state.f / R)), float(np.max(state.g / R)))


class AuditFailure(RuntimeError):
    """A monitored structure-preservation property failed."""

    def __init__(self, invariant: str, step: int, detail: str):
        self.invariant = invariant
        self.step = step
        super().__init__(f"invariant '{invariant}' failed at step {step}: {detail}")


@dataclass
class InvariantAudit:
    """Streaming checks over consecutive diagnostics records.

    Mass is compared against the first record, norms against the previous one.
    """

    mass_rtol: float = 1e-12
    l2_rtol: float = 1e-12
    linf_atol: float = 1e-13

    def __post_init__(self):
        self.first: DiagnosticsRecord | None = None
        self.prev: DiagnosticsRecord | None = None
        self.step = -1
        self.max_mass_drift = 0.0

    def check(self, rec: DiagnosticsRecord, step: int | None = None):
        """Raise :class:`AuditFailure` naming the invariant and ``step``
        (defaults to the record count)."""
        self.step = self.step + 1 if step is None else step
        if self.first is None:
            self.first = self.prev = rec
            for sp in "fg":
                if getattr(rec, f"min_{sp}") < 0:
                    raise AuditFailure("positivity", 0, f"min_{sp} = {getattr(rec, f'min_{sp}'):.3e}")
            return
        for sp in "fg":
            m0 = getattr(self.first, f"mass_{sp}")
            m = getattr(rec, f"mass_{sp}")
            drift = abs(m - m0) / max(abs(m0), np.finfo(float).tiny)
            self.max_mass_drift = max(self.max_mass_drift, drift)
            if drift > self.mass_rtol:
                raise AuditFailure("mass conservation", self.step,
                                   f"species {sp} relative drift {drift:.3e}")
            lo = getattr(rec, f"min_{sp}")
            if lo < 0:
                raise AuditFailure("positivity", self.step, f"min_{sp} = {lo:.3e}")
            a, b = getattr(self.prev, f"linf_{sp}"), getattr(rec, f"linf_{sp}")
            if b > a + self.linf_atol:
                raise AuditFailure("L-infinity bound", self.step, f"species {sp}: {a!r} -> {b!r}")
            a, b = getattr(self.prev, f"l2sq_{sp}"), getattr(rec, f"l2sq_{sp}")
            if b > a * (1 + self.l2_rtol):
                raise AuditFailure("L2 decay", self.step, f"species {sp}: {a!r} -> {b!r}")
        self.prev = rec


def mass_drift(records) -> float:
    """Largest relative mass change of either species against the first record."""
    r0 = records[0]
    out = 0.0
    for r in records:
        for sp in "fg":
            m0 = getattr(r0, f"mass_{sp}")
            out = max(out, abs(getattr(r, f"mass_{sp}") - m0) / abs(m0) if m0 else 0.0)
    return out
