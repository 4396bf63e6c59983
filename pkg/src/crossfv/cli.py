"""Command line entry point: ``crossfv {run,eoc-time,eoc-space,audit}``.

Exit codes: 0 success, 2 config error, 3 CFL abort, 4 invariant-audit
failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError, ConstantInitial, RunConfig, SpaceEOCSpec, TimeEOCSpec, build_initial,
    build_kernels, build_mesh, build_params, initial_evaluators, load_config,
)
from .diagnostics import (
    VH_EXPONENT_CONVENTION, AuditFailure, DiagnosticsRecord, InvariantAudit,
    calibrate_envelope_cap, tail_envelope_check,
)
from .eoc import EOC_HEADER, TIME_ALIGNMENT, ErrorReport, Setup, family_base_mesh, run_space_eoc, run_time_eoc
from .io import OutputError, ensure_writable_dir, write_csv, write_metadata
from .mesh import MeshError
from .scheme import CFLViolation, Simulation, simulate, step_convex_form, step_flux_form
from .state import FIELD_HEADER, field_rows, truncated_mass

logger = logging.getLogger("crossfv")

EXIT_OK, EXIT_CONFIG, EXIT_CFL, EXIT_AUDIT, EXIT_IO = 0, 2, 3, 4, 5


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


# -- shared pieces -------------------------------------------------------------

def _truncated(cfg: RunConfig, mesh) -> tuple[float, float]:
    if isinstance(cfg.initial, ConstantInitial):
        return 0.0, 0.0  # constant data are defined on the truncated domain only
    ev = initial_evaluators(cfg)
    if ev is None:
        return 0.0, 0.0
    out = []
    for p0 in ev:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                out.append(truncated_mass(mesh, p0))
            except Exception:  # noqa: BLE001 - reported, not fatal
                out.append(float("nan"))
    return out[0], out[1]


def _setup(cfg: RunConfig) -> Setup:
    ev = initial_evaluators(cfg)
    if ev is None:
        raise _Exit(EXIT_CONFIG, "refinement studies need evaluable initial data, not a table")
    return Setup(build_kernels(cfg), ev[0], ev[1], cfg.domain.T, cfg.dt.xi, cfg.form)


def _base_metadata(cfg: RunConfig, sim: Simulation) -> dict:
    tf, tg = _truncated(cfg, sim.mesh)
    meta = {"crossfv_version": __version__,
            "config": json.dumps(cfg.model_dump(mode="json"), sort_keys=True)}
    meta.update({f"mesh_{k}": v for k, v in sim.mesh.summary().items()})
    meta.update({
        "C_W": sim.C_W,
        "drift_bound": sim.drift_bound,
        "xi": cfg.dt.xi,
        "dt_mode": cfg.dt.mode,
        "dt": sim.dt,
        "dt_formula": "(1-xi)*alpha*h/(v_h+drift_bound)" if cfg.dt.mode == "auto" else "fixed",
        "n_steps": sim.n_steps,
        "T": cfg.domain.T,
        "scheme_form": cfg.form,
        "truncated_initial_mass_f": tf,
        "truncated_initial_mass_g": tg,
        "kernel_evaluation": "raw K'(x_i - y) on (-2L, 2L), not periodised",
        "vh_exponent_convention": VH_EXPONENT_CONVENTION,
        "eoc_time_alignment": TIME_ALIGNMENT,
    })
    return meta


def _load(args) -> RunConfig:
    try:
        return load_config(args.config)
    except FileNotFoundError:
        raise _Exit(EXIT_CONFIG, f"config file not found: {args.config}") from None
    except ConfigError as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from None


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out if args.out is not None else cfg.output.directory
    try:
        return ensure_writable_dir(out)
    except OutputError as exc:
        raise _Exit(EXIT_IO, str(exc)) from None


def _simulation(cfg: RunConfig) -> Simulation:
    try:
        mesh = build_mesh(cfg)
        initial = build_initial(cfg, mesh)
        return Simulation(mesh, build_kernels(cfg), initial, build_params(cfg), form=cfg.form)
    except (ConfigError, MeshError, ValueError) as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from None


def _write_records(out: Path, records, figures: bool):
    write_csv(out / "diagnostics.csv", DiagnosticsRecord.header(), (r.row() for r in records))
    if figures and records:
        from .plotting import plot_diagnostics
        plot_diagnostics(records, out / "diagnostics.png")


def _write_report(out: Path, report: ErrorReport, figures: bool) -> Path:
    path = out / f"eoc_{report.kind}.csv"
    write_csv(path, EOC_HEADER, report.csv_rows())
    if figures:
        from .plotting import plot_eoc
        plot_eoc(report, out / f"eoc_{report.kind}.png")
    return path


def _print_report(report: ErrorReport):
    print(f"{'level':>5} {'dt':>10} {'h':>10} {'err1':>12} {'eoc1':>6} {'err2':>12} {'eoc2':>6}")
    for r in report.rows:
        e1 = "-" if r.eoc1 is None else f"{r.eoc1:.2f}"
        e2 = "-" if r.eoc2 is None else f"{r.eoc2:.2f}"
        print(f"{r.level:>5} {r.dt:>10.3e} {r.h:>10.3e} {r.err1:>12.5e} {e1:>6} {r.err2:>12.5e} {e2:>6}")


def _run_simulation(cfg, sim, out, audit, extra_check=None):
    """Shared body of ``run`` and ``audit``; returns (result, metadata)."""
    meta = _base_metadata(cfg, sim)
    snap_dir = out / "snapshots"
    if cfg.output.snapshot_every:
        snap_dir.mkdir(exist_ok=True)

    def on_snapshot(state):
        write_csv(snap_dir / f"snapshot_{state.n:07d}.csv", FIELD_HEADER, field_rows(state, sim.mesh))
        if extra_check is not None:
            extra_check(state)

    t0 = time.perf_counter()
    try:
        result = simulate(sim, cfg.output.tail_M, cfg.output.diagnostics_every,
                          cfg.output.snapshot_every, on_snapshot, audit)
    except (CFLViolation, AuditFailure) as exc:
        partial = getattr(exc, "partial", None)
        meta["wall_time_s"] = time.perf_counter() - t0
        meta["status"] = f"aborted: {exc}"
        if partial is not None:
            _write_records(out, partial.records, cfg.output.figures)
        write_metadata(out / "metadata.txt", meta)
        code = EXIT_CFL if isinstance(exc, CFLViolation) else EXIT_AUDIT
        raise _Exit(code, str(exc)) from None
    meta["wall_time_s"] = time.perf_counter() - t0
    meta["max_relative_mass_drift"] = audit.max_mass_drift
    meta["status"] = "ok"
    _write_records(out, result.records, cfg.output.figures)
    if cfg.output.figures:
        from .plotting import plot_phase_state
        plot_phase_state(result.final, sim.mesh, out / "final_state.png")
    return result, meta


def _audit_from(cfg: RunConfig) -> InvariantAudit:
    a = cfg.audit
    return InvariantAudit(mass_rtol=a.mass_rtol, l2_rtol=a.l2_rtol, linf_atol=a.linf_atol)


# -- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    sim = _simulation(cfg)
    result, meta = _run_simulation(cfg, sim, out, _audit_from(cfg))
    print(f"t = {result.final.t:.6g} after {sim.n_steps} steps of dt = {sim.dt:.6g}; "
          f"max relative mass drift {meta['max_relative_mass_drift']:.3e}")
    exp = cfg.experiment
    if isinstance(exp, (TimeEOCSpec, SpaceEOCSpec)):
        report = _experiment(cfg, exp, sim, args.threads)
        meta.update({f"eoc_{k}": v for k, v in report.metadata.items()})
        meta["eoc_table"] = _write_report(out, report, cfg.output.figures).name
        _print_report(report)
    write_metadata(out / "metadata.txt", meta)
    return EXIT_OK


def _experiment(cfg: RunConfig, exp, sim: Simulation, threads: int) -> ErrorReport:
    setup = _setup(cfg)
    try:
        if isinstance(exp, TimeEOCSpec):
            return run_time_eoc(setup, sim.mesh, exp.dt0, exp.levels, exp.reference_extra_levels, threads)
        base = family_base_mesh(exp.family, cfg.domain.L, cfg.mesh.v_h if hasattr(cfg.mesh, "v_h") else sim.mesh.v_h,
                                exp.dx0, exp.dv0)
        return run_space_eoc(setup, base, exp.dt, exp.levels, exp.reference_extra_levels,
                             exp.family, threads)
    except CFLViolation as exc:
        raise _Exit(EXIT_CFL, f"refinement study aborted: {exc}") from None
    except MeshError as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from None


def _cmd_eoc(args, kind: str) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    sim = _simulation(cfg)
    exp = cfg.experiment
    if kind == "time" and not isinstance(exp, TimeEOCSpec):
        dt0 = sim.dt
        exp = TimeEOCSpec(type="time_eoc", dt0=dt0)
        logger.info("no time_eoc block; using 4 levels from dt0=%g", dt0)
    if kind == "space" and not isinstance(exp, SpaceEOCSpec):
        raise _Exit(EXIT_CONFIG, "experiment: eoc-space needs an experiment block of type space_eoc")
    t0 = time.perf_counter()
    report = _experiment(cfg, exp, sim, args.threads)
    meta = _base_metadata(cfg, sim)
    meta.update({f"eoc_{k}": v for k, v in report.metadata.items()})
    meta["wall_time_s"] = time.perf_counter() - t0
    meta["eoc_table"] = _write_report(out, report, cfg.output.figures).name
    meta["status"] = "ok"
    write_metadata(out / "metadata.txt", meta)
    _print_report(report)
    return EXIT_OK


def cmd_eoc_time(args) -> int:
    return _cmd_eoc(args, "time")


def cmd_eoc_space(args) -> int:
    return _cmd_eoc(args, "space")


def cmd_audit(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    sim = _simulation(cfg)
    a = cfg.audit
    lines = []

    # both step forms agree on the first step
    ups = sim.interaction(sim.initial)
    dt0 = sim.step_sizes()[0] if sim.n_steps else sim.dt
    s1 = step_flux_form(sim.initial, sim.mesh, ups, dt0)
    s2 = step_convex_form(sim.initial, sim.mesh, ups, dt0)
    scale = max(np.abs(sim.initial.f).max(), np.abs(sim.initial.g).max(), np.finfo(float).tiny)
    gap = max(np.abs(s1.f - s2.f).max(), np.abs(s1.g - s2.g).max()) / scale
    lines.append(("two-form equivalence", gap <= 1e-13, f"max relative gap {gap:.3e}"))

    cap = calibrate_envelope_cap(sim.initial, sim.mesh, a.envelope_C, a.envelope_lambda1,
                                 a.envelope_lambda2, a.envelope_slack)
    worst = {"ratio": 0.0, "ok": True, "cell": None}

    def envelope(state):
        rep = tail_envelope_check(state, sim.mesh, a.envelope_C, a.envelope_lambda1,
                                  a.envelope_lambda2, cap)
        if rep.ratio > worst["ratio"]:
            worst.update(ratio=rep.ratio, cell=(state.n, *rep.worst_cell))
        if not rep.ok:
            worst["ok"] = False

    audit = _audit_from(cfg)
    try:
        _, meta = _run_simulation(cfg, sim, out, audit, extra_check=envelope)
        lines.append(("mass conservation", True, f"max relative drift {audit.max_mass_drift:.3e}"))
        lines.append(("positivity", True, "min >= 0 at every record"))
        lines.append(("L-infinity bound", True, "nonincreasing"))
        lines.append(("L2 decay", True, "nonincreasing"))
        lines.append(("tail envelope", worst["ok"],
                      f"cap {cap:.4g}, worst ratio {worst['ratio']:.4g} at (n, i, j, species) {worst['cell']}"))
        failed = [name for name, ok, _ in lines if not ok]
        meta["audit"] = "pass" if not failed else "fail: " + ", ".join(failed)
        write_metadata(out / "metadata.txt", meta)
    except _Exit as exc:
        if exc.code == EXIT_AUDIT:
            lines.append(("invariant audit", False, str(exc)))
        _write_audit(out, lines)
        raise
    _write_audit(out, lines)
    return EXIT_AUDIT if any(not ok for _, ok, _ in lines) else EXIT_OK


def _write_audit(out: Path, lines):
    from .io import atomic_open

    with atomic_open(out / "audit.txt", "w", encoding="utf-8") as fh:
        for name, ok, detail in lines:
            text = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
            print(text)
            fh.write(text + "\n")


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossfv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("run", cmd_run, "single simulation (plus the experiment block, if any)"),
        ("eoc-time", cmd_eoc_time, "convergence study in the time step"),
        ("eoc-space", cmd_eoc_space, "convergence study in the phase-space mesh"),
        ("audit", cmd_audit, "run with the full invariant suite"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True,
                       help="JSON config file, or a bundled name such as paper_section5")
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for refinement studies; output does not depend on it")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
