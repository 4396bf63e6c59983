import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossfv.diagnostics import InvariantAudit, convex_functional, mass_drift
from crossfv.kernels import KernelSet, quadratic_kernel, zero_kernel
from crossfv.mesh import Mesh, build_paper_mesh, build_uniform
from crossfv.scheme import (
    CFLViolation, SchemeParams, Simulation, cfl_satisfied, max_stable_dt, simulate, step_convex_form,
    step_count, step_flux_form,
)
from crossfv.state import InteractionField, PhaseState, discretize_initial, paper_sine_initial


def paper_kernels(L=1.0):
    return KernelSet(quadratic_kernel(1.0, L), quadratic_kernel(0.25, L),
                     quadratic_kernel(0.25, L), quadratic_kernel(1.0, L))


def no_drift(nx):
    return InteractionField(np.zeros(nx), np.zeros(nx))


# -- hand-computed single steps ------------------------------------------------

def test_transport_hand_step():
    m = Mesh(np.array([-1.0, 0.0, 1.0]), np.array([0.5, 1.5]))
    s = PhaseState(0, 0.0, np.array([[1.0], [0.0]]), np.zeros((2, 1)))
    out = step_flux_form(s, m, no_drift(2), 0.25)
    np.testing.assert_allclose(out.f[:, 0], [0.75, 0.25], rtol=0, atol=1e-15)
    assert out.f.sum() == 1.0


def test_drift_hand_step():
    m = Mesh(np.array([-0.5, 0.5]), np.array([-1.0, 0.0, 1.0]))
    s = PhaseState(0, 0.0, np.array([[0.0, 1.0]]), np.zeros((1, 2)))
    ups = InteractionField(np.array([1.0]), np.array([0.0]))
    out = step_flux_form(s, m, ups, 0.25)
    np.testing.assert_allclose(out.f[0], [0.25, 0.75], rtol=0, atol=1e-15)


def test_x_periodicity_and_v_walls():
    m = build_uniform(1.0, 3, 1.0, 2)
    f = np.zeros(m.shape)
    f[2, 1] = 1.0  # rightmost cell moving right wraps to cell 0
    out = step_flux_form(PhaseState(0, 0.0, f, f), m, no_drift(3), 0.1)
    assert out.f[0, 1] > 0
    # strong positive drift pushes mass to the bottom cell but never across the wall
    ups = InteractionField(np.full(3, 5.0), np.full(3, -5.0))
    f = np.ones(m.shape)
    out = step_flux_form(PhaseState(0, 0.0, f, f), m, ups, 0.1)
    assert out.f.sum() == pytest.approx(f.sum(), rel=1e-15)
    assert out.g.sum() == pytest.approx(f.sum(), rel=1e-15)


def test_constant_in_x_without_drift_is_steady():
    m = build_paper_mesh(1)
    f = np.tile(np.linspace(0.1, 1.0, m.Nv), (m.Nx, 1))
    out = step_flux_form(PhaseState(0, 0.0, f, f), m, no_drift(m.Nx), 1e-3)
    np.testing.assert_allclose(out.f, f, rtol=1e-15)


def test_convex_form_identity_at_zero_dt():
    m = build_paper_mesh(1)
    rng = np.random.default_rng(0)
    s = PhaseState(0, 0.0, rng.random(m.shape), rng.random(m.shape))
    ups = InteractionField(rng.normal(size=m.Nx), rng.normal(size=m.Nx))
    out = step_convex_form(s, m, ups, 0.0)
    np.testing.assert_array_equal(out.f, s.f)


def _random_cfl_state(rng, m, xi=0.1, empty_walls=False):
    f, g = rng.random(m.shape), rng.random(m.shape)
    if empty_walls:
        f[:, [0, -1]] = 0.0
        g[:, [0, -1]] = 0.0
    s = PhaseState(0, 0.0, f, g)
    ups = InteractionField(rng.uniform(-3, 3, m.Nx), rng.uniform(-3, 3, m.Nx))
    dt = 1.0
    c = cfl_satisfied(dt, m, ups, xi)
    dt = (1 - xi) / c.number * rng.uniform(0.2, 1.0)
    return s, ups, dt


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2]))
def test_two_forms_agree_and_stay_nonnegative(seed, level):
    rng = np.random.default_rng(seed)
    m = build_paper_mesh(level)
    s, ups, dt = _random_cfl_state(rng, m)
    assert cfl_satisfied(dt, m, ups, 0.1)
    a = step_flux_form(s, m, ups, dt)
    b = step_convex_form(s, m, ups, dt)
    scale = max(s.f.max(), s.g.max())
    assert np.max(np.abs(a.f - b.f)) <= 1e-13 * scale
    assert np.max(np.abs(a.g - b.g)) <= 1e-13 * scale
    assert b.f.min() >= 0 and b.g.min() >= 0
    # away from the velocity walls every update is a convex combination
    assert a.f[:, 1:-1].max() <= s.f.max() and a.g[:, 1:-1].max() <= s.g.max()


def test_wall_cell_accumulates_under_inward_drift():
    # constant state, drift toward the lower wall: interior cells keep their value,
    # the wall cell gains what it receives and cannot pass on
    m = build_uniform(1.0, 2, 1.0, 4)
    p = np.ones(m.shape)
    ups = InteractionField(np.full(2, 1.0), np.full(2, -1.0))
    dt = 0.1
    out = step_flux_form(PhaseState(0, 0.0, p, p), m, ups, dt)
    lam = dt / m.dv[0]
    np.testing.assert_allclose(out.f[:, 1:-1], 1.0, rtol=1e-15)
    np.testing.assert_allclose(out.f[:, 0], 1.0 + lam, rtol=1e-15)
    np.testing.assert_allclose(out.f[:, -1], 1.0 - lam, rtol=1e-15)
    np.testing.assert_allclose(out.g[:, -1], 1.0 + lam, rtol=1e-15)
    assert out.f.sum() == pytest.approx(p.sum(), rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_convex_functionals_decay(seed):
    rng = np.random.default_rng(seed)
    m = build_paper_mesh(1)
    s, ups, dt = _random_cfl_state(rng, m, empty_walls=True)
    out = step_flux_form(s, m, ups, dt)
    cap = s.f.max()
    for phi in (np.square, lambda p: np.maximum(p - cap, 0.0), np.abs):
        before = convex_functional(s.f, m, phi)
        after = convex_functional(out.f, m, phi)
        assert after <= before + 1e-12 * max(before, 1.0)
    ma = np.sum(m.cell_areas * s.f)
    assert np.sum(m.cell_areas * out.f) == pytest.approx(ma, rel=1e-13)


# -- CFL -----------------------------------------------------------------------

def test_max_stable_dt_hand_value():
    m = build_uniform(1.0, 20, 5.0, 100)
    assert m.alpha == pytest.approx(1.0) and m.h == pytest.approx(0.1)
    assert max_stable_dt(m, 1.25, 0.1) == pytest.approx(0.0144, rel=1e-14)
    assert max_stable_dt(build_uniform(1.0, 2, 1.0, 2), 0.0, 1e-12) == pytest.approx(1.0)
    assert max_stable_dt(m, 1.25, 1.0) == 0.0


def test_cfl_at_the_bound():
    m = build_uniform(1.0, 20, 5.0, 100)
    dt = max_stable_dt(m, 1.25, 0.1)
    ups = InteractionField(np.full(m.Nx, 1.25), np.full(m.Nx, -1.25))
    assert cfl_satisfied(dt, m, ups, 0.1)
    rep = cfl_satisfied(2 * dt, m, ups, 0.1)
    assert not rep
    assert rep.number == pytest.approx(2 * 0.9, rel=0.02)
    assert rep.worst_cell[1] in (0, m.Nv - 1)


def test_zero_velocity_cell_has_zero_cfl_number():
    m = Mesh(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]))
    rep = cfl_satisfied(10.0, m, no_drift(1), 0.1)
    assert rep.ok and rep.number == 0.0


def test_params_validation():
    with pytest.raises(ValueError, match=r"xi must lie in \(0,1\)"):
        SchemeParams(T=1.0, xi=1.0)
    with pytest.raises(ValueError):
        SchemeParams(T=1.0, cfl_mode="fixed")


def test_step_count_rounding():
    assert step_count(0.25, 4e-4) == 625
    assert step_count(0.25, 0.1) == 3
    assert step_count(0.0, 0.1) == 0


# -- time loop -----------------------------------------------------------------

def _sine_sim(mesh, T, **params):
    f0, g0 = paper_sine_initial()
    return Simulation(mesh, paper_kernels(), discretize_initial(mesh, f0, g0), SchemeParams(T=T, **params))


def test_zero_final_time_yields_initial_state_only():
    sim = _sine_sim(build_paper_mesh(1), 0.0)
    states = list(sim.states())
    assert sim.n_steps == 0 and len(states) == 1
    res = simulate(sim, snapshot_every=1, keep_snapshots=True)
    assert len(res.records) == 1 and len(res.snapshots) == 1


def test_scaled_benchmark_conserves_mass():
    mesh = Mesh(build_uniform(1.0, 12, 1.0, 2).x_interfaces, build_paper_mesh(2).v_interfaces)
    sim = _sine_sim(mesh, 0.1)
    audit = InvariantAudit()
    res = simulate(sim, audit=audit)
    assert res.final.t == 0.1
    assert mass_drift(res.records) <= 1e-12
    assert min(min(r.min_f, r.min_g) for r in res.records) >= 0


def test_last_step_lands_on_final_time():
    sim = _sine_sim(build_paper_mesh(1), 0.025, cfl_mode="fixed", dt=0.01)
    assert sim.step_sizes() == pytest.approx([0.01, 0.01, 0.005])
    assert sim.run().t == 0.025


def test_oversized_step_aborts():
    mesh = build_paper_mesh(2)
    dt = 3 * max_stable_dt(mesh, 1.25, 0.1)
    sim = _sine_sim(mesh, 0.25, cfl_mode="fixed", dt=dt)
    with pytest.raises(CFLViolation) as exc:
        simulate(sim)
    assert exc.value.step == 0
    assert exc.value.partial.records


def test_unchecked_oversized_step_goes_negative():
    # what the guard prevents: with the check disabled the run loses positivity
    mesh = build_paper_mesh(2)
    f0, g0 = paper_sine_initial()
    sim = Simulation(mesh, paper_kernels(), discretize_initial(mesh, f0, g0),
                     SchemeParams(T=0.25, cfl_mode="fixed", dt=3 * max_stable_dt(mesh, 1.25, 0.1)),
                     check_cfl=False)
    assert min(min(s.f.min(), s.g.min()) for s in sim.states()) < 0


def test_single_species_decouples():
    mesh = build_paper_mesh(1)
    z = zero_kernel(1.0)
    f0, _ = paper_sine_initial()
    zero = lambda x, v: 0 * x
    two = Simulation(mesh, KernelSet(quadratic_kernel(1.0, 1.0), z, z, quadratic_kernel(1.0, 1.0)),
                     discretize_initial(mesh, f0, zero), SchemeParams(T=0.1))
    one = Simulation(mesh, KernelSet(quadratic_kernel(1.0, 1.0), z, z, z),
                     discretize_initial(mesh, f0, zero), SchemeParams(T=0.1, cfl_mode="fixed", dt=two.dt))
    a, b = two.run(), one.run()
    np.testing.assert_array_equal(a.f, b.f)
    assert np.all(a.g == 0)


def test_forms_give_same_trajectory():
    mesh = build_paper_mesh(1)
    f0, g0 = paper_sine_initial()
    init = discretize_initial(mesh, f0, g0)
    runs = [Simulation(mesh, paper_kernels(), init, SchemeParams(T=0.2), form=form).run()
            for form in ("flux", "convex")]
    np.testing.assert_allclose(runs[0].f, runs[1].f, rtol=1e-12, atol=1e-15)


def test_auto_step_respects_the_drift_bound():
    mesh = build_paper_mesh(2)
    sim = _sine_sim(mesh, 0.05)
    assert sim.dt == pytest.approx(max_stable_dt(mesh, sim.drift_bound, 0.1))
    assert sim.drift_bound >= sim.C_W
