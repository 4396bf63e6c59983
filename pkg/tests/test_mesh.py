import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossfv.mesh import (
    Mesh, MeshError, bisect, build_paper_mesh, build_paper_velocity_mesh, build_uniform,
    is_nested, refine,
)


def test_uniform_smallest_case():
    m = build_uniform(1.0, 2, 1.0, 2)
    np.testing.assert_array_equal(m.x_interfaces, [-1, 0, 1])
    np.testing.assert_array_equal(m.v_interfaces, [-1, 0, 1])
    assert m.h == 1.0
    assert m.alpha == 1.0


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_uniform_matches_equidistant_space_widths(level):
    m = build_uniform(1.0, 6 * 2 ** (level - 1), 5.0, 12 * 2 ** (level - 1))
    np.testing.assert_allclose(m.dx, 2.0 ** (1 - level) / 3, rtol=1e-14)


@pytest.mark.parametrize("args", [(1.0, 0, 1.0, 2), (1.0, 2, 1.0, 0), (1.0, 2, 1.0, 3), (0.0, 2, 1.0, 2)])
def test_uniform_rejects_bad_counts(args):
    with pytest.raises(MeshError):
        build_uniform(*args)


def test_paper_velocity_level1():
    v = build_paper_velocity_mesh(1, 5.0)
    w = np.diff(v)
    inner = w[np.abs(0.5 * (v[:-1] + v[1:])) < 1.25]
    outer = w[np.abs(0.5 * (v[:-1] + v[1:])) > 1.25]
    assert inner.size == 10 and np.all(inner == 0.25)
    assert outer.size == 2 and np.all(outer == 3.75)
    assert w.max() == 3.75
    assert v[0] == -5.0 and v[-1] == 5.0


def test_paper_velocity_level2_h():
    m = build_paper_mesh(2)
    assert np.all(np.diff(build_paper_velocity_mesh(2, 5.0))[[0, -1]] == 1.875)
    assert m.h == 1.875
    assert round(m.h, 2) == 1.88


def test_paper_velocity_rejects_non_tiling():
    with pytest.raises(MeshError, match="not tiled"):
        build_paper_velocity_mesh(1, 4.0)


def test_zero_is_interface_in_builders():
    for m in (build_uniform(1.0, 4, 3.0, 6), build_paper_mesh(2)):
        assert 0.0 in m.v_interfaces


def test_bisect_midpoints():
    m = bisect(build_uniform(1.0, 2, 1.0, 2))
    np.testing.assert_array_equal(m.x_interfaces, [-1, -0.5, 0, 0.5, 1])


@pytest.mark.parametrize("level", [2, 3, 4, 5])
def test_bisection_reproduces_paper_hierarchy(level):
    m = refine(build_paper_mesh(1), level - 1)
    direct = build_paper_mesh(level)
    np.testing.assert_array_equal(m.x_interfaces, direct.x_interfaces)
    np.testing.assert_array_equal(m.v_interfaces, direct.v_interfaces)


def test_mesh_validation():
    with pytest.raises(MeshError, match="increasing"):
        Mesh(np.array([-1.0, 1.0, 0.5, 1.0]), np.array([0.0, 1.0]))
    with pytest.raises(MeshError, match="symmetric"):
        Mesh(np.array([-1.0, 2.0]), np.array([0.0, 1.0]))
    with pytest.raises(MeshError):
        Mesh(np.array([1.0]), np.array([0.0, 1.0]))


def test_arrays_are_read_only():
    m = build_uniform(1.0, 2, 1.0, 2)
    with pytest.raises(ValueError):
        m.dx[0] = 3.0


def test_is_nested_reports_first_unmatched():
    assert is_nested(np.array([0.0, 1.0]), np.array([0.0, 0.5, 1.0])) is None
    assert is_nested(np.array([0.0, 0.3, 1.0]), np.array([0.0, 0.5, 1.0])) == 1


interfaces = st.lists(st.floats(0.05, 1.0), min_size=1, max_size=8)


def _mesh_from(xw, vw):
    x = np.concatenate([[0.0], np.cumsum(xw)])
    x = x - x[-1] / 2
    x[0], x[-1] = -x[-1], x[-1]
    v = np.concatenate([[0.0], np.cumsum(vw)]) - 1.0
    return Mesh(x, v)


@settings(max_examples=60, deadline=None)
@given(interfaces, interfaces)
def test_admissibility_and_extent(xw, vw):
    m = _mesh_from(xw, vw)
    assert 0 < m.alpha <= 1
    assert m.alpha_h <= min(m.dx.min(), m.dv.min()) * (1 + 1e-15)
    assert max(m.dx.max(), m.dv.max()) == m.h
    assert np.isclose(m.dx.sum(), 2 * m.L, rtol=1e-13)
    assert np.isclose(m.dv.sum(), m.v_interfaces[-1] - m.v_interfaces[0], rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(interfaces, interfaces)
def test_bisect_is_nested_and_keeps_alpha(xw, vw):
    m = _mesh_from(xw, vw)
    b = bisect(m)
    assert is_nested(m.x_interfaces, b.x_interfaces) is None
    assert is_nested(m.v_interfaces, b.v_interfaces) is None
    assert set(m.x_interfaces) <= set(b.x_interfaces)
    assert b.alpha == pytest.approx(m.alpha, rel=1e-12)
    assert b.h == pytest.approx(m.h / 2, rel=1e-12)
