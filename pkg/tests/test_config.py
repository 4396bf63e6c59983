import json

import numpy as np
import pytest

from crossfv.config import (
    BUNDLED, ConfigError, build_initial, build_kernels, build_mesh, build_params,
    bundled_config_text, load_config, parse_config,
)
from crossfv.kernels import cw_constant
from crossfv.mesh import build_paper_mesh
from crossfv.state import discretize_initial, paper_sine_initial

MINIMAL = {
    "domain": {"T": 0.1},
    "mesh": {"type": "uniform", "Nx": 4, "Nv": 4, "v_h": 2.0},
    "kernels": {k: {"type": "zero"} for k in ("K11", "K12", "K21", "K22")},
    "initial": {"type": "constant", "f": 1.0, "g": 0.5},
}


def cfg_text(**changes):
    d = json.loads(json.dumps(MINIMAL))
    for path, value in changes.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        if value is ...:
            del node[keys[-1]]
        else:
            node[keys[-1]] = value
    return json.dumps(d)


def test_minimal_config_defaults():
    cfg = parse_config(cfg_text())
    assert cfg.xi == 0.1
    assert cfg.snapshot_every == 10
    assert cfg.domain.L == 1.0 and cfg.dt.mode == "auto" and cfg.form == "flux"
    assert cfg.experiment.type == "none"


def test_xi_out_of_range():
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg_text(dt={"xi": 1.5}))
    assert exc.value.errors == ["dt.xi: xi must lie in (0,1)"]


def test_all_errors_are_listed():
    text = cfg_text(dt={"xi": 1.5}, bogus=3, mesh__Nv=3, domain__T=...)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    errs = exc.value.errors
    assert "bogus: unknown key" in errs
    assert "dt.xi: xi must lie in (0,1)" in errs
    assert any(e.startswith("domain.T:") for e in errs)
    assert any(e.startswith("mesh.uniform.Nv:") and "even" in e for e in errs)


def test_unknown_nested_key_and_bad_json():
    with pytest.raises(ConfigError, match="output.snapshot_cadence: unknown key"):
        parse_config(cfg_text(output={"snapshot_cadence": 3}))
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{")


def test_fixed_dt_needs_value():
    with pytest.raises(ConfigError, match="value"):
        parse_config(cfg_text(dt={"mode": "fixed"}))
    p = build_params(parse_config(cfg_text(dt={"mode": "fixed", "value": 0.01})))
    assert p.cfl_mode == "fixed" and p.dt == 0.01


def test_bundled_benchmark_setup():
    cfg = load_config("paper_section5")
    ks = build_kernels(cfg)
    # potentials x^2/2 (self) and x^2/8 (cross): derivatives x and x/4
    assert ks.k11(0.5) == 0.5 and ks.k22(-0.4) == -0.4
    assert ks.k12(0.8) == pytest.approx(0.2) and ks.k21(0.8) == pytest.approx(0.2)
    assert cw_constant(ks) == 1.25
    mesh = build_mesh(cfg)
    assert mesh.shape == build_paper_mesh(3).shape and mesh.v_h == 5.0
    state = build_initial(cfg, mesh)
    ref = discretize_initial(mesh, *paper_sine_initial(99 / 101, 100.0))
    np.testing.assert_array_equal(state.f, ref.f)
    assert cfg.domain.T == 0.25 and cfg.experiment.type == "time_eoc"


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_parse(name):
    cfg = parse_config(bundled_config_text(name))
    assert cfg.domain.L == 1.0


def test_explicit_mesh_and_table_initial():
    text = cfg_text(mesh={"type": "explicit", "x_interfaces": [-1, 0, 1], "v_interfaces": [-1, 0, 2]},
                    initial={"type": "table", "f": [[1, 2], [3, 4]], "g": [[0, 0], [0, 1]]})
    cfg = parse_config(text)
    mesh = build_mesh(cfg)
    s = build_initial(cfg, mesh)
    assert s.f[1, 0] == 3.0 and mesh.v_h == 2.0


def test_table_initial_validation():
    text = cfg_text(initial={"type": "table", "f": [[1, 2]], "g": [[-1, 0]]})
    cfg = parse_config(text)
    with pytest.raises(ConfigError) as exc:
        build_initial(cfg, build_mesh(cfg))
    assert len(exc.value.errors) == 2


def test_explicit_mesh_must_match_L():
    cfg = parse_config(cfg_text(mesh={"type": "explicit", "x_interfaces": [-2, 2], "v_interfaces": [0, 1]}))
    with pytest.raises(ConfigError, match="L=1"):
        build_mesh(cfg)


def test_expression_initial():
    cfg = parse_config(cfg_text(initial={"type": "expression", "f": "exp(-v**2) * (1 + cos(pi * x))",
                                         "g": "where(abs(v) < 1, 1.0, 0.0)"}))
    s = build_initial(cfg, build_mesh(cfg))
    assert s.f.min() >= 0 and s.g.max() == pytest.approx(1.0)


@pytest.mark.parametrize("expr", ["__import__('os')", "open('x')", "x.__class__", "v +"])
def test_expression_rejects_unsafe_or_invalid(expr):
    with pytest.raises(ConfigError, match="initial"):
        parse_config(cfg_text(initial={"type": "expression", "f": expr, "g": "1.0"}))


def test_load_config_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(cfg_text(), encoding="utf-8")
    assert load_config(p).mesh.Nx == 4
