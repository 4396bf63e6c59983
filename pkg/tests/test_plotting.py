import numpy as np

from crossfv.diagnostics import record
from crossfv.eoc import ErrorReport, LevelRow
from crossfv.mesh import build_paper_mesh
from crossfv.plotting import plot_diagnostics, plot_eoc, plot_phase_state
from crossfv.state import PhaseState

PNG = b"\x89PNG\r\n\x1a\n"


def test_figures_are_written(tmp_path):
    m = build_paper_mesh(1)
    rng = np.random.default_rng(0)
    states = [PhaseState(n, 0.1 * n, rng.random(m.shape), rng.random(m.shape)) for n in range(3)]
    recs = [record(s, m, 2.5) for s in states]
    rows = [LevelRow(k + 1, 72, 72 * 2 ** k, 1e-3 / 2 ** k, m.alpha_h, m.h, 2.0 ** -k, 4.0 ** -k)
            for k in range(3)]
    outputs = [
        plot_diagnostics(recs, tmp_path / "d.png"),
        plot_phase_state(states[-1], m, tmp_path / "s.png"),
        plot_eoc(ErrorReport("time", rows), tmp_path / "t.png"),
        plot_eoc(ErrorReport("space", rows, {"mesh_family": "equidistant"}), tmp_path / "x.png"),
    ]
    for p in outputs:
        assert p.read_bytes()[:8] == PNG
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.png", "s.png", "t.png", "x.png"]
