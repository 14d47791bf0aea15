import json

import numpy as np
import pytest

from blowup_lab.assembler import (StaticSolution, default_physical_grid, dump_uN, eval_uN,
                                  overlap_mismatch, proximity_norms, residual_report,
                                  residual_rN, unit_norm_error)
from blowup_lab.errors import DomainError, GridMismatch, ScaleUnresolved
from blowup_lab.geometry import RadialGrid, SphereField, log_slope, read_csv
from blowup_lab.harmonic import HarmonicProfile

T = 2.0 ** -14


def test_threshold(sol1, sol2):
    assert sol1.threshold() == T
    assert sol2.threshold() == T


def test_unit_norm_and_bubble_core(sol2):
    t = T / 4
    g = default_physical_grid(sol2.params, t, n=2048)
    u = eval_uN(sol2, t, g)
    assert unit_norm_error(u) < 1e-13
    # near r = 0 the map sits at the south pole of the bubble
    assert u.v3[0] == pytest.approx(-1.0, abs=1e-12)


def test_static_maps_have_no_residual():
    g = RadialGrid.geometric(50.0, 2048, 0.25)
    for sol in (StaticSolution(HarmonicProfile(1)), StaticSolution(None)):
        _, norms = residual_rN(sol, 0.0, g)
        assert norms["L2"] < 1e-9
        assert norms["H1"] < 1e-6


def test_time_derivative(sol2):
    t = T / 2
    r = np.geomspace(1e-6, 0.9, 60)
    _, vt = sol2.fields(t, r)
    h = 1e-4 * t
    fd = (sol2.fields(t + h, r)[0] - sol2.fields(t - h, r)[0]) / (2 * h)
    assert np.max(np.abs(vt - fd)) < 1e-5 * np.max(np.abs(vt))


def test_residual_decays(sol1):
    ts = [T * 2.0 ** -k for k in range(3)]
    l2 = [residual_rN(sol1, t, default_physical_grid(sol1.params, t, n=2048))[1]["L2"]
          for t in ts]
    assert log_slope(ts, l2) > 0.9


def test_guards(sol1):
    with pytest.raises(DomainError):
        sol1.fields(2 * T, np.array([0.1]))
    coarse = RadialGrid.geometric(1.0, 64, 0.25)
    with pytest.raises(ScaleUnresolved):
        eval_uN(sol1, T, coarse)
    g = default_physical_grid(sol1.params, T, n=512)
    u = eval_uN(sol1, T, g)
    other = SphereField(RadialGrid.geometric(1.0, 512, 0.5), u.samples, m=1, check=False)
    with pytest.raises(GridMismatch):
        proximity_norms(u, other, T)
    with pytest.raises(GridMismatch):
        proximity_norms(u, object(), T)
    assert proximity_norms(u, sol1, T)["H1"] == 0.0


def test_dumps(sol1, tmp_path):
    g = default_physical_grid(sol1.params, T, n=512)
    path = dump_uN(tmp_path / "u.csv", sol1, T, g)
    header, cols = read_csv(path)
    assert header == ["r", "v1", "v2", "v3"]
    assert np.array_equal(cols[:, 0], g.nodes)
    _, norms = residual_rN(sol1, T, g)
    rec = json.loads(residual_report(tmp_path / "r.json", T, 1, norms).read_text())
    assert rec["N"] == 1 and rec["L2"] == norms["L2"]


def test_overlap_mismatch_shrinks(sol2):
    ts = [T * 2.0 ** -k for k in range(4)]
    inner = [overlap_mismatch(sol2, t) for t in ts]
    assert all(b < a for a, b in zip(inner, inner[1:]))
    remote = [overlap_mismatch(sol2, t, which="remote") for t in ts]
    assert all(b < a for a, b in zip(remote, remote[1:]))
    assert remote[0] < 0.05
    with pytest.raises(ValueError):
        overlap_mismatch(sol2, T, which="core")
