import numpy as np
import pytest

from blowup_lab.errors import ConfigError, FitDiverged, StepRejected
from blowup_lab.evolve import (COLUMNS, DtPolicy, FlowState, ModulationFit, RunReport,
                               fit_modulation, integrate, orbit, stability_dt, step)
from blowup_lab.geometry import RadialGrid, SphereField, degree, energy, log_slope, read_csv
from blowup_lab.harmonic import harmonic_field


def _bumped(g, amp=0.3):
    """The unit bubble with a smooth localized bump, renormalized onto the sphere."""
    phi = harmonic_field(g, 1)
    r = g.nodes
    v = phi.samples.copy()
    b = amp * np.exp(-(r - 2) ** 2) * r / (1 + r)
    v[:, 0] += b
    v[:, 1] += 0.5 * b
    v[-1] = phi.samples[-1]
    return SphereField(g, v / np.linalg.norm(v, axis=1)[:, None])


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.geometric(50.0, 256, 1.0)


def test_stationary_maps(grid):
    phi = harmonic_field(grid, 1)
    s = FlowState(0.0, phi)
    for _ in range(5):
        s = step(s, 0.01)
    # the coarse grid makes phi stationary only up to truncation error
    assert np.max(np.abs(s.v.samples - phi.samples)) < 1e-9
    const = np.zeros((len(grid), 3))
    const[:, 2] = 1.0
    s = step(FlowState(0.0, SphereField(grid, const)), 0.1)
    assert np.array_equal(s.v.samples, const)


def test_conservation(grid):
    u = _bumped(grid)
    dt = stability_dt(grid)
    s = FlowState(0.0, u)
    for _ in range(100):
        s = step(s, dt)
    assert abs(energy(s.v) - energy(u)) < 1e-7 * energy(u)
    assert abs(degree(s.v) - degree(u)) < 1e-10
    assert np.max(np.abs(np.linalg.norm(s.v.samples, axis=1) - 1)) < 1e-12
    assert s.t == pytest.approx(100 * dt)
    assert np.max(np.abs(s.v.samples - u.samples)) > 1e-6


def test_time_reversal(grid):
    u = _bumped(grid)
    s = FlowState(0.0, u)
    for _ in range(10):
        s = step(s, 0.01)
    for _ in range(10):
        s = step(s, -0.01)
    assert np.max(np.abs(s.v.samples - u.samples)) < 1e-11
    assert abs(s.t) < 1e-15


@pytest.mark.parametrize("lam,alpha", [(1.0, 0.0), (3.7, 0.4), (0.2, -2.5)])
def test_fit_recovers_orbit(lam, alpha):
    g = RadialGrid.geometric(100.0, 1024, 0.05)
    v = SphereField(g, orbit(g, lam, alpha))
    fit = fit_modulation(v)
    assert fit.lam == pytest.approx(lam, rel=1e-10)
    assert fit.alpha == pytest.approx(alpha, abs=1e-10)
    assert fit.residual < 1e-10


def test_fit_scale_law():
    g = RadialGrid.geometric(100.0, 1024, 0.01)
    ts = np.array([0.1, 0.05, 0.025, 0.0125])
    lams = [fit_modulation(SphereField(g, orbit(g, t ** -2.0, 0.0))).lam for t in ts]
    assert log_slope(ts, lams) == pytest.approx(-2.0, abs=1e-6)


def test_fit_guards():
    with pytest.raises(FitDiverged):
        ModulationFit(-1.0, 0.0, 0.0)


def test_dt_policy(grid):
    assert DtPolicy().step_size(grid) == stability_dt(grid)
    assert DtPolicy("fixed", dt=-0.5).step_size(grid) == 0.5
    with pytest.raises(ConfigError):
        DtPolicy("fixed").step_size(grid)
    with pytest.raises(ConfigError):
        DtPolicy("adaptive").step_size(grid)


def test_report_monotone():
    rep = RunReport()
    rep.add({"t": 0.0})
    rep.add({"t": 1.0})
    with pytest.raises(ValueError):
        rep.add({"t": 0.5})
    with pytest.raises(ValueError):
        rep.add({"t": 1.0})


def test_integrate_budget_and_csv(grid, tmp_path):
    s0 = FlowState(0.0, _bumped(grid))
    s, rep = integrate(s0, 1.0, DtPolicy("fixed", dt=0.01), max_steps=6)
    assert not rep.completed and rep.steps == 6 and rep.planned_steps == 100
    assert rep.reach == pytest.approx(0.06)
    assert list(rep.column("t")) == pytest.approx([0, 0.01, 0.02, 0.04, 0.06])
    assert np.all(np.isfinite(rep.column("lambda_fit")))
    rep.to_csv(tmp_path / "traj.csv")
    header, data = read_csv(tmp_path / "traj.csv")
    assert header == COLUMNS and data.shape == (5, len(COLUMNS))
    back, rep2 = integrate(s, 0.0, DtPolicy("fixed", dt=0.01))
    assert rep2.completed and back.t == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConfigError):
        integrate(s0, 0.0)


def test_step_below_time_resolution(grid):
    s0 = FlowState(1.0, _bumped(grid))
    with pytest.raises(StepRejected):
        integrate(s0, 1.0 + 1e-9, DtPolicy("fixed", dt=1e-17))
