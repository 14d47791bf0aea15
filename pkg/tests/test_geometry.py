import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.errors import ConfigError, GridMismatch, GridTooCoarse, PoleError
from blowup_lab.geometry import (BlowupParams, LogGrid, RadialField, RadialGrid, SphereField,
                                 check_same_grid, degree, energy, fornberg_weights, log_slope,
                                 read_csv, sobolev_norm, sphere_to_stereo, stereo_project,
                                 stereo_to_sphere, stereo_unproject, taylor_slope, write_csv)
from blowup_lab.harmonic import harmonic_field

from conftest import random_smooth_field


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.geometric(12.0, 2048, 0.5)


def test_grid_construction_and_errors():
    g = RadialGrid.uniform(4.0, 101)
    assert g.r_max == 4.0 and len(g) == 101 and g.spacing_kind == "uniform"
    assert g.min_spacing() == pytest.approx(0.04)
    gg = RadialGrid.geometric(50.0, 512, 0.25)
    assert gg.nodes[0] == 0.0 and gg.r_max == 50.0
    assert np.all(np.diff(gg.nodes) > 0)
    assert gg.spacing_near(0.0) < gg.spacing_near(40.0)
    assert gg.describe() == {"kind": "geometric", "n": 512, "r_max": 50.0, "scale": 0.25}
    with pytest.raises(ConfigError):
        RadialGrid(np.linspace(0, 1, 4))
    with pytest.raises(ConfigError):
        RadialGrid(np.linspace(0.1, 1, 20))
    with pytest.raises(ConfigError):
        RadialGrid(np.r_[0.0, np.cumsum(np.linspace(0.1, 0.2, 20))])
    with pytest.raises(ConfigError):
        RadialGrid(np.linspace(0, 1, 20), kind="chebyshev")
    assert RadialGrid.build("uniform", 4.0, 101) == g


def test_derivative_oracles(grid):
    r = grid.nodes
    assert np.max(np.abs(grid.d1(np.sin(r), -1) - np.cos(r))) < 1e-8
    assert np.max(np.abs(grid.d2(np.sin(r), -1) + np.sin(r))) < 1e-6
    f0 = np.exp(-r * r)
    lap0 = (4 * r * r - 4) * f0
    assert np.max(np.abs(grid.laplacian(f0, 0) - lap0)) < 1e-6
    f1 = r * np.exp(-r * r)
    lap1 = (4 * r ** 3 - 8 * r) * np.exp(-r * r)
    assert np.max(np.abs(grid.laplacian(f1, 1) - lap1)) < 1e-6
    q = grid.over_r(np.sin(r), -1)
    assert q[0] == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(q[1:], np.sin(r[1:]) / r[1:])


def test_quadrature_oracles(grid):
    r = grid.nodes
    R = grid.r_max
    assert grid.integrate(np.exp(-r)) == pytest.approx(1 - np.exp(-R), rel=1e-12)
    assert grid.area_integral(np.exp(-r * r)) == pytest.approx(np.pi * (1 - np.exp(-R * R)),
                                                               rel=1e-12)
    assert np.max(np.abs(grid.cumulative(np.cos(r), 1) - np.sin(r))) < 1e-11
    assert np.max(np.abs(grid.cumulative(np.sin(r), -1) - 1 + np.cos(r))) < 1e-11


def test_sobolev_norm_oracles(grid):
    r = grid.nodes
    f = RadialField(grid, np.exp(-r * r), m=0)
    assert sobolev_norm(f, 0) == pytest.approx(np.sqrt(np.pi / 2), rel=1e-10)
    assert sobolev_norm(f, 0, weight="x") == pytest.approx(np.sqrt(3 * np.pi / 4), rel=1e-10)
    # |f'|^2 = 4 r^2 e^{-2r^2}: 2 pi int 4 r^3 e^{-2 r^2} dr = pi
    assert sobolev_norm(f, 1, homogeneous=True) == pytest.approx(np.sqrt(np.pi), rel=1e-8)
    assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(1.5 * np.pi), rel=1e-8)
    with pytest.raises(ConfigError):
        sobolev_norm(f, 4)
    with pytest.raises(ConfigError):
        sobolev_norm(f, 1, weight="x")
    tiny = RadialGrid.uniform(1.0, 10)
    with pytest.raises(GridTooCoarse):
        sobolev_norm(RadialField(tiny, np.zeros(10), m=0), 3)


def test_fornberg_weights_central():
    w = fornberg_weights(0.0, [-1.0, 0.0, 1.0], 2)
    assert np.allclose(w[1], [-0.5, 0.0, 0.5])
    assert np.allclose(w[2], [1.0, -2.0, 1.0])


def test_log_grid_oracles():
    g = LogGrid(1e-3, 2.0, 800)
    r = g.nodes
    assert np.max(np.abs(g.d1(r ** 3) / (3 * r * r) - 1)) < 1e-10
    assert np.max(np.abs(g.laplacian(r ** 3) / (9 * r) - 1)) < 1e-9
    assert np.max(np.abs(g.cumulative(r * r) - (r ** 3 - r[0] ** 3) / 3)) < 1e-12
    with pytest.raises(ConfigError):
        LogGrid(1.0, 0.5, 100)


def test_params_validation():
    p = BlowupParams(nu=1.5, alpha0=0.7)
    assert p.eps1 == 0.75 and p.eps2 == 0.25 and p.delta == 0.2
    assert p.d == complex(0.7, -2.0)
    assert p.lam(0.25) == pytest.approx(16.0)
    assert p.alpha(np.e) == pytest.approx(0.7)
    for bad in (dict(nu=0.5), dict(nu=1.5, eps2=0.6), dict(nu=1.5, eps1=2.0),
                dict(nu=1.5, delta=0.0), dict(nu=1.5, order_N=0), dict(nu=1.5, order_N=1.5)):
        with pytest.raises(ConfigError):
            BlowupParams(**bad)
    q = p.replace(nu=2.0)
    assert q.eps1 == 1.0 and q.alpha0 == 0.7
    assert BlowupParams.unchecked(nu=0.5).nu == 0.5
    assert p.as_dict()["order_N"] == 1


def test_sphere_field_checks(grid):
    n = len(grid)
    with pytest.raises(GridMismatch):
        SphereField(grid, np.zeros((n - 1, 3)))
    with pytest.raises(ConfigError):
        SphereField(grid, np.ones((n, 3)))
    bad = np.zeros((n, 3))
    bad[:, 0] = 1.0
    with pytest.raises(ConfigError):
        SphereField(grid, bad)
    k = SphereField.constant(grid)
    assert k.unit_error() == 0.0 and abs(energy(k)) < 1e-20 and degree(k) == 0.0
    with pytest.raises(GridMismatch):
        check_same_grid(grid, RadialGrid.geometric(12.0, 1024, 0.5))


def test_stereo_pole_handling(grid):
    phi = harmonic_field(grid, 1)
    w = stereo_project(phi)
    assert w.pole_mask[0] and not np.any(w.pole_mask[1:])
    with pytest.raises(PoleError):
        stereo_unproject(w)


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_stereo_roundtrip(w):
    v = stereo_to_sphere(np.array([w]))
    assert abs(np.linalg.norm(v) - 1.0) < 1e-14
    back, mask = sphere_to_stereo(v)
    assert not mask[0]
    assert abs(back[0] - w) <= 1e-12 * max(1.0, abs(w) ** 2)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=20))
@settings(max_examples=50)
def test_csv_roundtrip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    a = np.array(values)
    write_csv(path, ["a", "b"], [a, -a])
    header, data = read_csv(path)
    assert header == ["a", "b"]
    assert np.array_equal(data[:, 0], a) and np.array_equal(data[:, 1], -a)


@pytest.mark.parametrize("m", [1, 2])
def test_harmonic_energy_and_degree(m):
    g = RadialGrid.geometric()
    f = harmonic_field(g, m)
    assert energy(f) == pytest.approx(4 * np.pi * m, rel=1e-4)
    assert degree(f) == pytest.approx(m, abs=1e-4)


@given(st.floats(-np.pi, np.pi))
@settings(max_examples=25, deadline=None)
def test_energy_rotation_invariant(beta):
    g = RadialGrid.geometric(50.0, 512, 0.5)
    f = harmonic_field(g, 1, lam=2.0)
    assert energy(f.rotated(beta)) == pytest.approx(energy(f), rel=1e-12)


@given(st.lists(st.floats(-1.5, 1.5), min_size=7, max_size=7), st.sampled_from([1, 2]))
@settings(max_examples=40, deadline=None)
def test_bogomolny_bound(coef, m):
    g = RadialGrid.geometric(200.0, 2048, 0.5)
    u = random_smooth_field(g, coef, m)
    assert energy(u) >= 4 * np.pi * abs(degree(u)) * (1 - 1e-6)


def test_slopes():
    x = np.geomspace(1e-3, 1.0, 20)
    assert log_slope(x, 3 * x ** 2.5) == pytest.approx(2.5)
    assert taylor_slope(x, x ** 3, 1e-3, 1e-1) == pytest.approx(3.0)
