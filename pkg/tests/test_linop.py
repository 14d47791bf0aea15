import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.errors import QuadratureFailure, SingularOrigin
from blowup_lab.geometry import RadialField, RadialGrid
from blowup_lab.harmonic import HarmonicProfile
from blowup_lab.linop import (KernelPair, adaptive_simpson, apply_L, far_field_fit,
                              kernel_check_grid, potential, solve_zero_ic, wronskian_constant)

_Q = HarmonicProfile(1)


def _manufactured(rho):
    """``z = rho^3 e^{-rho^2}`` and ``L z``."""
    e = np.exp(-rho * rho)
    z = rho ** 3 * e
    lap1 = (8 * rho - 16 * rho ** 3 + 4 * rho ** 5) * e
    return z, -lap1 - 2.0 * _Q.h1_over_r(rho) ** 2 * z


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.geometric(30.0, 2048, 0.25)


def test_wronskian_value():
    # h1 ~ 2 rho and h2 ~ -1/rho at the origin give rho (h2 h1' - h1 h2') -> -4
    assert wronskian_constant() == pytest.approx(-4.0, abs=1e-12)
    assert np.allclose(KernelPair.wronskian(np.geomspace(1e-2, 1e3, 50)), -4.0, atol=1e-9)


def test_kernel_closed_forms():
    rho = np.array([1e-8, 1.0, 50.0])
    assert KernelPair.rho_h2(np.array([0.0]))[0] == -1.0
    assert KernelPair.h2(1.0) == pytest.approx(0.0)
    assert np.allclose(KernelPair.rho_h2(rho[1:]), rho[1:] * KernelPair.h2(rho[1:]))
    assert potential(1.0) == pytest.approx(-1.0)


def test_kernel_annihilated_by_L():
    g = kernel_check_grid()
    rho = g.nodes
    sel = (rho >= 0.1) & (rho <= 50)
    lh1 = apply_L(RadialField(g, KernelPair.h1(rho))).values
    h2 = np.zeros_like(rho)
    h2[1:] = KernelPair.h2(rho[1:])
    lh2 = apply_L(RadialField(g, h2), check_origin=False).values
    assert np.max(np.abs(lh1[sel])) < 1e-8
    assert np.max(np.abs(lh2[sel])) < 1e-7


def test_apply_L_guards(grid):
    with pytest.raises(SingularOrigin):
        apply_L(RadialField(grid, np.ones(len(grid))))
    with pytest.raises(TypeError):
        apply_L(np.zeros(len(grid)))


def test_manufactured_solution_sampled(grid):
    z, f = _manufactured(grid.nodes)
    got = solve_zero_ic(RadialField(grid, f)).values
    assert np.max(np.abs(got - z)) < 1e-9


def test_manufactured_solution_adaptive(grid):
    z, _ = _manufactured(grid.nodes)
    got = solve_zero_ic(lambda s: _manufactured(s)[1], grid=grid).values
    assert np.max(np.abs(got - z)) < 1e-9
    with pytest.raises(ValueError):
        solve_zero_ic(lambda s: s)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_solver_is_linear(a, b):
    g = RadialGrid.geometric(10.0, 256, 0.25)
    rho = g.nodes
    f1 = rho * np.exp(-rho)
    f2 = rho / (1 + rho ** 2)
    z1 = solve_zero_ic(RadialField(g, f1)).values
    z2 = solve_zero_ic(RadialField(g, f2)).values
    z = solve_zero_ic(RadialField(g, a * f1 + b * f2)).values
    assert np.allclose(z, a * z1 + b * z2, atol=1e-12 * (1 + np.max(np.abs(z))))


def test_adaptive_simpson():
    edges = np.linspace(0.0, 1.0, 11)
    panels = adaptive_simpson(np.sqrt, edges, atol=1e-9)
    assert panels.sum() == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert np.allclose(panels, (edges[1:] ** 1.5 - edges[:-1] ** 1.5) * 2 / 3, atol=1e-9)
    with pytest.raises(QuadratureFailure):
        adaptive_simpson(lambda x: 1 / np.sqrt(np.abs(x - 0.5) + 1e-300), edges, budget=100)


def test_far_field_fit_recovers_coefficients():
    g = RadialGrid.geometric(200.0, 4096, 0.25)
    rho = g.nodes
    c11, c10 = 0.3 - 1.1j, -0.8 + 0.2j
    with np.errstate(divide="ignore", invalid="ignore"):
        z = c11 * rho * np.log(rho) + c10 * rho + (2 + 1j) / rho + 0.5 * np.log(rho) / rho ** 3
    fit = far_field_fit(RadialField(g, z), 10.0, 180.0, n_tail=2)
    assert fit["c11"] == pytest.approx(c11, abs=1e-10)
    assert fit["c10"] == pytest.approx(c10, abs=1e-10)
    assert fit["residual"] < 1e-12
