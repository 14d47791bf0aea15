import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.geometry import RadialGrid
from blowup_lab.harmonic import (HarmonicProfile, eval_profile, harmonic_field, kappa,
                                 stationarity_defect)


@given(st.floats(0.0, 1e3), st.integers(1, 4))
def test_profile_on_sphere(r, m):
    p = HarmonicProfile(m)
    assert p.h1(r) ** 2 + p.h3(r) ** 2 == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.05, 20.0), st.integers(1, 3))
@settings(max_examples=50)
def test_derivatives_match_differences(r, m):
    p = HarmonicProfile(m)
    h = 1e-3 * r
    for f, df, d2f in ((p.h1, p.dh1, p.d2h1), (p.h3, p.dh3, p.d2h3)):
        fd1 = (f(r - 2 * h) - 8 * f(r - h) + 8 * f(r + h) - f(r + 2 * h)) / (12 * h)
        fd2 = (-f(r - 2 * h) + 16 * f(r - h) - 30 * f(r) + 16 * f(r + h) - f(r + 2 * h)) / (12 * h * h)
        assert df(r) == pytest.approx(fd1, rel=1e-7, abs=1e-9)
        assert d2f(r) == pytest.approx(fd2, rel=1e-4, abs=1e-6)


def test_closed_forms():
    p = HarmonicProfile(1)
    assert p.h1(1.0) == 1.0 and p.h3(1.0) == 0.0
    assert p.h1_over_r(0.0) == 2.0
    assert kappa(0.0) == -8.0
    assert kappa(1.0) == pytest.approx(-2.0)
    h1, h3, d1, d3 = eval_profile(2, np.array([0.0, 1.0]))
    assert np.allclose(h1, [0, 1]) and np.allclose(h3, [-1, 0])
    assert HarmonicProfile(1).vector(np.array([0.0])).tolist() == [[0.0, 0.0, -1.0]]


@pytest.mark.parametrize("m", [1, 2])
def test_discrete_stationarity(m):
    g = RadialGrid.geometric(50.0, 2048, 0.25)
    assert np.max(np.abs(stationarity_defect(g, m))) < 1e-6


def test_harmonic_field_symmetries():
    g = RadialGrid.geometric(50.0, 512, 0.25)
    f = harmonic_field(g, 1, lam=3.0, alpha=0.4)
    assert f.unit_error() < 1e-15
    base = harmonic_field(g, 1, lam=3.0)
    assert np.allclose(f.rotated(-0.4).samples, base.samples, atol=1e-15)
    i = np.searchsorted(g.nodes, 1 / 3.0)
    assert abs(base.v3[i]) < 0.01
