import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.errors import DomainError, FitIllConditioned, SeriesDivergence
from blowup_lab.selfsim import (Laurent, basis_near_zero, build_selfsim, far_exponents,
                                far_window, kappa_j, kummer_far_coefficients, laurent_solve,
                                layer_residual, mu_j)

from conftest import make_params

coef = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


def _ode_defect(mu, f, df, d2f, y):
    return -(d2f + df / y) + f / y ** 2 + 0.5j * y * df - mu * f


def test_layer_constants():
    p = make_params(1)
    assert mu_j(p, 0) == complex(-0.7, 1.5)
    assert mu_j(p, 1) == complex(-0.7, 4.5)
    assert kappa_j(p, 0) == pytest.approx(complex(0.35, -1.0))
    assert far_exponents(p, 0) == (pytest.approx(-2j * mu_j(p, 0)),
                                   pytest.approx(-2 + 2j * mu_j(p, 0)))


@given(st.lists(coef, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=4),
       st.integers(-3, 3), st.integers(-3, 3), st.floats(0.3, 1.5))
@settings(max_examples=60)
def test_laurent_algebra(ca, cb, la, lb, y):
    a, b = Laurent(la, ca), Laurent(lb, cb)
    scale = 1 + abs(a(y)) * abs(b(y)) + abs(a(y)) + abs(b(y))
    assert abs((a * b)(y) - a(y) * b(y)) < 1e-10 * scale
    assert abs((a + b)(y) - a(y) - b(y)) < 1e-10 * scale
    assert abs((a - b)(y) - a(y) + b(y)) < 1e-10 * scale
    assert abs(a.shift(2)(y) - y * y * a(y)) < 1e-10 * scale
    h = 1e-5
    fd = (a(y + h) - a(y - h)) / (2 * h)
    assert abs(a.d(y) - fd) < 1e-5 * (1 + abs(fd) + abs(a(y)))
    assert a.conj()(y) == pytest.approx(np.conj(a(y)))


def test_laurent_solve_and_basis():
    p = make_params(1)
    mu = mu_j(p, 0)
    with pytest.raises(ValueError):
        laurent_solve(mu, Laurent(0, [1.0]))
    y = np.array([0.3, 0.5, 1.0, 1.8])
    e1, e2, d1, d2 = basis_near_zero(p, 0, y)
    h = 1e-4
    for k, f in ((0, e1), (1, e2)):
        fp = basis_near_zero(p, 0, y + h)[k]
        fm = basis_near_zero(p, 0, y - h)[k]
        df = (fp - fm) / (2 * h)
        ddf = (fp - 2 * f + fm) / h ** 2
        defect = _ode_defect(mu, f, df, ddf, y)
        assert np.max(np.abs(defect)) < 1e-5
    small = np.array([1e-3])
    assert basis_near_zero(p, 0, small)[0][0] / small[0] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(SeriesDivergence):
        basis_near_zero(p, 0, np.array([3.0]))


def test_boundary_data_from_first_layer(sol1):
    # the far field z1 ~ d rho - d rho ln rho gives a0 = d/2, b0 = -d/2
    d = sol1.params.d
    a0, b0 = sol1.matching["boundary"][0]
    assert a0 == pytest.approx(d / 2, abs=1e-10)
    assert b0 == pytest.approx(-d / 2, abs=1e-10)


@pytest.mark.parametrize("jl", [(0, 1), (0, 0), (1, 3), (1, 2), (1, 1), (1, 0)])
def test_layer_equations(sol2, jl):
    assert layer_residual(sol2.selfsim, *jl, lo=1.0, hi=30.0) < 1e-7


def test_inverse_coefficients(sol1):
    ss = sol1.selfsim
    k0 = kappa_j(sol1.params, 0)
    assert ss.W(0, 1).inverse_coefficient() == 0
    assert ss.W(0, 0).inverse_coefficient() == pytest.approx(ss.a[0] / k0, rel=1e-10)


def test_far_coefficients_match_kummer(sol1):
    ss = sol1.selfsim
    A, B = kummer_far_coefficients(sol1.params, 0)
    info = ss.fit_info
    a0 = ss.a[0]
    assert info["A01"] / a0 == pytest.approx(A, rel=1e-6)
    assert info["B01"] / a0 == pytest.approx(B, rel=1e-6)
    assert max(info["residual"].values()) < 1e-9


def test_eval_derivatives(sol2):
    ss = sol2.selfsim
    y = np.array([0.2, 1.0, 5.0, 20.0])
    t = 1e-3
    w, wy, wt = ss.eval(y, t, with_derivs=True)
    h = 1e-6
    assert np.allclose(wy, (ss.eval(y + h, t) - ss.eval(y - h, t)) / (2 * h), rtol=1e-6)
    ht = 1e-9
    assert np.allclose(wt, (ss.eval(y, t + ht) - ss.eval(y, t - ht)) / (2 * ht), rtol=1e-5)


def test_domain_guards(sol1):
    W = sol1.selfsim.W(0, 0)
    with pytest.raises(DomainError):
        W(np.array([0.0]))
    with pytest.raises(DomainError):
        W(np.array([2 * sol1.selfsim.y_max]))
    with pytest.raises(ValueError):
        build_selfsim(sol1.params, {0: (1.0, 0.0)}, j_max=2)
    with pytest.raises(FitIllConditioned):
        far_window(10.0, lo=14.0)


def test_export(sol1, tmp_path):
    paths = sol1.selfsim.export_csv(tmp_path)
    assert sorted(p.name for p in paths) == ["selfsim_W00.csv", "selfsim_W01.csv"]
