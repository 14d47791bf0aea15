import numpy as np
import pytest
from scipy.integrate import quad

from blowup_lab.errors import DomainError, SeriesTruncationError
from blowup_lab.geometry import log_slope, taylor_slope
from blowup_lab.inner import (build_inner, eval_inner_profile, frame, inner_residual,
                              profile_from_z)
from blowup_lab.linop import KernelPair, apply_L, far_field_fit

from conftest import make_params


@pytest.fixture(scope="module")
def exp1():
    return build_inner(make_params(1))


@pytest.fixture(scope="module")
def exp2():
    return build_inner(make_params(2))


def _z1_quadrature(rho, d):
    """Closed variation-of-parameters form of the first layer."""
    i_a = quad(lambda s: s * (s ** 4 + 4 * s * s * np.log(s) - 1) / (1 + s * s) ** 2, 0, rho,
               epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    i_b = 0.5 * (np.log1p(rho * rho) + 1 / (1 + rho * rho) - 1)
    return d * rho / (1 + rho * rho) * i_a - d * KernelPair.h2(rho) * i_b


def test_first_layer_matches_quadrature(exp1):
    d = exp1.d
    rho = exp1.grid.nodes
    for r0 in (0.05, 0.5, 1.0, 3.0, 20.0, 60.0):
        i = int(np.argmin(np.abs(rho - r0)))
        ref = _z1_quadrature(rho[i], d)
        assert abs(exp1.layers[0].values[i] - ref) < 1e-9 * max(1.0, abs(ref))


def test_first_layer_solves_recurrence(exp2):
    rho = exp2.grid.nodes
    sel = (rho >= 0.01) & (rho <= 30)
    res = apply_L(exp2.layers[0]).values - exp2.d * KernelPair.h1(rho)
    assert np.max(np.abs(res[sel])) < 1e-6


def test_taylor_orders(exp2):
    rho = exp2.grid.nodes
    assert taylor_slope(rho, exp2.layers[0].values, 1e-3, 1e-2) == pytest.approx(3.0, abs=0.05)
    assert taylor_slope(rho, exp2.layers[1].values, 1e-2, 5e-2) == pytest.approx(5.0, abs=0.1)


def test_first_layer_far_field(exp1):
    # large-rho limit of the closed form: z1 ~ d rho - d rho ln rho
    fit = far_field_fit(exp1.layers[0], 20.0, 60.0, n_tail=2)
    assert fit["c10"] == pytest.approx(exp1.d, abs=1e-6)
    assert fit["c11"] == pytest.approx(-exp1.d, abs=1e-6)
    assert fit["residual"] < 1e-10


def test_linear_in_d():
    a = build_inner(make_params(1, alpha0=0.0))
    b = build_inner(make_params(1, alpha0=0.0, nu=2.0))
    ratio = b.d / a.d
    assert np.allclose(b.layers[0].values, ratio * a.layers[0].values, atol=1e-13)


def test_remainder_order_at_unit_radius(exp1, exp2):
    # the truncated series leaves O(T^(N+1)) at fixed rho
    ts = [2.0 ** -k for k in range(4, 9)]
    for exp, N in ((exp1, 1), (exp2, 2)):
        i = int(np.argmin(np.abs(exp.grid.nodes - 1.0)))
        x = [abs(inner_residual(exp, t).values[i]) for t in ts]
        assert log_slope(ts, x) == pytest.approx(2 * 1.5 * (N + 1), abs=0.2)


def test_time_derivative_exact(exp2):
    t, h = 1e-2, 1e-6
    fd = (exp2.z(t + h) - exp2.z(t - h)) / (2 * h)
    assert np.allclose(exp2.z_t(t), fd, rtol=1e-7, atol=1e-12)
    rho = np.array([0.3, 2.0, 10.0])
    z, zr, zt = exp2.z_at(rho, t)
    idx = [int(np.argmin(np.abs(exp2.grid.nodes - r))) for r in rho]
    assert np.allclose(z, exp2.z(t)[idx], rtol=1e-3)


def test_profile_reconstruction(exp2):
    t = 1e-2
    prof = eval_inner_profile(exp2, t)
    assert np.max(np.abs(np.linalg.norm(prof.V, axis=1) - 1)) < 1e-14
    rho = np.array([0.5, 1.0, 4.0])
    V, Vr, Vt = exp2.V_at(rho, t)
    Q, f1, f2 = frame(rho)
    assert np.allclose(exp2.perturbation_at(rho, t), V - Q, atol=1e-15)
    assert np.allclose(np.einsum("ij,ij->i", Q, f1), 0) and np.allclose(np.cross(Q, f1), f2)
    _, V2 = profile_from_z(rho, np.zeros(3, dtype=complex))
    assert np.array_equal(V2, Q)
    with pytest.raises(DomainError):
        eval_inner_profile(exp2, 0.0)
    with pytest.raises(DomainError):
        exp2.z_at(np.array([exp2.grid.r_max * 2]), t)


def test_gamma_series_tail():
    p = make_params(2)
    exp = build_inner(p, t_check=1e-4)
    assert exp.gamma_tail(1e-4) < 1e-12
    with pytest.raises(SeriesTruncationError):
        build_inner(p, t_check=0.5)


def test_export(exp2, tmp_path):
    paths = exp2.export_csv(tmp_path)
    assert [p.name for p in paths] == ["inner_z1.csv", "inner_z2.csv"]
    assert paths[0].read_text().startswith("rho,re_z1,im_z1\n")
