"""Inner region: the expansion ``z = sum_k T^k z^k`` with ``T = t^(2 nu)``.

The perturbation of the bubble ``Q = (h1, 0, h3)`` is written in the moving
frame ``f1 = (-h3, 0, h1)``, ``f2 = Q x f1 = (0, -1, 0)``:

    V = (1 + gamma) Q + z1 f1 + z2 f2,   gamma = sqrt(1 - |z|^2) - 1.

With this orientation the profile equation reads ``X = 0`` where

    X = -i t^(1+2nu) z_t + alpha0 T h3 z + i(1/2 + nu) T rho z_rho
        - d T h1 + L z + F(z)

and ``F`` collects the terms that are at least quadratic in ``z``.  The
coefficient of ``T^k`` gives ``L z^k = F_k`` with ``F_1 = d h1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.special import binom

from .errors import DomainError, SeriesTruncationError
from .geometry import BlowupParams, RadialField, RadialGrid, write_csv
from .harmonic import HarmonicProfile
from .linop import KernelPair, default_inner_grid, solve_zero_ic

_Q = HarmonicProfile(1)


# ---------------------------------------------------------------------------
# truncated power series in T with grid-array coefficients


def _tmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    k = a.shape[0]
    for i in range(k):
        if not np.any(a[i]):
            continue
        for j in range(k - i):
            out[i + j] += a[i] * b[j]
    return out


def _tshift(a: np.ndarray, by: int = 1) -> np.ndarray:
    out = np.zeros_like(a)
    out[by:] = a[:-by]
    return out


def _sqrt_series(w: np.ndarray) -> np.ndarray:
    """``sqrt(1 - w) - 1`` for a series ``w`` without constant term."""
    k = w.shape[0]
    out = np.zeros_like(w)
    p = np.zeros_like(w)
    p[0] = 1.0
    for n in range(1, k):
        p = _tmul(p, -w)
        if not np.any(p):
            break
        out += binom(0.5, n) * p
    return out


def _gamma_exact(zz: np.ndarray) -> np.ndarray:
    """``sqrt(1 - |z|^2) - 1`` without cancellation."""
    return -zz / (1.0 + np.sqrt(1.0 - zz))


class _Ops:
    """Radial operators shared by the recurrence and the residual."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        rho = grid.nodes
        self.rho = rho
        self.h1 = _Q.h1(rho)
        self.h3 = _Q.h3(rho)
        self.q = _Q.h1_over_r(rho)

    def rho_dz(self, z):
        """``rho z_rho`` for odd z."""
        g = self.grid
        return g.nodes.reshape((-1,) + (1,) * (np.ndim(z) - 1)) * g.d1(z, -1)

    def nonlinear(self, z, lz, gam):
        """Quadratic remainder ``F`` (without the ``-d T gamma h1`` term).

        ``z``, ``lz`` and ``gam`` are either plain samples or series
        stacks (leading axis = T power); products are taken pointwise or as
        truncated series accordingly.
        """
        g = self.grid
        series = np.ndim(z) == 2
        mul = _tmul if series else np.multiply
        ax = (lambda f: np.moveaxis(f, 0, -1)) if series else (lambda f: f)
        bx = (lambda f: np.moveaxis(f, -1, 0)) if series else (lambda f: f)
        z1 = z.real
        dz1 = bx(g.d1(ax(z1), -1))
        z1_rr = bx(g.over_r(g.over_r(ax(z1), -1), 1))
        lap_g = bx(g.laplacian(ax(gam), 0, 1))
        dg = bx(g.d1(ax(gam), 1))
        bracket = lap_g - 2.0 * self.q * dz1 + 2.0 * self.h1 * self.h3 * z1_rr
        one = np.zeros_like(gam)
        if series:
            one[0] = 1.0
        else:
            one = one + 1.0
        return mul(gam, lz) + mul(z, bracket) - 2.0 * self.q * mul(one + gam, dg)


# ---------------------------------------------------------------------------


@dataclass
class InnerExpansion:
    """Coefficient functions ``z^k`` and their forcings ``F_k = L z^k``."""

    params: BlowupParams
    grid: RadialGrid
    layers: list = field(default_factory=list)
    forcings: list = field(default_factory=list)
    _splines: list = field(default_factory=list, repr=False, compare=False)

    @property
    def d(self) -> complex:
        return self.params.d

    @property
    def order(self) -> int:
        return len(self.layers)

    def stack(self) -> np.ndarray:
        """Series stack ``[0, z^1, ..., z^N]``."""
        n = len(self.grid)
        out = np.zeros((self.order + 1, n), dtype=complex)
        for k, z in enumerate(self.layers, start=1):
            out[k] = z.values
        return out

    def z(self, t: float) -> np.ndarray:
        T = t ** (2.0 * self.params.nu)
        out = np.zeros(len(self.grid), dtype=complex)
        for k, zk in enumerate(self.layers, start=1):
            out += T ** k * zk.values
        return out

    def tau_zt(self, t: float) -> np.ndarray:
        """``t^(1+2nu) z_t``, exact for the finite power sum."""
        nu = self.params.nu
        T = t ** (2.0 * nu)
        out = np.zeros(len(self.grid), dtype=complex)
        for k, zk in enumerate(self.layers, start=1):
            out += 2.0 * nu * k * T ** (k + 1) * zk.values
        return out

    def z_t(self, t: float) -> np.ndarray:
        return self.tau_zt(t) / t ** (1.0 + 2.0 * self.params.nu)

    def z_at(self, rho, t: float):
        """``(z, z_rho, z_t)`` at arbitrary radii by quintic splines of the layers."""
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.grid.r_max):
            raise DomainError("radius outside the inner grid")
        if len(self._splines) != self.order:
            self._splines[:] = [make_interp_spline(self.grid.nodes, zk.values, k=5)
                                for zk in self.layers]
        nu = self.params.nu
        T = t ** (2.0 * nu)
        z = np.zeros(rho.shape, dtype=complex)
        zr = np.zeros_like(z)
        zt = np.zeros_like(z)
        for k, sp in enumerate(self._splines, start=1):
            v = sp(rho)
            z += T ** k * v
            zr += T ** k * sp(rho, 1)
            zt += 2.0 * nu * k * T ** k / t * v
        return z, zr, zt

    def V_at(self, rho, t: float):
        """``(V, V_rho, V_t)`` of ``V = (1 + gamma) Q + z1 f1 + z2 f2``, each (n, 3)."""
        rho = np.asarray(rho, dtype=float)
        z, zr, zt = self.z_at(rho, t)
        zz = np.abs(z) ** 2
        if np.any(zz >= 1.0):
            raise DomainError("|z| >= 1: the inner profile is undefined")
        sq = np.sqrt(1.0 - zz)
        gam = _gamma_exact(zz)
        g_r = -np.real(np.conj(z) * zr) / sq
        g_t = -np.real(np.conj(z) * zt) / sq
        Q, f1, f2 = frame(rho)
        dh1, dh3 = _Q.dh1(rho), _Q.dh3(rho)
        zero = np.zeros_like(dh1)
        dQ = np.stack([dh1, zero, dh3], axis=-1)
        df1 = np.stack([-dh3, zero, dh1], axis=-1)
        V = (1.0 + gam)[:, None] * Q + z.real[:, None] * f1 + z.imag[:, None] * f2
        Vr = (g_r[:, None] * Q + (1.0 + gam)[:, None] * dQ + zr.real[:, None] * f1
              + z.real[:, None] * df1 + zr.imag[:, None] * f2)
        Vt = g_t[:, None] * Q + zt.real[:, None] * f1 + zt.imag[:, None] * f2
        return V, Vr, Vt

    def perturbation_at(self, rho, t: float) -> np.ndarray:
        """``V - Q = gamma Q + z1 f1 + z2 f2`` without cancellation, shape (n, 3)."""
        rho = np.asarray(rho, dtype=float)
        z, _, _ = self.z_at(rho, t)
        Q, f1, f2 = frame(rho)
        gam = _gamma_exact(np.abs(z) ** 2)
        return gam[:, None] * Q + z.real[:, None] * f1 + z.imag[:, None] * f2

    def window_radius(self, t: float) -> float:
        p = self.params
        return 10.0 * t ** (-p.nu + p.eps1)

    def envelope_ratio(self, k: int) -> float:
        """Largest ``|z^k| / (C rho^(2k-1) ln(2+rho)^(2k))`` over the outer half,
        with C fixed at ``rho_max/2``."""
        rho = self.grid.nodes
        env = rho ** (2 * k - 1) * np.log(2.0 + rho) ** (2 * k)
        a = np.abs(self.layers[k - 1].values)
        half = self.grid.r_max / 2.0
        i0 = int(np.searchsorted(rho, half))
        c = a[i0] / env[i0]
        sel = rho >= half
        return float(np.max(a[sel] / (c * env[sel])))

    def gamma_tail(self, t: float, lo_frac: float = 0.5) -> float:
        """Size of the neglected part of the gamma series at time t (outer grid)."""
        T = t ** (2.0 * self.params.nu)
        stack = self.stack()
        zz = _tmul(stack, stack.conj())
        gs = _sqrt_series(zz)
        powers = T ** np.arange(gs.shape[0])
        approx = np.tensordot(powers, gs, axes=(0, 0))
        zt = self.z(t)
        with np.errstate(invalid="ignore"):
            exact = _gamma_exact(np.abs(zt) ** 2)
        sel = self.grid.nodes >= lo_frac * self.grid.r_max
        err = np.abs(exact - approx)[sel]
        # |z| >= 1 leaves gamma undefined: the series is certainly inadequate
        return float(np.max(err)) if np.all(np.isfinite(err)) else float("inf")

    def export_csv(self, directory) -> list:
        """One ``rho,re_zk,im_zk`` file per layer."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, zk in enumerate(self.layers, start=1):
            p = directory / f"inner_z{k}.csv"
            write_csv(p, ["rho", f"re_z{k}", f"im_z{k}"], [zk.r, zk.values.real, zk.values.imag])
            paths.append(p)
        return paths


def build_inner(params: BlowupParams, grid: RadialGrid | None = None,
                t_check: float | None = None) -> InnerExpansion:
    """Solve ``L z^k = F_k``, ``z^k(0) = z^k'(0) = 0`` for k = 1..N.

    Parameters
    ----------
    params : BlowupParams
    grid : RadialGrid, optional
        Inner grid in rho (default ``default_inner_grid()``); must reach 10.
    t_check : float, optional
        If given, raise ``SeriesTruncationError`` when the neglected part of
        the gamma series exceeds 1e-12 at the grid edge at this time.
    """
    grid = default_inner_grid() if grid is None else grid
    if grid.r_max < 10.0:
        raise ValueError("inner grid must extend to rho >= 10")
    N = int(params.order_N)
    nu, a0, d = params.nu, params.alpha0, params.d
    ops = _Ops(grid)
    n = len(grid)
    exp = InnerExpansion(params, grid)

    f1 = d * ops.h1
    if d == 0:
        z1 = RadialField(grid, np.zeros(n, dtype=complex))
    else:
        z1 = solve_zero_ic(lambda s: d * KernelPair.h1(s), grid=grid)
        z1 = RadialField(grid, z1.values.astype(complex))
    exp.layers.append(z1)
    exp.forcings.append(f1.astype(complex))

    for k in range(2, N + 1):
        # series truncated at T^k, only layers < k are known
        z = np.zeros((k + 1, n), dtype=complex)
        lz = np.zeros_like(z)
        for j in range(1, k):
            z[j] = exp.layers[j - 1].values
            lz[j] = exp.forcings[j - 1]
        gam = _sqrt_series(_tmul(z, z.conj()).real.astype(complex))
        ft = ops.nonlinear(z, lz, gam) - d * _tshift(gam) * ops.h1
        zp = exp.layers[k - 2].values
        fk = (2j * nu * (k - 1) * zp - a0 * ops.h3 * zp
              - 1j * (0.5 + nu) * ops.rho_dz(zp) - ft[k])
        fk[0] = 0.0
        zk = solve_zero_ic(RadialField(grid, fk))
        exp.layers.append(RadialField(grid, zk.values.astype(complex)))
        exp.forcings.append(fk)

    if t_check is not None:
        tail = exp.gamma_tail(t_check)
        if tail > 1e-12:
            raise SeriesTruncationError(
                f"gamma series tail {tail:.3g} exceeds 1e-12 at t={t_check:g} for N={N}")
    return exp


@dataclass
class InnerProfile:
    expansion: InnerExpansion
    t: float
    z: np.ndarray
    Z: np.ndarray
    V: np.ndarray
    window: np.ndarray

    @property
    def grid(self) -> RadialGrid:
        return self.expansion.grid

    def stereo(self) -> np.ndarray:
        """``(V1 + i V2)/(1 + V3)``; infinite at the south pole (rho = 0)."""
        v = self.V
        with np.errstate(divide="ignore", invalid="ignore"):
            return (v[:, 0] + 1j * v[:, 1]) / (1.0 + v[:, 2])


def frame(rho) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Q, f1, f2)`` at the given radii, each of shape (n, 3)."""
    h1, h3 = _Q.h1(rho), _Q.h3(rho)
    zero = np.zeros_like(h1)
    Q = np.stack([h1, zero, h3], axis=-1)
    f1 = np.stack([-h3, zero, h1], axis=-1)
    f2 = np.stack([zero, -np.ones_like(h1), zero], axis=-1)
    return Q, f1, f2


def profile_from_z(rho, z) -> tuple[np.ndarray, np.ndarray]:
    """``(Z, V)`` for perturbation samples ``z`` (|z| < 1)."""
    Q, f1, f2 = frame(rho)
    gam = _gamma_exact(np.abs(z) ** 2)
    Z = z.real[:, None] * f1 + z.imag[:, None] * f2 + gam[:, None] * Q
    return Z, Q + Z


def eval_inner_profile(exp: InnerExpansion, t: float) -> InnerProfile:
    """Sphere-valued inner profile ``V_in = Q + Z_in`` at time t."""
    if t <= 0:
        raise DomainError("t must be positive")
    rho = exp.grid.nodes
    z = exp.z(t)
    win = rho <= exp.window_radius(t)
    if np.any(np.abs(z[win]) >= 1.0):
        raise DomainError(f"|z| >= 1 inside the validity window at t={t:g}")
    zc = np.where(np.abs(z) < 1.0, z, 0.0)
    Z, V = profile_from_z(rho, zc)
    return InnerProfile(exp, t, z, Z, V, win)


def inner_residual(exp: InnerExpansion, t: float) -> RadialField:
    """``X_N`` at time t, with ``L z`` taken from the exact forcings.

    Nodes where ``|z| >= 1`` (and their stencil neighbours) are NaN.
    """
    p = exp.params
    nu, a0, d = p.nu, p.alpha0, p.d
    T = t ** (2.0 * nu)
    ops = _Ops(exp.grid)
    z = exp.z(t)
    lz = np.zeros_like(z)
    for k, fk in enumerate(exp.forcings, start=1):
        lz += T ** k * fk
    zz = np.abs(z) ** 2
    # outside |z| < 1 the profile is undefined; NaN marks those nodes
    with np.errstate(invalid="ignore"):
        gam = np.where(zz < 1.0, _gamma_exact(np.minimum(zz, 1.0)), np.nan)
    ft = ops.nonlinear(z, lz, gam) - d * T * gam * ops.h1
    x = (-1j * exp.tau_zt(t) + a0 * T * ops.h3 * z + 1j * (0.5 + nu) * T * ops.rho_dz(z)
         - d * T * ops.h1 + lz + ft)
    x[0] = 0.0
    return RadialField(exp.grid, x)
