"""Global approximate solution ``u^(N)`` glued from the three regions.

In the stereographic chart of the physical profile, with ``x1 = t^(-1/2-eps1) r``
and ``x2 = t^(eps2-1/2) r``,

    w = theta(x1) w_in + (1 - theta(x1)) theta(x2) w_ss + (1 - theta(x2)) w_rem,

where ``w_in = e^(i alpha) (V1 + i V2)/(1 + V3)`` at ``rho = lambda r``,
``w_ss = e^(i alpha) W_ss(r / sqrt t, t)`` and ``w_rem`` is the remote profile.
For ``x1 <= 1/2`` the inner profile is used directly on the sphere, which
keeps the south pole at r = 0 out of the chart.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, GridMismatch, ScaleUnresolved
from .geometry import (BlowupParams, RadialField, RadialGrid, SphereField, check_same_grid,
                       sobolev_norm, write_csv)
from .harmonic import HarmonicProfile
from .inner import InnerExpansion, build_inner
from .linop import default_inner_grid
from .remote import RemoteLayer, build_remote, cutoff_theta, eval_remote
from .selfsim import SelfSimilarLayer, build_selfsim, far_field_fit, match_boundary_data


@dataclass
class ApproximateSolution:
    params: BlowupParams
    inner: InnerExpansion
    selfsim: SelfSimilarLayer
    remote: RemoteLayer
    t_min: float = 2.0 ** -20
    matching: dict = field(default_factory=dict)
    _threshold: float | None = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.params.order_N

    def threshold(self) -> float:
        """Largest dyadic t at which every region window is valid (cached)."""
        if self._threshold is None:
            self._threshold = _threshold(self)
        return self._threshold

    def fields(self, t: float, r: np.ndarray):
        """``(v, v_t)`` at radii r, each of shape (n, 3)."""
        v, vt, _ = _glued(self, t, np.asarray(r, dtype=float))
        return v, vt

    def split_fields(self, t: float, r: np.ndarray):
        """``(v, v_t, q, p)`` with ``q = e^(alpha R) Q(lambda r)`` the bubble and
        ``p = v - q``; in the core p is formed directly from the inner corrections."""
        r = np.asarray(r, dtype=float)
        v, vt, p = _glued(self, t, r)
        q = _bubble(self.params, t, r)
        bad = np.isnan(p[:, 0])
        p[bad] = v[bad] - q[bad]
        return v, vt, q, p


@dataclass
class StaticSolution:
    """A time-independent equivariant map (harmonic profile or constant)."""

    profile: HarmonicProfile | None = None
    scale: float = 1.0

    def fields(self, t: float, r: np.ndarray):
        r = np.asarray(r, dtype=float)
        if self.profile is None:
            v = np.zeros((len(r), 3))
            v[:, 2] = 1.0
        else:
            v = self.profile.vector(self.scale * r)
        return v, np.zeros_like(v)


def _inner_grid_for(params: BlowupParams, t_min: float) -> RadialGrid:
    rho_max = max(1000.0, 2.5 * t_min ** (-params.nu + params.eps1))
    n = int(4096 * np.arcsinh(rho_max / 0.25) / np.arcsinh(256.0))
    return default_inner_grid(rho_max, n)


def build_approximate_solution(params: BlowupParams, t_min: float = 2.0 ** -20,
                               cutoff: bool = True) -> ApproximateSolution:
    """Inner expansion, matched self-similar layer and remote layer for ``order_N``."""
    N = params.order_N
    j_max = 1 if N >= 2 else 0
    inner = build_inner(params, _inner_grid_for(params, t_min))
    m = match_boundary_data(inner, j_max=j_max)
    bnd = {j: m[j] for j in range(j_max + 1)}
    y_max = max(40.0, 2.5 * t_min ** (-params.eps2))
    ss = build_selfsim(params, bnd, j_max=j_max, y_max=y_max)
    ff = far_field_fit(ss)
    rem = build_remote(params, ff["beta0"], ff["beta1"], k_max=min(N, 2), cutoff=cutoff)
    info = {"boundary": bnd, "beta0": ff["beta0"], "beta1": ff["beta1"],
            "fit_residual": ff["residual"], "cond": m["cond"]}
    return ApproximateSolution(params, inner, ss, rem, t_min, info)


def _threshold(sol: ApproximateSolution) -> float:
    p = sol.params
    nu, e1, e2 = p.nu, p.eps1, p.eps2
    k = 1
    while True:
        t = 2.0 ** -k
        if t < sol.t_min:
            raise DomainError(f"no admissible dyadic time above t_min = {sol.t_min:g}")
        ok = 2.0 * t ** (e1 + e2) <= 1.0
        ok &= 2.0 * t ** (-nu + e1) <= sol.inner.grid.r_max
        ok &= 2.0 * t ** (-e2) <= sol.selfsim.y_max
        ok &= t ** (0.5 - e2) / 10.0 >= sol.remote.grid.r_min
        # the self-similar/remote overlap must sit where f0 is not cut off
        ok &= 2.0 * t ** (0.5 - e2) <= p.delta
        if ok:
            rho = sol.inner.grid.nodes
            win = rho <= 2.0 * t ** (-nu + e1)
            ok = bool(np.all(np.abs(sol.inner.z(t)[win]) < 1.0))
        if ok:
            return t
        k += 1


def _bubble(params: BlowupParams, t: float, r: np.ndarray) -> np.ndarray:
    rho = t ** (-0.5 - params.nu) * r
    Q = HarmonicProfile(1).vector(rho)
    c, s = np.cos(params.alpha0 * np.log(t)), np.sin(params.alpha0 * np.log(t))
    return np.column_stack([c * Q[:, 0] - s * Q[:, 1], s * Q[:, 0] + c * Q[:, 1], Q[:, 2]])


def _stereo_and_dt(V, Vdot):
    den = 1.0 + V[:, 2]
    num = V[:, 0] + 1j * V[:, 1]
    # the south pole (den = 0) only occurs where this chart is not used
    with np.errstate(invalid="ignore", divide="ignore"):
        w = num / den
        wd = (Vdot[:, 0] + 1j * Vdot[:, 1]) / den - num * Vdot[:, 2] / den ** 2
    return w, wd


def _glued(sol: ApproximateSolution, t: float, r: np.ndarray):
    p = sol.params
    nu, a0, e1, e2 = p.nu, p.alpha0, p.eps1, p.eps2
    if not 0 < t <= sol.threshold() * (1 + 1e-12):
        raise DomainError(f"t = {t:g} outside (0, {sol.threshold():g}]")
    lam = t ** (-0.5 - nu)
    lam_t = -(0.5 + nu) * lam / t
    alpha, alpha_t = a0 * np.log(t), a0 / t
    rot = np.exp(1j * alpha)
    x1 = t ** (-0.5 - e1) * r
    x2 = t ** (e2 - 0.5) * r
    n = len(r)
    v12 = np.zeros(n, dtype=complex)
    v12_t = np.zeros(n, dtype=complex)
    v3 = np.zeros(n)
    v3_t = np.zeros(n)
    pert = np.full((n, 3), np.nan)

    core = x1 <= 0.5
    chart = ~core
    need_in = x1 < 2.0
    if np.any(need_in):
        rho = lam * r[need_in]
        V, Vr, Vt = sol.inner.V_at(rho, t)
        Vdot = lam_t * r[need_in, None] * Vr + Vt
        ci = core[need_in]
        v12[core] = rot * (V[ci, 0] + 1j * V[ci, 1])
        v12_t[core] = 1j * alpha_t * v12[core] + rot * (Vdot[ci, 0] + 1j * Vdot[ci, 1])
        v3[core] = V[ci, 2]
        v3_t[core] = Vdot[ci, 2]
        if np.any(core):
            P = sol.inner.perturbation_at(rho[ci], t)
            p12 = rot * (P[:, 0] + 1j * P[:, 1])
            pert[core] = np.column_stack([p12.real, p12.imag, P[:, 2]])
        w_in, w_in_t = _stereo_and_dt(V, Vdot)
        w_in_t = 1j * alpha_t * rot * w_in + rot * w_in_t
        w_in = rot * w_in
    if np.any(chart):
        rc = r[chart]
        th1 = cutoff_theta(x1[chart])
        th2 = cutoff_theta(x2[chart])
        th1_t = cutoff_theta(x1[chart], 1) * (-0.5 - e1) * x1[chart] / t
        th2_t = cutoff_theta(x2[chart], 1) * (e2 - 0.5) * x2[chart] / t
        w = np.zeros(len(rc), dtype=complex)
        wt = np.zeros_like(w)
        sel_in = chart & need_in
        if np.any(sel_in):
            k = chart[need_in]
            m = sel_in[chart]
            w[m] += th1[m] * w_in[k]
            wt[m] += th1_t[m] * w_in[k] + th1[m] * w_in_t[k]
        m = (x1[chart] > 1.0) & (x2[chart] < 2.0)
        if np.any(m):
            y = rc[m] / np.sqrt(t)
            W, Wy, Wt = sol.selfsim.eval(y, t, with_derivs=True)
            wss = rot * W
            wss_t = 1j * alpha_t * wss + rot * (Wy * (-0.5 * y / t) + Wt)
            c = (1.0 - th1[m]) * th2[m]
            w[m] += c * wss
            wt[m] += c * wss_t + (-th1_t[m] * th2[m] + (1.0 - th1[m]) * th2_t[m]) * wss
        m = x2[chart] > 1.0
        if np.any(m):
            wr, wr_t = eval_remote(sol.remote, rc[m], t, with_dt=True, k_max=min(p.order_N, 2))
            w[m] += (1.0 - th2[m]) * wr
            wt[m] += (1.0 - th2[m]) * wr_t - th2_t[m] * wr
        a = np.abs(w) ** 2
        at = 2.0 * np.real(np.conj(w) * wt)
        v12[chart] = 2.0 * w / (1.0 + a)
        v12_t[chart] = 2.0 * wt / (1.0 + a) - 2.0 * w * at / (1.0 + a) ** 2
        v3[chart] = (1.0 - a) / (1.0 + a)
        v3_t[chart] = -2.0 * at / (1.0 + a) ** 2
    v = np.column_stack([v12.real, v12.imag, v3])
    vt = np.column_stack([v12_t.real, v12_t.imag, v3_t])
    return v, vt, pert


def default_physical_grid(params: BlowupParams, t: float, n: int = 4096,
                          r_max: float | None = None) -> RadialGrid:
    """sinh grid whose core spacing is set by the inner scale at time t."""
    r_max = 5.0 * params.delta if r_max is None else r_max
    return RadialGrid.geometric(r_max, n, 0.25 * t ** (0.5 + params.nu))


def _check_resolution(params: BlowupParams, t: float, grid: RadialGrid) -> None:
    lam_inv = t ** (0.5 + params.nu)
    if grid.spacing_near(0.0) > lam_inv / 32.0:
        raise ScaleUnresolved(
            f"grid spacing {grid.spacing_near(0.0):.3g} near 0 exceeds lambda^-1/32 = {lam_inv / 32:.3g}")


def eval_uN(sol, t: float, grid: RadialGrid) -> SphereField:
    """``u^(N)(t)`` on the grid as an equivariant sphere field."""
    if isinstance(sol, ApproximateSolution):
        _check_resolution(sol.params, t, grid)
    v, _ = sol.fields(t, grid.nodes)
    return SphereField(grid, v, m=1, check=False)


def _tension(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    """``Delta v + R^2 v / r^2`` by finite differences."""
    return np.column_stack([grid.laplacian(v[:, 0], 1), grid.laplacian(v[:, 1], 1),
                            grid.laplacian(v[:, 2], 0)])


def tension_fields(sol, t: float, grid: RadialGrid):
    """``(v, v_t, Delta v + R^2 v / r^2)`` on the grid.

    For a glued solution the bubble part is differentiated exactly, using
    ``Delta Q + R^2 Q / rho^2 = -8 (1 + rho^2)^-2 Q``, and finite differences
    act only on the perturbation.
    """
    if isinstance(sol, ApproximateSolution):
        _check_resolution(sol.params, t, grid)
        v, vt, q, p = sol.split_fields(t, grid.nodes)
        lam = t ** (-0.5 - sol.params.nu)
        kap = 8.0 * lam ** 2 / (1.0 + (lam * grid.nodes) ** 2) ** 2
        return v, vt, _tension(grid, p) - kap[:, None] * q
    v, vt = sol.fields(t, grid.nodes)
    return v, vt, _tension(grid, v)


def residual_rN(sol, t: float, grid: RadialGrid):
    """``-v_t + v x (Delta v + R^2 v / r^2)`` and its norms.

    Returns ``(field, {"L2", "H1", "weightedL2"})``.
    """
    if isinstance(sol, ApproximateSolution):
        _check_resolution(sol.params, t, grid)
        v, vt, q, p = sol.split_fields(t, grid.nodes)
        lam = t ** (-0.5 - sol.params.nu)
        kap = 8.0 * lam ** 2 / (1.0 + (lam * grid.nodes) ** 2) ** 2
        # v x q = p x q, formed without cancellation
        res = -vt + np.cross(v, _tension(grid, p)) - kap[:, None] * np.cross(p, q)
    else:
        v, vt, ten = tension_fields(sol, t, grid)
        res = -vt + np.cross(v, ten)
    f = RadialField(grid, res, m=1, vector=True)
    norms = {"L2": sobolev_norm(f, 0), "H1": sobolev_norm(f, 1),
             "weightedL2": sobolev_norm(f, 0, weight="x")}
    return f, norms


def proximity_norms(u: SphereField, sol, t: float) -> dict:
    """H^1, H^2, H^3 and <x>-weighted L^2 norms of ``u - u^(N)(t)``.

    ``sol`` is an approximate solution (evaluated on ``u``'s grid) or a
    sphere field on the same grid.
    """
    if isinstance(sol, SphereField):
        check_same_grid(u.grid, sol.grid)
        ref = sol
    elif hasattr(sol, "fields"):
        ref = eval_uN(sol, t, u.grid)
    else:
        raise GridMismatch("no reference field to compare against")
    d = RadialField(u.grid, u.samples - ref.samples, m=u.m, vector=True)
    return {"H1": sobolev_norm(d, 1), "H2": sobolev_norm(d, 2), "H3": sobolev_norm(d, 3),
            "weightedL2": sobolev_norm(d, 0, weight="x")}


def dump_uN(path, sol, t: float, grid: RadialGrid) -> Path:
    u = eval_uN(sol, t, grid)
    path = Path(path)
    write_csv(path, ["r", "v1", "v2", "v3"], [u.r, u.v1, u.v2, u.v3])
    return path


def residual_report(path, t: float, N: int, norms: dict) -> Path:
    path = Path(path)
    rec = {"t": t, "N": N, "L2": norms["L2"], "H1": norms["H1"], "weightedL2": norms["weightedL2"]}
    path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return path


def overlap_mismatch(sol: ApproximateSolution, t: float, which: str = "inner", n: int = 400) -> float:
    """Sup of ``|W_ss - W_in|`` (which="inner") or ``|W_ss - e^(-i alpha) w_rem|``
    (which="remote") over the corresponding overlap window in y, the remote
    window being capped at r = delta."""
    p = sol.params
    if which == "inner":
        y = np.geomspace(t ** p.eps1 / 10.0, 10.0 * t ** p.eps1, n)
        rho = y * t ** -p.nu
        V, _, _ = sol.inner.V_at(rho, t)
        other = (V[:, 0] + 1j * V[:, 1]) / (1.0 + V[:, 2])
    elif which == "remote":
        # stop where the remote cutoff starts (r = delta)
        y_hi = min(10.0 * t ** -p.eps2, sol.selfsim.y_max, p.delta / np.sqrt(t))
        y = np.geomspace(t ** -p.eps2 / 10.0, y_hi, n)
        r = y * np.sqrt(t)
        other = np.exp(-1j * p.alpha0 * np.log(t)) * eval_remote(sol.remote, r, t,
                                                                 k_max=min(p.order_N, 2))
    else:
        raise ValueError("which must be 'inner' or 'remote'")
    W = sol.selfsim.eval(y, t)
    return float(np.max(np.abs(W - other)))


def unit_norm_error(u: SphereField) -> float:
    return float(np.max(np.abs(np.linalg.norm(u.samples, axis=1) - 1.0)))

