"""Remote region ``r = O(1)``: ``w_rem = f0 + chi`` in the stereographic chart.

The correction is a finite sum

    chi = sum t^(k + 2 nu q) e^(-i m Phi) (ln r - ln t)^s g_{k,q,m,s}(r),
    Phi = r^2/(4t) + 2 alpha0 ln t + phi(r).

Substituting into ``-i w_t - Delta w + w/r^2 + G(w) = 0`` is done with a
small formal-series algebra on the keys ``(k, q, m, s)``: time derivatives
and the phase shift k down, products add keys.  The coefficient of
``t^(k' + 2 nu q)`` in the residual of the chi-equation gives the defining
relations; k = 1 entries are explicit, k = 2 entries follow from the
coefficients at ``k' = 0`` (m = -2) and ``k' = 1`` (m = 0, -1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DomainError, QuadratureFailure
from .geometry import BlowupParams, LogGrid, RadialField, write_csv

_JET = 6  # Taylor coefficients kept: derivatives up to order 5


# ---------------------------------------------------------------------------
# cutoff


def _jet_mul(a, b):
    out = np.zeros_like(a)
    for i in range(_JET):
        for j in range(_JET - i):
            out[i + j] += a[i] * b[j]
    return out


def _jet_recip(a):
    out = np.zeros_like(a)
    out[0] = 1.0 / a[0]
    for n in range(1, _JET):
        acc = np.zeros_like(a[0])
        for k in range(1, n + 1):
            acc += a[k] * out[n - k]
        out[n] = -acc / a[0]
    return out


def _jet_exp(a):
    out = np.zeros_like(a)
    out[0] = np.exp(a[0])
    for n in range(1, _JET):
        acc = np.zeros_like(a[0])
        for k in range(1, n + 1):
            acc += k * a[k] * out[n - k]
        out[n] = acc / n
    return out


def _mollifier_jet(x):
    """Taylor jet of ``exp(-1/x)`` (zero for x <= 0)."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    var = np.zeros((_JET,) + x.shape)
    var[0] = xs
    var[1] = 1.0
    out = _jet_exp(-_jet_recip(var))
    return np.where(pos, out, 0.0)


def _step_jet(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1."""
    a = _mollifier_jet(x)
    b = _mollifier_jet(1.0 - x)
    # b is a jet in (1 - x): flip odd coefficients
    b = b * ((-1.0) ** np.arange(_JET)).reshape((-1,) + (1,) * np.ndim(x))
    return _jet_mul(a, _jet_recip(a + b))


def cutoff_theta(xi, deriv: int = 0):
    """Even C^inf bump: 1 on ``|xi| <= 1``, 0 on ``|xi| >= 2``.

    ``deriv`` (0..5) selects an exact derivative with respect to xi.
    """
    if not 0 <= deriv < _JET:
        raise ValueError("derivatives up to order 5 are available")
    xi = np.asarray(xi, dtype=float)
    jet = _step_jet(2.0 - np.abs(xi))
    fact = float(np.prod(np.arange(1, deriv + 1)))
    sign = np.where(xi < 0, 1.0, -1.0) ** deriv
    out = jet[deriv] * fact * sign
    out = np.where(np.abs(xi) <= 1.0, 1.0 if deriv == 0 else 0.0, out)
    return out if out.ndim else float(out)


def G(w, wr, r):
    """``2 conj(w) (w_r^2 - w^2/r^2) / (1 + |w|^2)``."""
    return 2.0 * np.conj(w) * (wr * wr - w * w / r ** 2) / (1.0 + np.abs(w) ** 2)


# ---------------------------------------------------------------------------
# static profile


def _f0_terms(params: BlowupParams, beta0: dict, r):
    """``S, S', S''`` of ``S = sum beta0(j,l) ln(r)^l r^(2i alpha0 + 2nu(2j+1))``."""
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    S = np.zeros(r.shape, dtype=complex)
    S1 = np.zeros_like(S)
    S2 = np.zeros_like(S)
    for (j, l), b in beta0.items():
        if j > params.order_N or b == 0:
            continue
        c = 2j * params.alpha0 + 2.0 * params.nu * (2 * j + 1)
        rc = np.exp(c * lr)
        L0 = lr ** l
        L1 = l * lr ** (l - 1) if l >= 1 else 0.0
        L2 = l * (l - 1) * lr ** (l - 2) if l >= 2 else 0.0
        S += b * rc * L0
        S1 += b * rc / r * (c * L0 + L1)
        S2 += b * rc / r ** 2 * (c * (c - 1) * L0 + (2 * c - 1) * L1 + L2)
    return S, S1, S2


def f0_values(params: BlowupParams, beta0: dict, r):
    """``(f0, f0', f0'')`` at r."""
    r = np.asarray(r, dtype=float)
    d = params.delta
    S, S1, S2 = _f0_terms(params, beta0, r)
    th = cutoff_theta(r / d)
    th1 = cutoff_theta(r / d, 1) / d
    th2 = cutoff_theta(r / d, 2) / d ** 2
    return th * S, th1 * S + th * S1, th2 * S + 2 * th1 * S1 + th * S2


def build_f0(params: BlowupParams, beta0: dict, grid: LogGrid | None = None) -> RadialField:
    """``f0 = theta(r/delta) sum_{j<=N, l<=2j+1} beta0(j,l) ln(r)^l r^(2i alpha0 + 2nu(2j+1))``.

    The returned field carries the exact derivatives in ``derivs``.
    """
    grid = default_remote_grid(params) if grid is None else grid
    f, f1, f2 = f0_values(params, beta0, grid.nodes)
    out = RadialField(grid, f, m=1)
    out.derivs = (f1, f2)
    return out


def _f0_deriv(f0: RadialField):
    d = getattr(f0, "derivs", None)
    if d is not None:
        return d
    return f0.grid.d1(f0.values), f0.grid.d2(f0.values)


def build_phase(f0: RadialField) -> RadialField:
    """``phi(r) = int_0^r 2 Im(conj(f0) f0') / (1 + |f0|^2) ds`` (real)."""
    grid = f0.grid
    r = grid.nodes
    f = f0.values
    f1, _ = _f0_deriv(f0)
    integrand = 2.0 * np.imag(np.conj(f) * f1) / (1.0 + np.abs(f) ** 2)
    # below r_min the integrand behaves like r^(4 nu - 1)
    head = integrand[0] * r[0] / 4.0 if np.isfinite(integrand[0]) else 0.0
    phi = head + grid.cumulative(integrand)
    out = RadialField(grid, phi, m=0)
    out.derivs = (integrand,)
    return out


def _phase_deriv(phi: RadialField) -> np.ndarray:
    d = getattr(phi, "derivs", None)
    return d[0] if d is not None else phi.grid.d1(phi.values)


def build_defect_D0(f0: RadialField) -> RadialField:
    """``D0 = (-Delta + r^-2) f0 + G(f0)``."""
    r = f0.grid.nodes
    f = f0.values
    f1, f2 = _f0_deriv(f0)
    D = -f2 - f1 / r + f / r ** 2 + G(f, f1, r)
    return RadialField(f0.grid, D, m=1)


def default_remote_grid(params: BlowupParams, r_min: float = 1e-3, n: int = 3000) -> LogGrid:
    return LogGrid(r_min, 6.0 * params.delta, n)


# ---------------------------------------------------------------------------
# formal series in (k, q, m, s)


class _Algebra:
    """Operations on ``{(k, q, m, s): samples}`` truncated at ``k <= kmax``."""

    def __init__(self, params: BlowupParams, grid: LogGrid, phi_r: np.ndarray, kmax: int):
        self.nu = params.nu
        self.a0 = params.alpha0
        self.grid = grid
        self.r = grid.nodes
        self.phi_r = phi_r
        self.kmax = kmax

    @staticmethod
    def add(*terms) -> dict:
        out = {}
        for t in terms:
            for k, v in t.items():
                out[k] = out[k] + v if k in out else v
        return out

    @staticmethod
    def scale(a: dict, f) -> dict:
        return {k: v * f for k, v in a.items()}

    def mul(self, a: dict, b: dict) -> dict:
        out = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                k = ka[0] + kb[0]
                if k > self.kmax:
                    continue
                key = (k, ka[1] + kb[1], ka[2] + kb[2], ka[3] + kb[3])
                prod = va * vb
                out[key] = out[key] + prod if key in out else prod
        return out

    @staticmethod
    def conj(a: dict) -> dict:
        return {(k, q, -m, s): np.conj(v) for (k, q, m, s), v in a.items()}

    def dr(self, a: dict) -> dict:
        r = self.r
        out = {}

        def put(key, v):
            out[key] = out[key] + v if key in out else v

        for (k, q, m, s), g in a.items():
            put((k, q, m, s), self.grid.d1(g) - 1j * m * self.phi_r * g)
            if s:
                put((k, q, m, s - 1), s * g / r)
            if m:
                put((k - 1, q, m, s), -0.5j * m * r * g)
        return out

    def lap(self, a: dict) -> dict:
        d = self.dr(a)
        return self.add(self.dr(d), self.scale(d, 1.0 / self.r))

    def minus_i_dt(self, a: dict) -> dict:
        """``-i d/dt`` of the series."""
        out = {}

        def put(key, v):
            out[key] = out[key] + v if key in out else v

        r = self.r
        for (k, q, m, s), g in a.items():
            ex = k + 2.0 * self.nu * q
            put((k - 1, q, m, s), -1j * (ex - 2j * m * self.a0) * g)
            if s:
                put((k - 1, q, m, s - 1), 1j * s * g)
            if m:
                put((k - 2, q, m, s), 0.25 * m * r * r * g)
        return out


def chi_residual(alg: _Algebra, f0: np.ndarray, f0r: np.ndarray, chi: dict) -> dict:
    """Coefficients of ``-i chi_t - Delta chi + chi/r^2 + G(f0 + chi) - G(f0)``."""
    r = alg.r
    base = (0, 0, 0, 0)
    chi_r = alg.dr(chi)
    lin = alg.add(alg.minus_i_dt(chi), alg.scale(alg.lap(chi), -1.0), alg.scale(chi, r ** -2.0))
    w = alg.add({base: f0}, chi)
    wr = alg.add({base: f0r}, chi_r)
    A = 1.0 + np.abs(f0) ** 2
    X = alg.add(alg.scale(chi, np.conj(f0)), alg.scale(alg.conj(chi), f0),
                alg.mul(chi, alg.conj(chi)))
    inv = {base: 1.0 / A}
    term = {base: 1.0 / A}
    for _ in range(alg.kmax + 2):
        term = alg.scale(alg.mul(term, X), -1.0 / A)
        if not term:
            break
        inv = alg.add(inv, term)
    bracket = alg.add(alg.mul(wr, wr), alg.scale(alg.mul(w, w), -r ** -2.0))
    g = alg.scale(alg.mul(alg.mul(alg.conj(w), bracket), inv), 2.0)
    g[base] = g[base] - G(f0, f0r, r) if base in g else -G(f0, f0r, r)
    return alg.add(lin, g)


def equation_defect(layer: "RemoteLayer", r_hi: float | None = None) -> dict:
    """Relative defect of the chi-equation coefficients fixed by the tables.

    Covers ``k' <= 0`` (all m) and ``k' = 1`` with ``m in {0, -1}``; each
    coefficient is divided by the pointwise sum of the magnitudes of its
    linear, nonlinear and forcing contributions.
    """
    p = layer.params
    r = layer.grid.nodes
    r_hi = 2.0 * p.delta if r_hi is None else r_hi
    sel = np.zeros(len(r), dtype=bool)
    sel[4:-4] = True
    sel &= r <= r_hi
    alg = _Algebra(p, layer.grid, _phase_deriv(layer.phi_r), kmax=1)
    f, fr = layer.f0.values, _f0_deriv(layer.f0)[0]
    chi = {k: v.values for k, v in layer.g_table.items()}
    zero = {}
    pieces = [alg.minus_i_dt(chi), alg.scale(alg.lap(chi), -1.0), alg.scale(chi, r ** -2.0),
              alg.add(chi_residual(alg, f, fr, chi), alg.scale(alg.minus_i_dt(chi), -1.0),
                      alg.lap(chi), alg.scale(chi, -r ** -2.0)),
              {(0, 0, 0, 0): layer.D0.values}]
    total = alg.add(*pieces, zero)
    scale = {}
    for pc in pieces:
        for k, v in pc.items():
            scale[k] = scale.get(k, 0.0) + np.abs(v)
    out = {}
    for k, v in total.items():
        if k[0] <= 0 or (k[0] == 1 and k[2] in (0, -1)):
            den = np.maximum(scale[k], 1e-300)
            out[k] = float(np.max((np.abs(v) / den)[sel]))
    return out


def omega(N: int, k_max: int = 2):
    """Index set ``(k, q, m, s)`` with the truncation bounds in q."""
    for k in range(1, k_max + 1):
        for q in range(0, (2 * N + 1) * (2 * k - 1) + 1):
            for m in range(-min(k, q), min(k - 1, q) + 1):
                if (q - m) % 2:
                    continue
                if k >= 2 and m not in (0, 1) and q > (2 * N + 1) * (2 * k - 2):
                    continue
                for s in range(q + 1):
                    yield (k, q, m, s)


# ---------------------------------------------------------------------------
# layer


@dataclass
class RemoteLayer:
    params: BlowupParams
    beta0: dict
    beta1: dict
    grid: LogGrid
    f0: RadialField
    phi_r: RadialField
    D0: RadialField
    g_table: dict = field(default_factory=dict)
    B_table: dict = field(default_factory=dict)
    C_table: dict = field(default_factory=dict)
    cutoff: bool = True
    identity_residual: dict = field(default_factory=dict)
    _splines: dict = field(default_factory=dict, repr=False)

    def _scaled(self, key):
        k, q, m, s = key
        return 2.0 * self.params.nu * q + 2.0 * k + 2.0

    def _spline(self, key):
        if key not in self._splines:
            g = self.g_table[key].values
            sc = self.grid.nodes ** self._scaled(key)
            self._splines[key] = make_interp_spline(self.grid.x, g * sc, k=5)
        return self._splines[key]

    def g_at(self, key, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self._spline(key)(np.log(r)) * r ** -self._scaled(key)

    def phase_at(self, r) -> np.ndarray:
        if "phi" not in self._splines:
            self._splines["phi"] = make_interp_spline(self.grid.x, self.phi_r.values.real, k=5)
        return self._splines["phi"](np.log(np.asarray(r, dtype=float)))

    def export_csv(self, directory) -> list:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for (k, q, m, s), g in sorted(self.g_table.items()):
            p = directory / f"remote_g_{k}_{q}_{m}_{s}.csv"
            write_csv(p, ["r", "re_g", "im_g"], [g.r, g.values.real, g.values.imag])
            paths.append(p)
        return paths


def build_g_k1(params: BlowupParams, f0: RadialField, D0: RadialField, beta1: dict) -> dict:
    """``g_{1,0,0,0} = -i D0`` and ``g_{1,2j+1,-1,s} = beta1(j,s)(1+|f0|^2) r^(-2i alpha0 - 2nu(2j+1) - 2)``."""
    grid = f0.grid
    r = grid.nodes
    A = 1.0 + np.abs(f0.values) ** 2
    table = {(1, 0, 0, 0): RadialField(grid, -1j * D0.values)}
    for (j, s), b in beta1.items():
        if j > params.order_N or b == 0:
            continue
        ex = -2j * params.alpha0 - 2.0 * params.nu * (2 * j + 1) - 2.0
        table[(1, 2 * j + 1, -1, s)] = RadialField(grid, b * A * np.exp(ex * np.log(r)))
    return table


def _as_arrays(table: dict) -> dict:
    return {k: v.values for k, v in table.items()}


def build_g_k2(params: BlowupParams, g_table: dict, f0: RadialField, phi_r: RadialField,
               return_sources: bool = False):
    """k = 2 entries from the coefficients of the chi-equation residual.

    ``m = -2``: ``g = (2/r^2) B`` with ``B = -P_(0,q,-2,s)``;
    ``m = 0``:  ``(2 nu q + 2) g_s - (s+1) g_(s+1) = C_s``;
    ``m = -1``: ``g = r^(-2i alpha0 - 3 - 2 nu q)(1+|f0|^2) ghat`` with
    ``ghat' = r^-2 Chat``, the solution in ``r^-1 B_2`` (no r^-1 growth
    beyond the constant part of Chat),
    where ``C = -i P_(1,q,m,s)`` is evaluated with the unknown entries set to 0.
    """
    grid = f0.grid
    r = grid.nodes
    nu, a0 = params.nu, params.alpha0
    alg = _Algebra(params, grid, _phase_deriv(phi_r), kmax=1)
    f, fr = f0.values, _f0_deriv(f0)[0]
    chi1 = {k: v for k, v in _as_arrays(g_table).items() if k[0] == 1}
    P0 = chi_residual(alg, f, fr, chi1)
    B = {k: -v for k, v in P0.items() if k[0] == 0 and k[2] == -2}
    out = {}
    for (k, q, m, s), b in B.items():
        out[(2, q, m, s)] = 2.0 * b / r ** 2
    chi = alg.add(chi1, out)
    P1 = chi_residual(alg, f, fr, chi)
    C = {k: -1j * v for k, v in P1.items() if k[0] == 1 and k[2] in (0, -1)}
    A = 1.0 + np.abs(f) ** 2
    qs0 = sorted({k[1] for k in C if k[2] == 0})
    for q in qs0:
        smax = max(k[3] for k in C if k[2] == 0 and k[1] == q)
        nxt = 0.0
        for s in range(smax, -1, -1):
            c = C.get((1, q, 0, s), 0.0)
            val = (c + (s + 1) * nxt) / (2.0 * nu * q + 2.0)
            out[(2, q, 0, s)] = val * np.ones_like(r, dtype=complex)
            nxt = val
    for (k, q, m, s), c in C.items():
        if m != -1:
            continue
        ex = 2j * a0 + 4.0 + 2.0 * nu * q
        chat = np.exp(ex * np.log(r)) * c / A
        b00 = chat[0]
        integ = grid.cumulative((chat - b00) / r ** 2)
        if not np.all(np.isfinite(integ)):
            raise QuadratureFailure(f"non-finite quadrature for g_(2,{q},-1,{s})")
        ghat = integ - b00 / r
        out[(2, q, -1, s)] = np.exp((-2j * a0 - 3.0 - 2.0 * nu * q) * np.log(r)) * A * ghat
    table = {k: RadialField(grid, v) for k, v in out.items() if np.any(v != 0)}
    if return_sources:
        return table, B, C
    return table


def k2_identity_residuals(layer: RemoteLayer, r_hi: float | None = None) -> dict:
    """Pointwise relative defects of the k = 2 defining relations on ``r <= r_hi``."""
    p = layer.params
    grid = layer.grid
    r = grid.nodes
    r_hi = 2.0 * p.delta if r_hi is None else r_hi
    sel = r <= r_hi
    f = layer.f0.values
    fr = _f0_deriv(layer.f0)[0]
    A = 1.0 + np.abs(f) ** 2
    logA_r = 2.0 * np.real(np.conj(f) * fr) / A
    out = {}
    for key, g in layer.g_table.items():
        k, q, m, s = key
        if k != 2:
            continue
        gv = g.values
        if m == -2:
            lhs, rhs = gv, 2.0 * layer.B_table[(0, q, m, s)] / r ** 2
        elif m == 0:
            nxt = layer.g_table.get((2, q, 0, s + 1))
            nxt = 0.0 if nxt is None else nxt.values
            lhs = (2.0 * p.nu * q + 2.0) * gv - (s + 1) * nxt
            rhs = layer.C_table.get((1, q, 0, s), 0.0)
        else:
            coef = 2.0 * p.nu * q + 3.0 + 2j * p.alpha0 - r * logA_r
            lhs = r * grid.d1(gv) + coef * gv
            rhs = layer.C_table.get((1, q, -1, s), 0.0)
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        scale = np.maximum(scale, 1e-300)
        err = np.abs(lhs - rhs) / scale
        # one-sided stencils at the table ends are excluded
        err = err[sel][4:-4] if m == -1 else err[sel]
        out[key] = float(np.max(err)) if err.size else 0.0
    return out


def build_remote(params: BlowupParams, beta0: dict, beta1: dict, grid: LogGrid | None = None,
                 k_max: int = 2, cutoff: bool = True) -> RemoteLayer:
    grid = default_remote_grid(params) if grid is None else grid
    f0 = build_f0(params, beta0, grid)
    phi = build_phase(f0)
    D0 = build_defect_D0(f0)
    table = build_g_k1(params, f0, D0, beta1)
    layer = RemoteLayer(params, dict(beta0), dict(beta1), grid, f0, phi, D0, cutoff=cutoff)
    if k_max >= 2:
        g2, B, C = build_g_k2(params, table, f0, phi, return_sources=True)
        table.update(g2)
        layer.B_table, layer.C_table = B, C
    layer.g_table = table
    allowed = set(omega(params.order_N, k_max))
    extra = [k for k in table if k not in allowed]
    if extra:
        raise DomainError(f"coefficients outside the index set: {extra[:4]}")
    if k_max >= 2:
        layer.identity_residual = k2_identity_residuals(layer)
    return layer


def remote_validity_radius(params: BlowupParams, t: float) -> float:
    return t ** (0.5 - params.eps2) / 10.0


def eval_remote(layer: RemoteLayer, r, t: float, with_dt: bool = False, k_max: int | None = None):
    """``w_rem(r, t) = f0 + sum t^(k+2nu q) e^(-im Phi) (ln r - ln t)^s g``.

    With ``with_dt`` also returns the exact t-derivative at fixed r.
    """
    p = layer.params
    r = np.asarray(r, dtype=float)
    if np.any(r < remote_validity_radius(p, t) * (1 - 1e-12)) or np.any(r < layer.grid.r_min):
        raise DomainError("remote profile evaluated below its validity radius")
    inside = r <= layer.grid.r_max
    if not layer.cutoff and not np.all(inside):
        raise DomainError("remote profile evaluated beyond its table")
    w = np.zeros(r.shape, dtype=complex)
    wt = np.zeros_like(w)
    ri = r[inside]
    f, _, _ = f0_values(p, layer.beta0, ri)
    w[inside] = f
    if not layer.g_table:
        return (w, wt) if with_dt else w
    phi = layer.phase_at(ri)
    Phi = ri ** 2 / (4.0 * t) + 2.0 * p.alpha0 * np.log(t) + phi
    Phi_t = -ri ** 2 / (4.0 * t * t) + 2.0 * p.alpha0 / t
    L = np.log(ri) - np.log(t)
    cut = cutoff_theta(ri / (2.0 * p.delta)) if layer.cutoff else 1.0
    acc = np.zeros(ri.shape, dtype=complex)
    acc_t = np.zeros_like(acc)
    for key in layer.g_table:
        k, q, m, s = key
        if k_max is not None and k > k_max:
            continue
        g = layer.g_at(key, ri)
        a = k + 2.0 * p.nu * q
        e = np.exp(-1j * m * Phi)
        term = t ** a * e * L ** s * g
        acc += term
        if with_dt:
            dts = (a / t - 1j * m * Phi_t) * term
            if s:
                dts = dts - s / t * t ** a * e * L ** (s - 1) * g
            acc_t += dts
    w[inside] += cut * acc
    wt[inside] = cut * acc_t
    return (w, wt) if with_dt else w
