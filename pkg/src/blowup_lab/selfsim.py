"""Self-similar layer ``W(y, t) = sum_j sum_l t^(nu(2j+1)) (ln y - nu ln t)^l W_{j,l}(y)``.

The profiles solve ``(Lss - mu_j) W_{j,l} = G_{j,l} + couplings`` with

    Lss = -Delta + y^-2 + (i/2) y d/dy,     mu_j = -alpha0 + i nu (2j+1).

Near ``y = 0`` every profile is an odd Laurent series (no logarithms); the
free ``y^1`` coefficients are the boundary data ``a_j, b_j`` and, for
``j >= 1``, constants fixed by solvability.  From ``y0 = 0.5`` outward the
profiles are marched with an embedded 8th-order Runge-Kutta scheme.  At
large ``y`` each profile is a combination of a slowly varying family
``y^(2i alpha0 + 2nu(2j+1)) (...)`` and an oscillating one
``e^(i y^2/4) y^(-2i alpha0 - 2 - 2nu(2j+1)) (...)``; their leading
coefficients feed the remote layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma as cgamma

from .errors import DomainError, FitIllConditioned, MatchFailure, SeriesDivergence
from .geometry import BlowupParams, fornberg_weights, write_csv
from .linop import far_field_fit as _inner_far_fit

Y0 = 0.5
SERIES_MAX_Y = 2.0
_PMAX = 81


def mu_j(params: BlowupParams, j: int) -> complex:
    return complex(-params.alpha0, params.nu * (2 * j + 1))


def kappa_j(params: BlowupParams, j: int) -> complex:
    return -0.25j - mu_j(params, j) / 2.0


def far_exponents(params: BlowupParams, j: int) -> tuple[complex, complex]:
    """Leading exponents of the smooth and the oscillating far families."""
    m = mu_j(params, j)
    return -2j * m, -2.0 + 2j * m


# ---------------------------------------------------------------------------
# Laurent series near y = 0


class Laurent:
    """``sum_i c[i] y^(lo + i)`` truncated at power ``_PMAX``."""

    def __init__(self, lo: int, c):
        self.lo = int(lo)
        self.c = np.asarray(c, dtype=complex)

    @classmethod
    def zero(cls) -> "Laurent":
        return cls(1, np.zeros(1))

    @classmethod
    def mono(cls, p: int, a: complex = 1.0) -> "Laurent":
        return cls(p, [a])

    @property
    def hi(self) -> int:
        return self.lo + len(self.c) - 1

    def coef(self, p: int) -> complex:
        i = p - self.lo
        return complex(self.c[i]) if 0 <= i < len(self.c) else 0.0j

    def _trim(self) -> "Laurent":
        keep = self.lo + np.arange(len(self.c)) <= _PMAX
        return Laurent(self.lo, self.c[keep])

    def __add__(self, other):
        if not isinstance(other, Laurent):
            other = Laurent(0, [other])
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        c = np.zeros(hi - lo + 1, dtype=complex)
        c[self.lo - lo:self.lo - lo + len(self.c)] += self.c
        c[other.lo - lo:other.lo - lo + len(other.c)] += other.c
        return Laurent(lo, c)

    __radd__ = __add__

    def __neg__(self):
        return Laurent(self.lo, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Laurent):
            return Laurent(self.lo + other.lo, np.convolve(self.c, other.c))._trim()
        return Laurent(self.lo, self.c * other)

    __rmul__ = __mul__

    def shift(self, k: int) -> "Laurent":
        """Multiply by ``y^k``."""
        return Laurent(self.lo + k, self.c)._trim()

    def deriv(self) -> "Laurent":
        p = self.lo + np.arange(len(self.c))
        return Laurent(self.lo - 1, self.c * p)

    def conj(self) -> "Laurent":
        return Laurent(self.lo, self.c.conj())

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        p = self.lo + np.arange(len(self.c))
        return np.sum(self.c[:, None] * y.ravel()[None, :] ** p[:, None], axis=0).reshape(y.shape)

    def d(self, y):
        return self.deriv()(y)

    def tail(self, y: float, n: int = 4) -> float:
        """Relative size of the last ``n`` terms at y."""
        p = self.lo + np.arange(len(self.c))
        terms = np.abs(self.c * float(y) ** p)
        return float(np.sum(terms[-n:]) / max(np.sum(terms), 1e-300))


def laurent_solve(mu: complex, F: Laurent, u1: complex = 0.0) -> tuple[Laurent, complex]:
    """Odd Laurent solution of ``(Lss - mu) u = F`` with ``y^1`` coefficient ``u1``.

    Returns ``(u, r)`` where ``r`` is the obstruction at ``y^-3``; a
    log-free solution exists only when ``r = 0``.
    """
    pw = F.lo + np.nonzero(np.abs(F.c) > 0)[0]
    if np.any(pw % 2 == 0):
        raise ValueError("source must be odd")
    m0 = int(pw.min()) if len(pw) else 1
    m0 = min(m0, -1)
    lo = m0 + 2 if m0 + 2 <= -1 else -1
    lo = min(lo, -1)
    u = {}
    obstruction = 0.0j
    m = m0
    while m + 2 <= _PMAX:
        Fm = F.coef(m)
        um = u.get(m, 0.0j)
        lin = (1j * m / 2.0 - mu) * um
        if m == -3:
            obstruction = lin - Fm
        elif m == -1:
            # (-i/2 - mu) u_{-1} = F_{-1}; this fixes u_{-1} itself
            u[-1] = Fm / (-0.5j - mu)
            u[1] = u1
        else:
            u[m + 2] = (lin - Fm) / ((m + 2) ** 2 - 1.0)
        m += 2
    lo = min(u) if u else 1
    c = np.zeros(_PMAX - lo + 1, dtype=complex)
    for p, v in u.items():
        c[p - lo] = v
    return Laurent(lo, c), complex(obstruction)


def _lpoly_mul(a: list, b: list) -> list:
    """Product of polynomials in L whose coefficients support ``*`` and ``+``."""
    out = [None] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = x * y if out[i + j] is None else out[i + j] + x * y
    return out


def nonlinear_sources(w0: list, dw0: list, y, conj=np.conj) -> list:
    """``calG_{1,l}`` for l = 0..3 from the j = 0 profiles.

    ``w0 = [W00, W01]`` and ``dw0`` their y-derivatives, either as arrays
    sampled at ``y`` or as Laurent series (then ``y`` is ignored and ``conj``
    must be ``Laurent.conj``).
    """
    if isinstance(w0[0], Laurent):
        wy = [dw0[0] + w0[1].shift(-1), dw0[1]]
        w_over = [w.shift(-1) for w in w0]
        wbar = [w.conj() for w in w0]
    else:
        wy = [dw0[0] + w0[1] / y, dw0[1]]
        w_over = [w / y for w in w0]
        wbar = [conj(w) for w in w0]
    a = _lpoly_mul(wy, wy)
    b = _lpoly_mul(w_over, w_over)
    diff = [x - z for x, z in zip(a, b)]
    g3 = _lpoly_mul(wbar, diff)
    return [g * (-2.0) for g in g3]


# ---------------------------------------------------------------------------
# near-origin basis


def _e1_series(mu: complex) -> Laurent:
    u, _ = laurent_solve(mu, Laurent.zero(), 1.0)
    return u


def _e2_series(mu: complex) -> tuple[Laurent, complex]:
    e1 = _e1_series(mu)
    kap = -0.25j - mu / 2.0
    de1 = e1.deriv().shift(-1)
    # drop the y^-1 term of e1'/y, which cancels against (Lss - mu) y^-1
    de1 = de1 + Laurent.mono(-1, -de1.coef(-1))
    F = de1 * (2.0 * kap) + e1 * (-0.5j * kap)
    tilde, _ = laurent_solve(mu, F, 0.0)
    return tilde, kap


def basis_near_zero(params: BlowupParams, j: int, y):
    """``(e1, e2, e1', e2')`` of ``(Lss - mu_j) f = 0`` at ``0 < y <= 2``.

    ``e1 = y + O(y^3)`` is odd; ``e2 = 1/y + kappa_j e1 ln y + O(y^3)``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(y > SERIES_MAX_Y):
        raise SeriesDivergence(f"series basis is only used for 0 < y <= {SERIES_MAX_Y}")
    mu = mu_j(params, j)
    e1 = _e1_series(mu)
    if e1.tail(float(np.max(y))) > 1e-14:
        raise SeriesDivergence("series tail above 1e-14")
    tilde, kap = _e2_series(mu)
    v1, d1 = e1(y), e1.d(y)
    ly = np.log(y)
    v2 = 1.0 / y + kap * v1 * ly + tilde(y)
    d2 = -1.0 / y ** 2 + kap * (d1 * ly + v1 / y) + tilde.d(y)
    return v1, v2, d1, d2


def kummer_far_coefficients(params: BlowupParams, j: int) -> tuple[complex, complex]:
    """Exact far-field coefficients of ``e_j^1 = y M(a, 2, i y^2/4)``.

    ``e_j^1 ~ A y^p + B e^(iy^2/4) y^q`` with ``a = 1/2 + i mu_j``.
    """
    a = 0.5 + 1j * mu_j(params, j)
    A = 4.0 ** a * np.exp(0.5j * np.pi * a) * _rgamma(2.0 - a)
    B = 4.0 ** (2.0 - a) * np.exp(0.5j * np.pi * (a - 2.0)) * _rgamma(a)
    return complex(A), complex(B)


def _rgamma(z: complex) -> complex:
    zr = complex(z)
    if abs(zr.imag) < 1e-14 and zr.real <= 0 and abs(zr.real - round(zr.real)) < 1e-14:
        return 0.0j
    return 1.0 / complex(cgamma(zr))


# ---------------------------------------------------------------------------
# formal series at infinity


@dataclass
class Formal:
    """``e^(i sigma y^2) sum_{k,s} c[k,s] y^(q - 2k) (ln y)^s``."""

    q: complex
    sigma: float
    c: np.ndarray

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        ly = np.log(y)
        out = np.zeros(y.shape, dtype=complex)
        K, S = self.c.shape
        for k in range(K):
            yk = y ** (self.q - 2 * k)
            for s in range(S):
                if self.c[k, s] != 0:
                    out += self.c[k, s] * yk * ly ** s
        return np.exp(1j * self.sigma * y * y) * out

    def d(self, y):
        y = np.asarray(y, dtype=float)
        ly = np.log(y)
        out = np.zeros(y.shape, dtype=complex)
        K, S = self.c.shape
        for k in range(K):
            e = self.q - 2 * k
            for s in range(S):
                c = self.c[k, s]
                if c == 0:
                    continue
                base = y ** (e - 1) * ly ** s
                out += c * (2j * self.sigma * y * y * y ** (e - 1) * ly ** s + e * base)
                if s:
                    out += c * s * y ** (e - 1) * ly ** (s - 1)
        return np.exp(1j * self.sigma * y * y) * out

    def shifted_source(self, nu: float) -> "Formal":
        """Coupling ``-i(1/2+nu) W + 2 y^-1 W'`` applied to this series."""
        K, S = self.c.shape
        out = np.zeros((K + 1, S), dtype=complex)
        out[:K] += (-1j * (0.5 + nu) + 4j * self.sigma) * self.c
        for k in range(K):
            e = self.q - 2 * k
            for s in range(S):
                out[k + 1, s] += 2.0 * e * self.c[k, s]
                if s:
                    out[k + 1, s - 1] += 2.0 * s * self.c[k, s]
        return Formal(self.q, self.sigma, out)


def formal_solve(mu: complex, sigma: float, F: Formal | None, lead: complex, K: int,
                 q: complex | None = None) -> Formal:
    """Formal solution of ``(Lss - mu) u = F`` in the family of ``F``.

    ``sigma`` is 0 (smooth family) or 1/4 (oscillating family).  The
    resonant exponent carries the free coefficient ``lead``; sources at the
    resonant power raise the power of ``ln y``.
    """
    cs = 0.5j - 4j * sigma
    ms = 4j * sigma + mu
    qs = ms / cs if q is None else q
    S = 1 if F is None else F.c.shape[1] + 1
    f = np.zeros((K + 1, S), dtype=complex)
    if F is not None:
        kk = min(K + 1, F.c.shape[0])
        f[:kk, :S - 1] = F.c[:kk]
    v = np.zeros((K + 1, S), dtype=complex)
    v[0, 0] = lead
    for s in range(S - 1):
        v[0, s + 1] = f[0, s] / (cs * (s + 1))
    for k in range(1, K + 1):
        e = qs - 2 * k
        ep = e + 2
        for s in range(S - 1, -1, -1):
            rhs = f[k, s]
            rhs -= (1.0 - ep * ep) * v[k - 1, s]
            if s + 1 < S:
                rhs -= -2.0 * ep * (s + 1) * v[k - 1, s + 1]
                rhs -= cs * (s + 1) * v[k, s + 1]
            if s + 2 < S:
                rhs -= -(s + 2) * (s + 1) * v[k - 1, s + 2]
            v[k, s] = rhs / (cs * e - ms)
    return Formal(qs, sigma, v)


# ---------------------------------------------------------------------------
# profiles


@dataclass
class Profile:
    """One profile ``W_{j,l}``: Laurent series below ``y0``, ODE beyond."""

    j: int
    l: int
    series: Laurent
    sol: object = None
    index: int = 0
    y_max: float = 0.0

    def _split(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("profiles are defined for y > 0")
        if np.any(y > self.y_max * (1 + 1e-12)):
            raise DomainError(f"y beyond the computed range {self.y_max:g}")
        return y, y <= Y0

    def __call__(self, y):
        y, near = self._split(y)
        out = np.empty(y.shape, dtype=complex)
        out[near] = self.series(y[near])
        if np.any(~near):
            out[~near] = self.sol(y[~near])[2 * self.index]
        return out

    def d(self, y):
        y, near = self._split(y)
        out = np.empty(y.shape, dtype=complex)
        out[near] = self.series.d(y[near])
        if np.any(~near):
            out[~near] = self.sol(y[~near])[2 * self.index + 1]
        return out

    def inverse_coefficient(self) -> complex:
        """Coefficient of ``y^-1`` near the origin."""
        return self.series.coef(-1)


@dataclass
class SelfSimilarLayer:
    params: BlowupParams
    j_max: int
    profiles: dict
    mu: list
    a: list
    b: list
    constants: dict = field(default_factory=dict)
    beta0: dict = field(default_factory=dict)
    beta1: dict = field(default_factory=dict)
    fit_info: dict = field(default_factory=dict)
    y_max: float = 0.0

    def W(self, j: int, l: int) -> Profile:
        return self.profiles[(j, l)]

    def eval(self, y, t: float, with_derivs: bool = False):
        """``W_ss(y, t)`` (and ``d/dy``, ``d/dt`` at fixed y if requested)."""
        nu = self.params.nu
        y = np.asarray(y, dtype=float)
        lr = np.log(y) - nu * np.log(t)
        w = np.zeros(y.shape, dtype=complex)
        wy = np.zeros_like(w)
        wt = np.zeros_like(w)
        for (j, l), p in self.profiles.items():
            tp = t ** (nu * (2 * j + 1))
            v = p(y)
            w += tp * lr ** l * v
            if with_derivs:
                dv = p.d(y)
                wy += tp * (lr ** l * dv + (l * lr ** (l - 1) / y * v if l else 0.0))
                # d/dt of t^a (ln y - nu ln t)^l at fixed y
                a = nu * (2 * j + 1)
                wt += tp / t * (a * lr ** l - (nu * l * lr ** (l - 1) if l else 0.0)) * v
        if with_derivs:
            return w, wy, wt
        return w

    def export_csv(self, directory, y=None) -> list:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if y is None:
            y = np.linspace(0.01, self.y_max, 2000)
        paths = []
        for (j, l), p in sorted(self.profiles.items()):
            v = p(y)
            path = directory / f"selfsim_W{j}{l}.csv"
            write_csv(path, ["y", "re_W", "im_W"], [y, v.real, v.imag])
            paths.append(path)
        return paths


def _near_zero_j1(params: BlowupParams, w00: Laurent, w01: Laurent, a1: complex, b1: complex):
    """Laurent data of ``W_{1,l}`` with the solvability constants ``c0, c1``."""
    nu = params.nu
    mu = mu_j(params, 1)
    G = nonlinear_sources([w00, w01], [w00.deriv(), w01.deriv()], None)

    def chain(c0, c1):
        ws = {}
        obs = {}
        for l, c in ((3, c0), (2, c1), (1, a1), (0, b1)):
            F = G[l]
            for m in (1, 2):
                if l + m <= 3:
                    wn = ws[l + m]
                    if m == 1:
                        F = F + wn * (-1j * (l + 1) * (0.5 + nu)) + wn.deriv().shift(-1) * (2.0 * (l + 1))
                    else:
                        F = F + wn.shift(-2) * ((l + 1) * (l + 2))
            ws[l], obs[l] = laurent_solve(mu, F, c)
        return ws, obs

    _, o00 = chain(0.0, 0.0)
    _, o10 = chain(1.0, 0.0)
    _, o01 = chain(0.0, 1.0)
    # obstructions at y^-3 of W11 and W10 are affine in (c0, c1)
    M = np.array([[o10[1] - o00[1], o01[1] - o00[1]],
                  [o10[0] - o00[0], o01[0] - o00[0]]])
    rhs = -np.array([o00[1], o00[0]])
    c0, c1 = np.linalg.solve(M, rhs)
    ws, obs = chain(c0, c1)
    return ws, {"c0": complex(c0), "c1": complex(c1), "obstruction": max(abs(v) for v in obs.values())}


def _layer0_series(params: BlowupParams, a0: complex, b0: complex) -> tuple[Laurent, Laurent]:
    nu = params.nu
    mu = mu_j(params, 0)
    e1 = _e1_series(mu)
    w01 = e1 * a0
    F = w01 * (-1j * (0.5 + nu)) + w01.deriv().shift(-1) * 2.0
    w00, _ = laurent_solve(mu, F, b0)
    return w00, w01


def _rhs_factory(params: BlowupParams, keys: list):
    nu = params.nu
    mus = {j: mu_j(params, j) for j, _ in keys}
    pos = {k: i for i, k in enumerate(keys)}

    def rhs(y, s):
        W = s[0::2]
        D = s[1::2]
        out = np.empty_like(s)
        out[0::2] = D
        G = None
        if any(j == 1 for j, _ in keys):
            w0 = [W[pos[(0, 0)]], W[pos[(0, 1)]]]
            d0 = [D[pos[(0, 0)]], D[pos[(0, 1)]]]
            G = nonlinear_sources(w0, d0, y)
        for (j, l), i in pos.items():
            F = G[l] if (j == 1 and G is not None) else 0.0
            n1 = pos.get((j, l + 1))
            if n1 is not None:
                F = F - 1j * (l + 1) * (0.5 + nu) * W[n1] + 2.0 * (l + 1) * D[n1] / y
            n2 = pos.get((j, l + 2))
            if n2 is not None:
                F = F + (l + 1) * (l + 2) * W[n2] / y ** 2
            w, d = W[i], D[i]
            out[2 * i + 1] = -d / y + w / y ** 2 + 0.5j * y * d - mus[j] * w - F
        return out

    return rhs


def build_selfsim(params: BlowupParams, boundary: dict, j_max: int = 0, y_max: float = 40.0,
                  rtol: float = 1e-12, atol: float = 1e-14) -> SelfSimilarLayer:
    """Solve layers ``j <= j_max`` with boundary data ``{j: (a_j, b_j)}``."""
    if j_max not in (0, 1):
        raise ValueError("only j_max in {0, 1} is supported")
    a0, b0 = boundary[0]
    w00, w01 = _layer0_series(params, a0, b0)
    series = {(0, 1): w01, (0, 0): w00}
    consts = {}
    if j_max >= 1:
        a1, b1 = boundary.get(1, (0.0, 0.0))
        ws, info = _near_zero_j1(params, w00, w01, a1, b1)
        for l, s in ws.items():
            series[(1, l)] = s
        consts.update(info)
    keys = sorted(series, key=lambda k: (k[0], -k[1]))
    s0 = np.array([v for k in keys for v in (series[k](Y0), series[k].d(Y0))], dtype=complex)
    sol = solve_ivp(_rhs_factory(params, keys), (Y0, y_max), s0, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise MatchFailure(f"self-similar march failed: {sol.message}")
    profiles = {k: Profile(k[0], k[1], series[k], sol.sol, i, y_max) for i, k in enumerate(keys)}
    # handoff check: the series is valid well past y0
    y1 = 1.0
    for k, p in profiles.items():
        ref = series[k](y1)
        got = sol.sol(y1)[2 * p.index]
        scale = max(abs(ref), 1.0)
        if abs(ref - got) > 1e-9 * scale:
            raise MatchFailure(f"series/ODE mismatch {abs(ref - got):.3g} for W_{k}")
    mus = [mu_j(params, j) for j in range(j_max + 1)]
    ab = [boundary.get(j, (0.0, 0.0)) for j in range(j_max + 1)]
    return SelfSimilarLayer(params, j_max, profiles, mus, [complex(x[0]) for x in ab],
                            [complex(x[1]) for x in ab], consts, y_max=y_max)


def solve_layer0(params: BlowupParams, a0: complex, b0: complex, y_max: float = 40.0,
                 rtol: float = 1e-12) -> tuple[Profile, Profile]:
    """``(W_{0,1}, W_{0,0})`` with ``W_{0,1} = a0 e_0^1``, ``W_{0,0} = W^0_{0,0} + b0 e_0^1``."""
    layer = build_selfsim(params, {0: (a0, b0)}, 0, y_max, rtol)
    return layer.W(0, 1), layer.W(0, 0)


# ---------------------------------------------------------------------------
# residuals


def _fd_second(y: np.ndarray, f: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    w = fornberg_weights(0.0, np.arange(-4, 5) * h, 2)
    n = len(f)
    d1 = np.zeros(n - 8, dtype=complex)
    d2 = np.zeros(n - 8, dtype=complex)
    for k in range(9):
        d1 += w[1, k] * f[k:n - 8 + k]
        d2 += w[2, k] * f[k:n - 8 + k]
    return d1, d2


def layer_residual(layer: SelfSimilarLayer, j: int, l: int, lo: float, hi: float,
                   h: float = 1e-3, relative: bool = True) -> float:
    """Discrete ``(Lss - mu_j) W_{j,l} - RHS`` with 8th-order differences.

    Samples are uniform in ``ln y`` (step h).  The sup is scaled by
    ``max(1, sup |W|)`` on the window when ``relative``.
    """
    nu = layer.params.nu
    x = np.arange(np.log(lo) - 4 * h, np.log(hi) + 4.5 * h, h)
    y = np.exp(x)
    yc = y[4:-4]
    W = layer.W(j, l)(y)
    dx, dxx = _fd_second(x, W, h)
    d1 = dx / yc
    d2 = (dxx - dx) / yc ** 2
    w = W[4:-4]
    op = -d2 - d1 / yc + w / yc ** 2 + 0.5j * yc * d1 - mu_j(layer.params, j) * w
    F = np.zeros_like(w)
    if (j, l + 1) in layer.profiles:
        p = layer.W(j, l + 1)
        F += -1j * (l + 1) * (0.5 + nu) * p(yc) + 2.0 * (l + 1) * p.d(yc) / yc
    if (j, l + 2) in layer.profiles:
        F += (l + 1) * (l + 2) * layer.W(j, l + 2)(yc) / yc ** 2
    if j == 1:
        w0 = [layer.W(0, 0)(yc), layer.W(0, 1)(yc)]
        d0 = [layer.W(0, 0).d(yc), layer.W(0, 1).d(yc)]
        F += nonlinear_sources(w0, d0, yc)[l]
    res = np.max(np.abs(op - F))
    if relative:
        res /= max(1.0, float(np.max(np.abs(w))))
    return float(res)


# ---------------------------------------------------------------------------
# far field


def _ls(cols: list, data: np.ndarray) -> tuple[np.ndarray, float, float]:
    A = np.column_stack(cols)
    sc = np.linalg.norm(A, axis=0)
    sc[sc == 0] = 1.0
    coef, *_ = np.linalg.lstsq(A / sc, data, rcond=None)
    cond = float(np.linalg.cond(A / sc))
    coef = coef / sc
    nrm = np.linalg.norm(data)
    res = float(np.linalg.norm(A @ coef - data) / nrm) if nrm > 0 else 0.0
    return coef, res, cond


def far_window(y_max: float, lo: float = 14.0, h: float = 0.01) -> np.ndarray:
    """Uniform fit window; the upper end keeps >= 16 samples per local period."""
    hi = min(y_max, 4.0 * np.pi / (16.0 * h))
    if hi <= lo:
        raise FitIllConditioned("fit window is empty")
    return np.arange(lo, hi, h)


def far_field_fit(layer: SelfSimilarLayer, lo: float = 14.0, K: int = 24,
                  max_cond: float = 1e8) -> dict:
    """Leading far-field coefficients and the tables ``beta0``, ``beta1``.

    For ``j = 0`` the fit uses the formal solutions of the coupled pair
    (exact structure, two unknowns per profile).  For ``j = 1`` the
    oscillating coefficient is swamped by interaction terms and is not
    resolved; only the smooth coefficients are fitted.
    """
    p = layer.params
    nu = p.nu
    y = far_window(layer.y_max, lo)
    mu0 = mu_j(p, 0)
    f1 = formal_solve(mu0, 0.0, None, 1.0, K)
    f2 = formal_solve(mu0, 0.25, None, 1.0, K)
    P1 = formal_solve(mu0, 0.0, f1.shifted_source(nu), 0.0, K)
    P2 = formal_solve(mu0, 0.25, f2.shifted_source(nu), 0.0, K)
    W01, W00 = layer.W(0, 1)(y), layer.W(0, 0)(y)
    c01, r01, k01 = _ls([f1(y), f2(y)], W01)
    A01, B01 = c01
    c00, r00, k00 = _ls([f1(y), f2(y)], W00 - A01 * P1(y) - B01 * P2(y))
    A00, B00 = c00
    if max(k01, k00) > max_cond:
        raise FitIllConditioned(f"far-field fit condition {max(k01, k00):.3g}")
    beta0 = {(0, 0): complex(A00), (0, 1): complex(A01 * (1.0 + P1.c[0, 1]))}
    beta1 = {(0, 0): complex(B00), (0, 1): complex(B01 * (1.0 + P2.c[0, 1]))}
    info = {"A01": complex(A01), "B01": complex(B01), "A00": complex(A00), "B00": complex(B00),
            "log01_smooth": complex(P1.c[0, 1]), "log01_osc": complex(P2.c[0, 1]),
            "residual": {(0, 1): r01, (0, 0): r00}, "cond": max(k01, k00),
            "window": (float(y[0]), float(y[-1]))}
    if layer.j_max >= 1:
        p1 = far_exponents(p, 1)[0]
        A = {}
        for l in range(4):
            S = 3 - l
            cols = []
            for k in range(3):
                for s in range(S + 1):
                    cols.append(y ** (p1 - 2 * k) * np.log(y) ** s)
            c, r, _ = _ls(cols, layer.W(1, l)(y))
            for s in range(S + 1):
                A[(l, s)] = complex(c[s])
            info["residual"][(1, l)] = r
        for n in range(4):
            beta0[(1, n)] = sum(A[(l, n - l)] for l in range(n + 1) if (l, n - l) in A)
            beta1[(1, n)] = 0.0j
        info["beta1_unresolved"] = [1]
    layer.beta0, layer.beta1 = beta0, beta1
    layer.fit_info = info
    return {"beta0": beta0, "beta1": beta1, **info}


# ---------------------------------------------------------------------------
# matching


def match_boundary_data(exp, j_max: int | None = None, lo: float = 5.0, hi: float | None = None,
                        max_cond: float = 1e8) -> dict:
    """Boundary data ``a_j, b_j`` from the far field of the inner expansion.

    ``j = 0``: ``W_in ~ 1/rho - z/2`` at large rho, so ``a_0 = -c11/2`` and
    ``b_0 = -c10/2`` with ``z^1 ~ c11 rho ln rho + c10 rho``; grids reaching
    rho = 1000 use the window [20, 900] with three tail orders.
    ``j = 1``: the ``rho ln rho`` and ``rho`` coefficients of the ``T^2`` term
    of the stereographic inner profile, after removing the ``rho^3`` and
    ``rho ln^{2,3} rho`` parts predicted by the ``j = 0`` layer and by
    solvability.
    """
    p = exp.params
    if j_max is None:
        j_max = min(max(exp.order - 1, 0), 1)
    out = {"cond": {}}
    z1 = exp.layers[0]
    if not np.any(z1.values):
        out.update({j: (0.0j, 0.0j) for j in range(j_max + 1)})
        return out
    long = exp.grid.r_max >= 1000.0
    if hi is None:
        hi = 900.0 if long else min(60.0, 0.9 * exp.grid.r_max)
    if long:
        lo = max(lo, 20.0)
    fit = _inner_far_fit(z1, lo, hi, n_tail=3 if long else 2)
    if fit["cond"] > max_cond:
        raise FitIllConditioned(f"inner far-field fit condition {fit['cond']:.3g}")
    a0, b0 = -fit["c11"] / 2.0, -fit["c10"] / 2.0
    out[0] = (complex(a0), complex(b0))
    out["cond"][0] = fit["cond"]
    out["c11"], out["c10"] = fit["c11"], fit["c10"]
    if j_max >= 1:
        if exp.order < 2:
            raise ValueError("j = 1 matching needs the inner expansion to order 2")
        out[1], out["cond"][1], out["j1_check"] = _match_j1(exp, a0, b0, max_cond)
    return out


def stereo_series(exp, order: int | None = None) -> np.ndarray:
    """T-series coefficients of ``(V1 + i V2)/(1 + V3)`` for the inner profile."""
    from .inner import _sqrt_series, _tmul, frame

    K = exp.order if order is None else order
    rho = exp.grid.nodes
    n = len(rho)
    z = np.zeros((K + 1, n), dtype=complex)
    for k in range(1, min(K, exp.order) + 1):
        z[k] = exp.layers[k - 1].values
    gam = _sqrt_series(_tmul(z, z.conj()).real.astype(complex))
    Q, f1, f2 = frame(rho)
    one = np.zeros_like(z)
    one[0] = 1.0
    num = (one + gam) * Q[:, 0] + z.real * f1[:, 0] + z.imag * f2[:, 0]
    num = num + 1j * ((one + gam) * Q[:, 1] + z.real * f1[:, 1] + z.imag * f2[:, 1])
    den = one + (one + gam) * Q[:, 2] + z.real * f1[:, 2] + z.imag * f2[:, 2]
    # series division num/den (den[0] = 1 + h3 > 0 away from rho = 0)
    out = np.zeros_like(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(K + 1):
            acc = num[k].copy()
            for i in range(1, k + 1):
                acc -= den[i] * out[k - i]
            out[k] = acc / den[0]
    return out


def _match_j1(exp, a0, b0, max_cond, rho_max=1000.0, lo=20.0):
    from .geometry import RadialGrid
    from .inner import build_inner

    p = exp.params
    w00, w01 = _layer0_series(p, a0, b0)
    _, consts = _near_zero_j1(p, w00, w01, 0.0, 0.0)
    c0, c1 = consts["c0"], consts["c1"]
    if exp.grid.r_max < 0.5 * rho_max:
        # the rho ln rho term is only separable from the decaying tail on a long grid
        exp = build_inner(p.replace(order_N=2), RadialGrid.geometric(rho_max, 8192, 0.25))
    ws = stereo_series(exp, 2)
    rho = exp.grid.nodes
    sel = (rho >= lo) & (rho <= 0.9 * exp.grid.r_max)
    x = rho[sel]
    lx = np.log(x)
    data = ws[2][sel] - w01.coef(3) * x ** 3 * lx - w00.coef(3) * x ** 3
    tail = [x ** -1 * lx ** s for s in range(5)]
    coef, res, cond = _ls([x * lx, x] + tail, data - c0 * x * lx ** 3 - c1 * x * lx ** 2)
    if cond > max_cond:
        raise FitIllConditioned(f"j = 1 matching fit condition {cond:.3g}")
    # consistency: refit with the ln^3, ln^2 coefficients free
    coef2, _, _ = _ls([x * lx ** 3, x * lx ** 2, x * lx, x] + tail, data)
    check = {"c0": c0, "c1": c1, "fit_l3": complex(coef2[0]), "fit_l2": complex(coef2[1]),
             "residual": res}
    return (complex(coef[0]), complex(coef[1])), cond, check
