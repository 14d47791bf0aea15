"""Radial grids, equivariant field containers and S^2 geometry.

Grids are images of a uniform parameter grid ``s`` under a smooth odd map
``r = r(s)``: the identity (uniform spacing) or ``scale * sinh(s)``
(uniform near the origin, geometric in the tail).  Because the map is odd,
fields of definite parity extend across ``r = 0`` by reflection, so the
finite-difference stencils stay centred all the way down to the origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import ConfigError, GridMismatch, GridTooCoarse, PoleError

POLE_TOL = 1e-12
UNIT_TOL = 1e-10

# 6th-order central stencils (offsets -3..3)
_C1 = np.array([-1.0 / 60, 3.0 / 20, -3.0 / 4, 0.0, 3.0 / 4, -3.0 / 20, 1.0 / 60])
_C2 = np.array([1.0 / 90, -3.0 / 20, 3.0 / 2, -49.0 / 18, 3.0 / 2, -3.0 / 20, 1.0 / 90])
_HW = 3


def fornberg_weights(z: float, x: Sequence[float], m: int) -> np.ndarray:
    """Finite-difference weights on nodes ``x`` for derivatives 0..m at ``z``.

    Returns an array ``c`` with ``c[k, j]`` the weight of node ``j`` in the
    k-th derivative (Fornberg's recursion).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def _interval_weights(nodes: Sequence[float]) -> np.ndarray:
    """Weights integrating the interpolant through ``nodes`` over [0, 1]."""
    nodes = np.asarray(nodes, dtype=float)
    p = np.arange(len(nodes))
    vander = nodes[None, :] ** p[:, None]
    return np.linalg.solve(vander, 1.0 / (p + 1.0))


# one-sided closures for the last three nodes: node n-1-j uses the last 7 nodes
_RIGHT = [fornberg_weights(float(6 - j), np.arange(7.0), 2) for j in range(_HW)]
_QUAD_CENTRAL = _interval_weights([-2, -1, 0, 1, 2, 3])
_QUAD_RIGHT = [_interval_weights(np.arange(6.0) - (5 - j)) for j in (1, 2)]


class RadialGrid:
    """Discretization of the half line ``[0, r_max]``.

    Parameters
    ----------
    s : array
        Uniform parameter nodes starting at 0.
    kind : {"uniform", "geometric"}
        Map used to produce radii from ``s``.
    scale : float
        Length scale of the geometric map ``r = scale * sinh(s)``.
    """

    def __init__(self, s: np.ndarray, kind: str = "uniform", scale: float = 1.0):
        s = np.asarray(s, dtype=float)
        if s.ndim != 1 or len(s) < 8:
            raise ConfigError("a radial grid needs at least 8 nodes")
        if s[0] != 0.0:
            raise ConfigError("first grid node must be r = 0")
        self.s = s
        self.h = float(s[1] - s[0])
        if not np.allclose(np.diff(s), self.h, rtol=1e-9, atol=0.0):
            raise ConfigError("parameter nodes must be uniform")
        self.kind = kind
        self.scale = float(scale)
        if kind == "uniform":
            self.nodes = s.copy()
            self.r_s = np.ones_like(s)
            self.r_ss = np.zeros_like(s)
        elif kind == "geometric":
            self.nodes = scale * np.sinh(s)
            self.r_s = scale * np.cosh(s)
            self.r_ss = self.nodes.copy()
        else:
            raise ConfigError(f"unknown spacing kind {kind!r}")
        self.nodes[0] = 0.0
        if np.any(np.diff(self.nodes) <= 0):
            raise ConfigError("grid nodes must be strictly increasing")

    @classmethod
    def uniform(cls, r_max: float, n: int) -> "RadialGrid":
        return cls(np.linspace(0.0, r_max, n), "uniform")

    @classmethod
    def geometric(cls, r_max: float = 200.0, n: int = 4096, scale: float = 1.0) -> "RadialGrid":
        s_max = np.arcsinh(r_max / scale)
        g = cls(np.linspace(0.0, s_max, n), "geometric", scale)
        g.nodes[-1] = r_max
        return g

    @classmethod
    def build(cls, kind: str = "geometric", r_max: float = 200.0, n: int = 4096,
              scale: float = 1.0) -> "RadialGrid":
        if kind == "uniform":
            return cls.uniform(r_max, n)
        return cls.geometric(r_max, n, scale)

    @property
    def r(self) -> np.ndarray:
        return self.nodes

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacing_kind(self) -> str:
        return self.kind

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return (self.kind == other.kind and len(self) == len(other)
                and np.array_equal(self.nodes, other.nodes))

    def __hash__(self):
        return hash((self.kind, len(self), self.r_max, self.scale))

    def describe(self) -> dict:
        return {"kind": self.kind, "n": len(self), "r_max": self.r_max, "scale": self.scale}

    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.nodes)))

    def spacing_near(self, r0: float) -> float:
        i = min(int(np.searchsorted(self.nodes, r0)), len(self) - 2)
        return float(self.nodes[i + 1] - self.nodes[i])

    # ---- finite differences -------------------------------------------------
    def _pad(self, f: np.ndarray, parity: int) -> np.ndarray:
        ghost = parity * f[_HW:0:-1]
        return np.concatenate([ghost, f], axis=0)

    def _ds(self, f: np.ndarray, parity: int, order: int) -> np.ndarray:
        n = f.shape[0]
        g = self._pad(f, parity)
        w = _C1 if order == 1 else _C2
        out = np.zeros_like(f)
        m = n - _HW
        for k in range(7):
            out[:m] += w[k] * g[k:k + m]
        for j in range(_HW):
            i = n - 1 - j
            wr = _RIGHT[j][order]
            out[i] = np.tensordot(wr, f[n - 7:], axes=(0, 0))
        return out / self.h ** order

    def d1(self, f: np.ndarray, parity: int = -1) -> np.ndarray:
        """First radial derivative of samples with the given parity at r=0."""
        f = np.asarray(f)
        return self._ds(f, parity, 1) / _bcast(self.r_s, f)

    def d2(self, f: np.ndarray, parity: int = -1) -> np.ndarray:
        """Second radial derivative."""
        f = np.asarray(f)
        fs = self._ds(f, parity, 1)
        fss = self._ds(f, parity, 2)
        rs = _bcast(self.r_s, f)
        return (fss - _bcast(self.r_ss, f) * fs / rs) / rs ** 2

    def over_r(self, f: np.ndarray, parity: int = -1, df: np.ndarray | None = None) -> np.ndarray:
        """``f / r`` with the regular limit at the origin."""
        f = np.asarray(f)
        out = np.empty_like(f, dtype=np.result_type(f, float))
        r = _bcast(self.nodes[1:], f[1:])
        out[1:] = f[1:] / r
        if parity == -1:
            out[0] = (self.d1(f, parity) if df is None else df)[0]
        else:
            out[0] = 0.0
        return out

    def laplacian(self, f: np.ndarray, m: int = 0, parity: int | None = None) -> np.ndarray:
        """``f'' + f'/r - m^2 f/r^2`` with regular limits at r = 0."""
        f = np.asarray(f)
        if parity is None:
            parity = 1 if m % 2 == 0 else -1
        df = self.d1(f, parity)
        ddf = self.d2(f, parity)
        out = np.empty_like(ddf)
        r = _bcast(self.nodes[1:], f[1:])
        out[1:] = ddf[1:] + df[1:] / r - m * m * f[1:] / r ** 2
        out[0] = 2.0 * ddf[0] if m == 0 else 0.0
        return out

    # ---- quadrature ---------------------------------------------------------
    def integrate(self, g: np.ndarray) -> np.ndarray | float:
        """``int_0^{r_max} g dr`` (composite Simpson in the parameter)."""
        g = np.asarray(g)
        return simpson(g * _bcast(self.r_s, g), x=self.s, axis=0)

    def area_integral(self, g: np.ndarray) -> float:
        """``2 pi int g r dr``: the integral over the plane of a radial function."""
        g = np.asarray(g)
        return 2.0 * np.pi * self.integrate(g * _bcast(self.nodes, g))

    def cumulative(self, g: np.ndarray, parity: int = -1) -> np.ndarray:
        """``G_i = int_0^{r_i} g dr`` by 6th-order local interpolation.

        ``parity`` is the reflection parity of ``g`` about r = 0.
        """
        g = np.asarray(g)
        q = g * _bcast(self.r_s, g)
        n = q.shape[0]
        qp = self._pad(q, parity)
        seg = np.zeros((n - 1,) + q.shape[1:], dtype=q.dtype)
        m = n - 3  # intervals [i, i+1] with i+3 <= n-1
        for k in range(6):
            seg[:m] += _QUAD_CENTRAL[k] * qp[_HW + k - 2:_HW + k - 2 + m]
        for j, i in ((2, n - 3), (1, n - 2)):
            seg[i] = np.tensordot(_QUAD_RIGHT[j - 1], q[n - 6:], axes=(0, 0))
        out = np.zeros_like(q)
        out[1:] = np.cumsum(seg, axis=0) * self.h
        return out

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return fn(self.nodes)

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.nodes >= lo) & (self.nodes <= hi)


def _bcast(a: np.ndarray, like: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape + (1,) * (like.ndim - 1))


def check_same_grid(a: RadialGrid, b: RadialGrid) -> None:
    if a is not b and a != b:
        raise GridMismatch("fields are sampled on different grids")


@dataclass(frozen=True)
class BlowupParams:
    """Scalar parameters of one approximate-solution construction."""

    nu: float
    alpha0: float = 0.0
    delta: float = 0.2
    order_N: int = 1
    eps1: float | None = None
    eps2: float = 0.25
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.eps1 is None:
            object.__setattr__(self, "eps1", self.nu / 2.0)
        if self.check:
            self.validate()

    def validate(self) -> None:
        if not self.nu > 1.0:
            raise ConfigError(f"nu must exceed 1 (got {self.nu})")
        if not 0.0 < self.eps1 < self.nu:
            raise ConfigError(f"eps1 must lie in (0, nu) (got {self.eps1})")
        if not 0.0 < self.eps2 < 0.5:
            raise ConfigError(f"eps2 must lie in (0, 1/2) (got {self.eps2})")
        if not 0.0 < self.delta <= 0.5:
            raise ConfigError(f"delta must lie in (0, 0.5] (got {self.delta})")
        if int(self.order_N) != self.order_N or self.order_N < 1:
            raise ConfigError(f"order_N must be a positive integer (got {self.order_N})")

    @classmethod
    def unchecked(cls, **kw) -> "BlowupParams":
        """Parameters that skip validation (guards and diagnostics only)."""
        return cls(check=False, **kw)

    @property
    def d(self) -> complex:
        return complex(self.alpha0, -(0.5 + self.nu))

    def lam(self, t):
        return np.asarray(t, dtype=float) ** (-0.5 - self.nu)

    def alpha(self, t):
        return self.alpha0 * np.log(t)

    def replace(self, **kw) -> "BlowupParams":
        data = dict(nu=self.nu, alpha0=self.alpha0, delta=self.delta, order_N=self.order_N,
                    eps1=self.eps1, eps2=self.eps2, check=self.check)
        if "nu" in kw and "eps1" not in kw:
            data["eps1"] = None
        data.update(kw)
        return BlowupParams(**data)

    def as_dict(self) -> dict:
        return {"nu": self.nu, "alpha0": self.alpha0, "delta": self.delta,
                "order_N": int(self.order_N), "eps1": self.eps1, "eps2": self.eps2}


class LogGrid:
    """Nodes ``r = exp(x)`` with x uniform on ``[ln r_min, ln r_max]``.

    Used away from the origin, where the profiles carry singular powers of r.
    Derivatives are 8th-order in x with one-sided stencils at both ends.
    """

    kind = "log"
    _W = 4

    def __init__(self, r_min: float, r_max: float, n: int):
        if not (0 < r_min < r_max) or n < 16:
            raise ConfigError("log grid needs 0 < r_min < r_max and n >= 16")
        self.x = np.linspace(np.log(r_min), np.log(r_max), n)
        self.h = float(self.x[1] - self.x[0])
        self.nodes = np.exp(self.x)
        w = self._W
        offs = np.arange(-w, w + 1)
        self._central = fornberg_weights(0.0, offs * self.h, 2)
        self._edge = []
        for i in range(w):
            self._edge.append(fornberg_weights(i * self.h, np.arange(2 * w + 1) * self.h, 2))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    def _dx(self, f: np.ndarray, order: int) -> np.ndarray:
        f = np.asarray(f)
        n, w = len(f), self._W
        out = np.zeros_like(f, dtype=np.result_type(f, float))
        c = self._central[order]
        for k in range(2 * w + 1):
            out[w:n - w] += c[k] * f[k:n - 2 * w + k]
        for i in range(w):
            e = self._edge[i][order]
            out[i] = np.tensordot(e, f[:2 * w + 1], axes=(0, 0))
            out[n - 1 - i] = np.tensordot(e[::-1] * (-1) ** order, f[n - 2 * w - 1:], axes=(0, 0))
        return out

    def d1(self, f, parity=None) -> np.ndarray:
        return self._dx(f, 1) / self.nodes

    def d2(self, f) -> np.ndarray:
        return (self._dx(f, 2) - self._dx(f, 1)) / self.nodes ** 2

    def laplacian(self, f) -> np.ndarray:
        """``f'' + f'/r`` (equals ``f_xx / r^2``)."""
        return self._dx(f, 2) / self.nodes ** 2

    def cumulative(self, g) -> np.ndarray:
        """``int_{r_min}^{r} g dr`` via the antiderivative of a quintic spline in x."""
        from scipy.interpolate import make_interp_spline

        q = np.asarray(g) * self.nodes
        anti = make_interp_spline(self.x, q, k=5).antiderivative()
        return anti(self.x) - anti(self.x[0])


class RadialField:
    """Samples of a (possibly complex or vector valued) radial function.

    ``m`` is the equivariance index used by the Sobolev norms: a scalar
    column ``f`` represents the planar function ``f(r) e^{i m theta}``.
    ``vector=True`` marks three real columns that form an S^2-type field
    (``v1 + i v2`` carries index ``m``, ``v3`` carries index 0).
    """

    def __init__(self, grid: RadialGrid, values, m: int = 1, parity: int | None = None,
                 vector: bool = False):
        values = np.asarray(values)
        if values.shape[0] != len(grid):
            raise GridMismatch("sample count does not match the grid")
        self.grid = grid
        self.values = values
        self.m = int(m)
        self.parity = parity if parity is not None else (1 if self.m % 2 == 0 else -1)
        self.vector = vector

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, values, self.m, self.parity, self.vector)

    def d1(self) -> np.ndarray:
        return self.grid.d1(self.values, self.parity)

    def __call__(self, r):
        """Linear interpolation (diagnostic use)."""
        v = self.values
        if np.iscomplexobj(v):
            return np.interp(r, self.r, v.real) + 1j * np.interp(r, self.r, v.imag)
        return np.interp(r, self.r, v)

    def to_csv(self, path, name: str = "f", rname: str = "r") -> None:
        v = self.values
        if np.iscomplexobj(v):
            write_csv(path, [rname, f"re_{name}", f"im_{name}"], [self.r, v.real, v.imag])
        elif v.ndim == 1:
            write_csv(path, [rname, name], [self.r, v])
        else:
            write_csv(path, [rname] + [f"{name}{j + 1}" for j in range(v.shape[1])],
                      [self.r] + [v[:, j] for j in range(v.shape[1])])


class SphereField:
    """An m-equivariant map ``u = e^{m theta R} v(r)`` sampled on a grid."""

    def __init__(self, grid: RadialGrid, samples, m: int = 1, check: bool = True):
        samples = np.asarray(samples, dtype=float)
        if samples.shape != (len(grid), 3):
            raise GridMismatch("sphere samples must have shape (n, 3)")
        self.grid = grid
        self.samples = samples
        self.m = int(m)
        if check:
            self.validate()

    def validate(self, tol: float = UNIT_TOL) -> None:
        err = np.max(np.abs(np.linalg.norm(self.samples, axis=1) - 1.0))
        if err > tol:
            raise ConfigError(f"sphere field leaves S^2 by {err:.3g}")
        if np.hypot(self.samples[0, 0], self.samples[0, 1]) > 1e-8:
            raise ConfigError("equivariant regularity requires v1(0) = v2(0) = 0")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def v1(self):
        return self.samples[:, 0]

    @property
    def v2(self):
        return self.samples[:, 1]

    @property
    def v3(self):
        return self.samples[:, 2]

    def normalized(self) -> "SphereField":
        v = self.samples / np.linalg.norm(self.samples, axis=1)[:, None]
        return SphereField(self.grid, v, self.m, check=False)

    def unit_error(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.samples, axis=1) - 1.0)))

    def rotated(self, beta: float) -> "SphereField":
        c, s = np.cos(beta), np.sin(beta)
        v = self.samples.copy()
        v[:, 0] = c * self.v1 - s * self.v2
        v[:, 1] = s * self.v1 + c * self.v2
        return SphereField(self.grid, v, self.m, check=False)

    def as_radial(self) -> RadialField:
        return RadialField(self.grid, self.samples, m=self.m, vector=True)

    def to_csv(self, path) -> None:
        write_csv(path, ["r", "v1", "v2", "v3"], [self.r, self.v1, self.v2, self.v3])

    @classmethod
    def constant(cls, grid: RadialGrid, m: int = 1) -> "SphereField":
        v = np.zeros((len(grid), 3))
        v[:, 2] = 1.0
        return cls(grid, v, m)


class StereoField:
    """Stereographic image ``w = (v1 + i v2)/(1 + v3)`` with masked south poles."""

    def __init__(self, grid: RadialGrid, samples, pole_mask=None, m: int = 1):
        self.grid = grid
        self.samples = np.asarray(samples, dtype=complex)
        if pole_mask is None:
            pole_mask = ~np.isfinite(self.samples)
        self.pole_mask = np.asarray(pole_mask, dtype=bool)
        self.m = m


def sphere_to_stereo(v: np.ndarray):
    """Pointwise chart map; returns ``(w, pole_mask)``."""
    v = np.asarray(v, dtype=float)
    den = 1.0 + v[..., 2]
    mask = v[..., 2] <= -1.0 + POLE_TOL
    safe = np.where(mask, 1.0, den)
    w = (v[..., 0] + 1j * v[..., 1]) / safe
    w = np.where(mask, np.nan + 0j, w)
    return w, mask


def stereo_to_sphere(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    a = np.abs(w) ** 2
    out = np.empty(w.shape + (3,))
    out[..., 0] = 2.0 * w.real / (1.0 + a)
    out[..., 1] = 2.0 * w.imag / (1.0 + a)
    out[..., 2] = (1.0 - a) / (1.0 + a)
    return out


def stereo_project(v: SphereField) -> StereoField:
    w, mask = sphere_to_stereo(v.samples)
    return StereoField(v.grid, w, mask, v.m)


def stereo_unproject(w: StereoField) -> SphereField:
    if np.any(w.pole_mask):
        raise PoleError(f"{int(np.sum(w.pole_mask))} south-pole points in the chart")
    return SphereField(w.grid, stereo_to_sphere(w.samples), w.m)


def energy(v: SphereField) -> float:
    """Equivariant Dirichlet energy ``pi int r (|v_r|^2 + m^2 (v1^2+v2^2)/r^2) dr``."""
    g = v.grid
    p = 1 if v.m % 2 == 0 else -1
    d12 = g.d1(v.samples[:, :2], p)
    d3 = g.d1(v.v3, 1)
    q = g.over_r(v.samples[:, :2], p, df=d12)
    dens = np.sum(d12 ** 2, axis=1) + d3 ** 2 + v.m ** 2 * np.sum(q ** 2, axis=1)
    return float(np.pi * g.integrate(dens * g.nodes))


def degree(v: SphereField) -> float:
    """Boundary-value reduction of the degree for equivariant maps."""
    return float(v.m * (v.v3[-1] - v.v3[0]) / 2.0)


def _components(f) -> list:
    """Split a field into (samples, m) scalar components for the norms."""
    if isinstance(f, SphereField):
        return [(f.v1 + 1j * f.v2, f.m), (f.v3, 0)]
    if isinstance(f, RadialField):
        v = f.values
        if f.vector:
            return [(v[:, 0] + 1j * v[:, 1], f.m), (v[:, 2], 0)]
        if v.ndim == 1:
            return [(v, f.m)]
        return [(v[:, j], f.m) for j in range(v.shape[1])]
    raise TypeError(f"cannot take a norm of {type(f).__name__}")


def _hdot_sq(grid: RadialGrid, f: np.ndarray, m: int, k: int) -> float:
    p = 1 if m % 2 == 0 else -1
    if k == 0:
        return grid.area_integral(np.abs(f) ** 2)
    if k == 1:
        df = grid.d1(f, p)
        dens = np.abs(df) ** 2
        if m:
            dens = dens + m * m * np.abs(grid.over_r(f, p, df=df)) ** 2
        return grid.area_integral(dens)
    lap = grid.laplacian(f, m, p)
    if k == 2:
        return grid.area_integral(np.abs(lap) ** 2)
    return _hdot_sq(grid, lap, m, 1)


def sobolev_norm(f, k: int, weight: str | None = None, homogeneous: bool = False) -> float:
    """Discrete H^k (or homogeneous H^k) norm of an equivariant planar field.

    Parameters
    ----------
    f : SphereField or RadialField
    k : int
        Derivative order, 0 to 3.
    weight : None or "x"
        ``"x"`` multiplies by ``<x> = sqrt(1 + r^2)`` (only with k = 0).
    homogeneous : bool
        Return the seminorm of order k alone instead of the sum over orders <= k.
    """
    if k not in (0, 1, 2, 3):
        raise ConfigError("Sobolev order must be 0, 1, 2 or 3")
    grid = f.grid
    if len(grid) < 4 * k + 1:
        raise GridTooCoarse(f"H^{k} needs at least {4 * k + 1} nodes")
    comps = _components(f)
    if weight is not None:
        if weight not in ("x", "<x>") or k != 0:
            raise ConfigError("the weighted norm is defined for k = 0 with weight <x>")
        w = 1.0 + grid.nodes ** 2
        return float(np.sqrt(sum(grid.area_integral(w * np.abs(c) ** 2) for c, _ in comps)))
    orders = [k] if homogeneous else range(k + 1)
    tot = sum(_hdot_sq(grid, c, m, j) for c, m in comps for j in orders)
    return float(np.sqrt(tot))


def write_csv(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write columns at 17 significant digits, dot decimal, no locale."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def taylor_slope(r: np.ndarray, f: np.ndarray, lo: float, hi: float) -> float:
    """Least-squares slope of log|f| against log r on [lo, hi]."""
    sel = (r >= lo) & (r <= hi) & (np.abs(f) > 0)
    return float(np.polyfit(np.log(r[sel]), np.log(np.abs(f[sel])), 1)[0])


def log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


__all__ = [
    "RadialGrid", "RadialField", "SphereField", "StereoField", "BlowupParams",
    "stereo_project", "stereo_unproject", "sphere_to_stereo", "stereo_to_sphere",
    "energy", "degree", "sobolev_norm", "write_csv", "read_csv", "fornberg_weights",
    "taylor_slope", "log_slope", "check_same_grid",
]
