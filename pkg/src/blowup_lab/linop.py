"""Linearized operator ``L = -Delta + (1 - 2 h1^2)/rho^2`` about the bubble.

Provides the explicit kernel pair ``(h1, h2)``, a discrete application of L
and the variation-of-parameters solver for ``L z = F`` with
``z(0) = z'(0) = 0``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import xlogy

from .errors import QuadratureFailure, SingularOrigin
from .geometry import RadialField, RadialGrid
from .harmonic import HarmonicProfile

_Q = HarmonicProfile(1)


class KernelPair:
    """Closed forms of ``h1`` and ``h2 = (rho^4 + 4 rho^2 ln rho - 1)/(rho (rho^2 + 1))``."""

    @staticmethod
    def h1(rho):
        return _Q.h1(rho)

    @staticmethod
    def dh1(rho):
        return _Q.dh1(rho)

    @staticmethod
    def h2(rho):
        rho = np.asarray(rho, dtype=float)
        return (rho ** 4 + 4.0 * xlogy(rho * rho, rho) - 1.0) / (rho * (rho * rho + 1.0))

    @staticmethod
    def rho_h2(rho):
        """``rho * h2``, finite at the origin (value -1)."""
        rho = np.asarray(rho, dtype=float)
        return (rho ** 4 + 4.0 * xlogy(rho * rho, rho) - 1.0) / (rho * rho + 1.0)

    @staticmethod
    def dh2(rho):
        rho = np.asarray(rho, dtype=float)
        num = rho ** 4 + 4.0 * rho * rho * np.log(rho) - 1.0
        dnum = 4.0 * rho ** 3 + 8.0 * rho * np.log(rho) + 4.0 * rho
        den = rho ** 3 + rho
        dden = 3.0 * rho * rho + 1.0
        return (dnum * den - num * dden) / den ** 2

    @classmethod
    def wronskian(cls, rho):
        """``rho (h2 h1' - h1 h2')`` at the given radii."""
        rho = np.asarray(rho, dtype=float)
        return rho * (cls.h2(rho) * cls.dh1(rho) - cls.h1(rho) * cls.dh2(rho))


def potential(rho):
    """``(1 - 2 h1^2)/rho^2`` for rho > 0."""
    rho = np.asarray(rho, dtype=float)
    return (1.0 - 2.0 * _Q.h1(rho) ** 2) / rho ** 2


def apply_L(f, check_origin: bool = True) -> RadialField:
    """Discrete ``L f`` for an odd radial field (regular limit at rho = 0)."""
    if not isinstance(f, RadialField):
        raise TypeError("apply_L expects a RadialField")
    g = f.grid
    v = f.values
    if check_origin and np.any(np.abs(v[0]) > 1e-12):
        raise SingularOrigin("L f is singular unless f(0) = 0")
    lap = g.laplacian(v, 1, -1)
    out = np.empty_like(lap)
    rho = g.nodes[1:]
    pot = -2.0 * _Q.h1_over_r(rho) ** 2
    if v.ndim > 1:
        pot = pot[:, None]
    out[1:] = -lap[1:] + pot * v[1:]
    out[0] = 0.0
    return f.with_values(out)


def wronskian_constant(radii=(0.5, 1.0, 2.0, 10.0, 30.0)) -> float:
    """Measured value of ``rho (h2 h1' - h1 h2')``; raises if it varies."""
    w = KernelPair.wronskian(np.asarray(radii, dtype=float))
    if np.ptp(w) > 1e-10 * max(1.0, abs(w[0])):
        raise AssertionError(f"Wronskian is not constant: spread {np.ptp(w):.3g}")
    return float(np.mean(w))


# ---------------------------------------------------------------------------
# quadrature


def _simpson_panels(fn, a, b, fa, fb, fm):
    w = (b - a) / 6.0
    return w.reshape(w.shape + (1,) * (fa.ndim - 1)) * (fa + 4.0 * fm + fb)


def adaptive_simpson(fn: Callable, edges: np.ndarray, atol: float = 1e-10, rtol: float = 1e-13,
                     max_depth: int = 40, budget: int = 5_000_000) -> np.ndarray:
    """Integrals of ``fn`` over consecutive panels ``[edges[i], edges[i+1]]``.

    Vectorized adaptive Simpson: every panel is refined independently until
    the Richardson estimate is below ``max(atol * width/total, rtol*|S|)``.
    ``fn`` must accept arrays and may return several stacked outputs along
    the last axis.
    """
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    total = float(edges[-1] - edges[0]) or 1.0
    fa, fb = fn(a), fn(b)
    fm = fn(0.5 * (a + b))
    whole = _simpson_panels(fn, a, b, fa, fb, fm)
    result = np.zeros_like(whole)
    owner = np.arange(len(a))
    tol = atol * (b - a) / total
    evals = 3 * len(a)
    for _ in range(max_depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        evals += 2 * len(a)
        left = _simpson_panels(fn, a, m, fa, fm, flm)
        right = _simpson_panels(fn, m, b, fm, fb, frm)
        err = left + right - whole
        s = left + right + err / 15.0
        errn = np.abs(err)
        scale = np.abs(s)
        if errn.ndim > 1:
            errn = errn.max(axis=-1)
            scale = scale.max(axis=-1)
        done = errn <= 15.0 * np.maximum(tol, rtol * scale)
        np.add.at(result, owner[done], s[done])
        keep = ~done
        if not np.any(keep):
            return result
        if evals > budget:
            break
        a2 = np.concatenate([a[keep], m[keep]])
        b2 = np.concatenate([m[keep], b[keep]])
        fa2 = np.concatenate([fa[keep], fm[keep]])
        fb2 = np.concatenate([fm[keep], fb[keep]])
        fm2 = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        owner = np.concatenate([owner[keep], owner[keep]])
        tol = np.concatenate([tol[keep], tol[keep]]) / 2.0
        a, b, fa, fb, fm = a2, b2, fa2, fb2, fm2
    raise QuadratureFailure(f"adaptive Simpson exceeded its budget ({evals} evaluations)")


def _combine(grid: RadialGrid, i1: np.ndarray, i2: np.ndarray, wr: float) -> np.ndarray:
    rho = grid.nodes
    h1 = KernelPair.h1(rho)
    # h2 * I1 with the rho -> 0 limit: h2 ~ -1/rho, I1 = O(rho^2)
    h2i1 = np.empty_like(i1)
    h2i1[1:] = KernelPair.h2(rho[1:]).reshape((-1,) + (1,) * (i1.ndim - 1)) * i1[1:]
    h2i1[0] = 0.0
    h1b = h1.reshape((-1,) + (1,) * (i1.ndim - 1))
    return (h1b * i2 - h2i1) / wr


def solve_zero_ic(rhs, grid: RadialGrid | None = None, wronskian: float | None = None,
                  atol: float = 1e-10) -> RadialField:
    """Solve ``L z = rhs`` with ``z(0) = z'(0) = 0`` by variation of parameters.

    ``z(rho) = (1/W)[h1(rho) int_0^rho s h2 F ds - h2(rho) int_0^rho s h1 F ds]``
    with ``W = -rho (h2 h1' - h1 h2') = 4``.

    Parameters
    ----------
    rhs : RadialField or callable
        Sampled right side, or a vectorized function of rho (then the
        integrals use adaptive Simpson on each grid panel).
    grid : RadialGrid, optional
        Required when ``rhs`` is callable.
    wronskian : float, optional
        Override of the normalization (default: measured, ``-wronskian_constant()``).
    """
    wr = -wronskian_constant() if wronskian is None else wronskian
    if callable(rhs) and not isinstance(rhs, RadialField):
        if grid is None:
            raise ValueError("a grid is needed for a callable right side")
        rho = grid.nodes

        def integrand(s):
            f = np.asarray(rhs(s))
            a = KernelPair.rho_h2(s) * f
            b = s * KernelPair.h1(s) * f
            return np.stack([a, b], axis=-1)

        panels = adaptive_simpson(integrand, rho, atol=atol)
        cum = np.zeros((len(rho),) + panels.shape[1:], dtype=panels.dtype)
        cum[1:] = np.cumsum(panels, axis=0)
        i2, i1 = cum[..., 0], cum[..., 1]
        return RadialField(grid, _combine(grid, i1, i2, wr), m=1)
    grid = rhs.grid
    rho = grid.nodes
    f = rhs.values
    shape = (-1,) + (1,) * (f.ndim - 1)
    i2 = grid.cumulative(KernelPair.rho_h2(rho).reshape(shape) * f, -1)
    i1 = grid.cumulative((rho * KernelPair.h1(rho)).reshape(shape) * f, -1)
    return RadialField(grid, _combine(grid, i1, i2, wr), m=1)


def far_field_fit(field: RadialField, lo: float, hi: float, n_tail: int = 3) -> dict:
    """Fit ``z ~ c11 rho ln rho + c10 rho + sum_j rho^{-1-2j}(a + b ln + c ln^2)``.

    Returns the two growing coefficients and the relative fit residual.
    """
    rho = field.grid.nodes
    sel = (rho >= lo) & (rho <= hi)
    x = rho[sel]
    lx = np.log(x)
    cols = [x * lx, x]
    for j in range(n_tail):
        p = x ** (-1.0 - 2.0 * j)
        cols += [p, p * lx, p * lx * lx]
    a = np.column_stack(cols)
    y = field.values[sel]
    scale = np.linalg.norm(a, axis=0)
    coef, *_ = np.linalg.lstsq(a / scale, y, rcond=None)
    coef = coef / scale
    res = np.linalg.norm(a @ coef - y) / np.linalg.norm(y)
    return {"c11": complex(coef[0]), "c10": complex(coef[1]), "residual": float(res),
            "cond": float(np.linalg.cond(a / scale))}


def default_inner_grid(rho_max: float = 64.0, n: int = 4096, scale: float = 0.25) -> RadialGrid:
    return RadialGrid.geometric(rho_max, n, scale)


def kernel_check_grid(rho_max: float = 64.0, n: int = 4096) -> RadialGrid:
    """Grid for kernel identities; coarser near 0 to limit roundoff in L."""
    return RadialGrid.geometric(rho_max, n, 0.5)
