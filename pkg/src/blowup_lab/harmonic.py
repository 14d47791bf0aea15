"""Harmonic map profiles phi_m = (h1, 0, h3) and derived potentials."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RadialGrid, SphereField


@dataclass(frozen=True)
class HarmonicProfile:
    """Closed-form degree-m harmonic map ``(h1^m, 0, h3^m)``."""

    m: int = 1

    def _x(self, r):
        r = np.asarray(r, dtype=float)
        return r, r ** self.m

    def h1(self, r):
        r, x = self._x(r)
        return 2.0 * x / (x * x + 1.0)

    def h3(self, r):
        r, x = self._x(r)
        return (x * x - 1.0) / (x * x + 1.0)

    def h1_over_r(self, r):
        """``h1/r``, regular at the origin."""
        r, x = self._x(r)
        return 2.0 * r ** (self.m - 1) / (x * x + 1.0)

    def dh1(self, r):
        return -self.m * self.h1_over_r(r) * self.h3(r)

    def dh3(self, r):
        return self.m * self.h1_over_r(r) * self.h1(r)

    def d2h1(self, r):
        r, x = self._x(r)
        m = self.m
        p = (1.0 + m) * x ** 4 - 6.0 * m * x * x + (m - 1.0)
        if m == 1:
            # p vanishes like r^2 here, so divide it by r exactly
            p_r = 2.0 * r ** 3 - 6.0 * r
            core = p_r
        else:
            core = r ** (m - 2) * p
        return m * 2.0 * core / (x * x + 1.0) ** 3

    def d2h3(self, r):
        q = self.h1_over_r(r)
        return -self.m * q * q * (2.0 * self.m * self.h3(r) + 1.0)

    def vector(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape + (3,))
        out[..., 0] = self.h1(r)
        out[..., 2] = self.h3(r)
        return out


def eval_profile(m: int, r):
    """Return ``(h1, h3, dh1/dr, dh3/dr)`` for the degree-m profile."""
    p = HarmonicProfile(m)
    return p.h1(r), p.h3(r), p.dh1(r), p.dh3(r)


def kappa(r, m: int = 1):
    """Potential ``-2 h1^2 / r^2``; tends to -8 at the origin for m = 1."""
    q = HarmonicProfile(m).h1_over_r(r)
    return -2.0 * q * q


def harmonic_field(grid: RadialGrid, m: int = 1, lam: float = 1.0, alpha: float = 0.0) -> SphereField:
    """``e^{alpha R} phi_m(lam r)`` sampled on the grid."""
    v = HarmonicProfile(m).vector(lam * grid.nodes)
    f = SphereField(grid, v, m, check=False)
    return f.rotated(alpha) if alpha else f


def stationarity_defect(grid: RadialGrid, m: int = 1) -> np.ndarray:
    """Samples of ``Delta Q + R^2 Q / r^2 - kappa Q`` with discrete Laplacians."""
    p = HarmonicProfile(m)
    r = grid.nodes
    par = 1 if m % 2 == 0 else -1
    lap1 = grid.laplacian(p.h1(r), m, par)
    lap3 = grid.laplacian(p.h3(r), 0, 1)
    # kappa for general m carries the m^2 factor of the angular term
    kap = -2.0 * m * m * p.h1_over_r(r) ** 2
    out = np.zeros((len(r), 3))
    out[:, 0] = lap1 - kap * p.h1(r)
    out[:, 2] = lap3 - kap * p.h3(r)
    return out
