"""Time integration of ``v_t = v x (Delta v + R^2 v / r^2)`` and run diagnostics.

The semi-discrete system ``v_i' = v_i x (A v)_i`` is advanced by the implicit
midpoint rule.  ``A`` acts componentwise (``m = 1`` on v1, v2 and ``m = 0`` on
v3) and is extracted once from the grid's finite-difference Laplacian as a
banded sparse matrix, which gives an exact Newton Jacobian.  The midpoint
rule keeps every ``|v_i|^2`` invariant, so renormalization only removes
solver-tolerance drift.
"""
from __future__ import annotations

import csv
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares
from scipy.sparse.linalg import splu

from .assembler import ApproximateSolution, eval_uN, proximity_norms, residual_rN, tension_fields
from .errors import ConfigError, FitDiverged, GridMismatch, StepRejected
from .geometry import RadialField, RadialGrid, SphereField, degree, energy, sobolev_norm
from .harmonic import HarmonicProfile

_Q = HarmonicProfile(1)
_BAND = 6  # widest stencil offset used by the grid's derivatives


def _probe_matrix(apply, n: int) -> sp.csr_matrix:
    """Sparse matrix of a banded linear map from 2*_BAND + 4 probe vectors."""
    ncol = 2 * _BAND + 4
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    for c in range(ncol):
        e = np.zeros(n)
        e[c::ncol] = 1.0
        out = apply(e)
        # each row sees at most one probed column within the band
        j = idx - ((idx - c) % ncol)
        j = np.where(idx - j > _BAND, j + ncol, j)
        ok = (j >= 0) & (j < n) & (np.abs(idx - j) <= _BAND) & (out != 0)
        rows.append(idx[ok])
        cols.append(j[ok])
        vals.append(out[ok])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


class TensionOperator:
    """``A`` with ``(A v)_i`` the discrete ``Delta v + R^2 v / r^2`` at node i."""

    def __init__(self, grid: RadialGrid):
        n = len(grid)
        self.grid = grid
        self.A1 = _probe_matrix(lambda f: grid.laplacian(f, 1), n)
        self.A0 = _probe_matrix(lambda f: grid.laplacian(f, 0), n)
        # interleaved 3n x 3n operator, unknown 3 i + c
        blocks = [self.A1, self.A1, self.A0]
        P = []
        for c, B in enumerate(blocks):
            B = B.tocoo()
            P.append(sp.coo_matrix((B.data, (3 * B.row + c, 3 * B.col + c)), shape=(3 * n, 3 * n)))
        self.A = (P[0] + P[1] + P[2]).tocsr()

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return (self.A @ v.reshape(-1)).reshape(-1, 3)


def _cross_matrix(a: np.ndarray) -> sp.csr_matrix:
    """Block diagonal of ``[a_i]_x`` (``[a]_x b = a x b``)."""
    n = len(a)
    i = np.arange(n)
    r, c, d = [], [], []
    for (p, q, s, k) in ((0, 1, -1, 2), (0, 2, 1, 1), (1, 0, 1, 2),
                         (1, 2, -1, 0), (2, 0, -1, 1), (2, 1, 1, 0)):
        r.append(3 * i + p)
        c.append(3 * i + q)
        d.append(s * a[:, k])
    return sp.csr_matrix((np.concatenate(d), (np.concatenate(r), np.concatenate(c))),
                         shape=(3 * n, 3 * n))


@dataclass
class FlowState:
    t: float
    v: SphereField
    history: deque = field(default_factory=lambda: deque(maxlen=4096))
    op: TensionOperator | None = field(default=None, repr=False)
    last_renorm: float = 0.0
    last_iterations: int = 0

    def __post_init__(self):
        if self.op is None:
            self.op = TensionOperator(self.v.grid)

    @property
    def grid(self) -> RadialGrid:
        return self.v.grid

    def rhs(self, v: np.ndarray | None = None) -> np.ndarray:
        v = self.v.samples if v is None else v
        out = np.cross(v, self.op(v))
        out[0] = 0.0
        out[-1] = 0.0
        return out


def stability_dt(grid: RadialGrid, c: float = 0.25) -> float:
    return c * grid.min_spacing() ** 2


def step(state: FlowState, dt: float, tol: float = 1e-12, max_iter: int = 50,
         guess: np.ndarray | None = None) -> FlowState:
    """One implicit-midpoint step; the end nodes stay pinned.

    ``guess`` seeds Newton (default: an explicit Euler predictor).
    """
    v0 = state.v.samples
    n = len(v0)
    op = state.op
    x = v0 + dt * state.rhs(v0) if guess is None else np.array(guess, dtype=float)
    x[0], x[-1] = v0[0], v0[-1]
    free = np.ones(3 * n, dtype=bool)
    free[:3] = False
    free[-3:] = False
    I = sp.identity(3 * n, format="csr")
    for it in range(1, max_iter + 1):
        m = 0.5 * (v0 + x)
        Am = op(m)
        G = x - v0 - dt * np.cross(m, Am)
        G[0] = G[-1] = 0.0
        # d/dx of m x A m with m = (v0 + x)/2
        J = I - 0.5 * dt * (_cross_matrix(m) @ op.A - _cross_matrix(Am))
        J = J[free][:, free].tocsc()
        try:
            dx = splu(J).solve(-G.reshape(-1)[free])
        except RuntimeError as exc:
            raise StepRejected(f"singular Newton matrix: {exc}") from exc
        upd = np.zeros(3 * n)
        upd[free] = dx
        x = x + upd.reshape(-1, 3)
        if not np.all(np.isfinite(x)):
            raise StepRejected("non-finite Newton iterate")
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise StepRejected(f"Newton did not reach {tol:g} in {max_iter} iterations")
    norm = np.linalg.norm(x, axis=1)
    renorm = float(np.max(np.abs(norm - 1.0)))
    x = x / norm[:, None]
    return FlowState(state.t + dt, SphereField(state.grid, x, state.v.m, check=False),
                     state.history, op, renorm, it)


@dataclass
class ModulationFit:
    lam: float
    alpha: float
    residual: float

    def __post_init__(self):
        if not self.lam > 0:
            raise FitDiverged("lambda must be positive")


def orbit(grid: RadialGrid, lam: float, alpha: float) -> np.ndarray:
    """Samples of ``e^(alpha R) Q(lam r)``."""
    Q = _Q.vector(lam * grid.nodes)
    c, s = math.cos(alpha), math.sin(alpha)
    return np.column_stack([c * Q[:, 0] - s * Q[:, 1], s * Q[:, 0] + c * Q[:, 1], Q[:, 2]])


def _h1_residual(grid: RadialGrid, d: np.ndarray, sw: np.ndarray) -> np.ndarray:
    d12 = grid.d1(d[:, :2], -1)
    d3 = grid.d1(d[:, 2], 1)
    q = grid.over_r(d[:, :2], -1, df=d12)
    return np.concatenate([(sw[:, None] * d12).ravel(), sw * d3, (sw[:, None] * q).ravel()])


def half_energy_radius(v: SphereField) -> float:
    g = v.grid
    d12 = g.d1(v.samples[:, :2], -1)
    d3 = g.d1(v.v3, 1)
    q = g.over_r(v.samples[:, :2], -1, df=d12)
    dens = np.sum(d12 ** 2, axis=1) + d3 ** 2 + np.sum(q ** 2, axis=1)
    cum = g.cumulative(dens * g.nodes, parity=1)
    i = int(np.searchsorted(cum, 0.5 * cum[-1]))
    return float(g.nodes[min(max(i, 1), len(g) - 1)])


def fit_modulation(v: SphereField, lam0: float | None = None,
                   alpha0: float | None = None) -> ModulationFit:
    """Closest point ``e^(alpha R) Q(lam .)`` in the homogeneous H^1 distance."""
    g = v.grid
    if lam0 is None:
        lam0 = 1.0 / half_energy_radius(v)
    if alpha0 is None:
        i = int(np.argmin(np.abs(g.nodes - 1.0 / lam0)))
        alpha0 = float(np.angle(v.v1[i] + 1j * v.v2[i]))
    sw = np.sqrt(np.maximum(2.0 * np.pi * g.nodes * g.r_s * g.h, 0.0))

    r = g.nodes

    def fun(x):
        lam = math.exp(min(max(x[0], -40.0), 40.0))
        return _h1_residual(g, v.samples - orbit(g, lam, x[1]), sw)

    def jac(x):
        lam = math.exp(min(max(x[0], -40.0), 40.0))
        c, s = math.cos(x[1]), math.sin(x[1])
        rho = lam * r
        dh1, dh3 = rho * _Q.dh1(rho), rho * _Q.dh3(rho)
        d_lam = np.column_stack([c * dh1, s * dh1, dh3])
        o = orbit(g, lam, x[1])
        d_alpha = np.column_stack([-o[:, 1], o[:, 0], np.zeros_like(r)])
        return -np.column_stack([_h1_residual(g, d_lam, sw), _h1_residual(g, d_alpha, sw)])

    sol = least_squares(fun, [math.log(lam0), alpha0], jac=jac, method="lm", xtol=1e-15,
                        ftol=1e-15, gtol=1e-15, max_nfev=2000)
    lam = math.exp(sol.x[0])
    if not (1e-8 <= lam <= 1e8) or not np.all(np.isfinite(sol.x)):
        raise FitDiverged(f"modulation fit left lambda in [1e-8, 1e8]: {lam:.3g}")
    alpha = float(math.remainder(sol.x[1], 2.0 * math.pi))
    return ModulationFit(lam, alpha, float(np.linalg.norm(sol.fun)))


def _scale_of(sol, t: float) -> float:
    if isinstance(sol, ApproximateSolution):
        return t ** (-0.5 - sol.params.nu)
    return float(getattr(sol, "scale", 1.0))


def rescaled_grid(grid: RadialGrid, lam: float) -> RadialGrid:
    """The same nodes seen in the variable ``y = lam r``."""
    if grid.kind == "geometric":
        out = RadialGrid(grid.s, "geometric", grid.scale * lam)
        out.nodes[-1] = grid.r_max * lam
        return out
    return RadialGrid(grid.s * lam, "uniform")


def functionals_J(S: RadialField, sol, t: float, grid: RadialGrid | None = None) -> tuple:
    """``(J0, J1, J3)`` of a difference field S given on the rescaled grid.

    ``J3`` uses ``s_t = (u + s) x Delta s + s x Delta u + r`` with ``u`` the
    approximate solution and ``r`` its residual, all on the physical grid.
    """
    if grid is not None and S.grid != grid:
        raise GridMismatch("S is not sampled on the given grid")
    lam = _scale_of(sol, t)
    yg = S.grid
    vals = np.asarray(S.values, dtype=float)
    if vals.shape != (len(yg), 3):
        raise GridMismatch("S must hold three components per node")
    y = yg.nodes
    kap = -8.0 / (1.0 + y * y) ** 2
    Sf = RadialField(yg, vals, m=1, vector=True)
    J0 = sobolev_norm(Sf, 0) ** 2
    grad2 = sobolev_norm(Sf, 1, homogeneous=True) ** 2
    J1 = grad2 + yg.area_integral(kap * np.sum(vals ** 2, axis=1))
    xg = rescaled_grid(yg, 1.0 / lam)
    u, _, ten_u = tension_fields(sol, t, xg)
    ten_s = np.column_stack([xg.laplacian(vals[:, 0], 1), xg.laplacian(vals[:, 1], 1),
                             xg.laplacian(vals[:, 2], 0)])
    res, _ = residual_rN(sol, t, xg)
    g = np.cross(u + vals, ten_s) + np.cross(vals, ten_u) + res.values
    gf = RadialField(xg, g, m=1, vector=True)
    kx = -8.0 / (1.0 + (lam * xg.nodes) ** 2) ** 2
    J3 = (lam ** -4 * sobolev_norm(gf, 1, homogeneous=True) ** 2
          + lam ** -2 * xg.area_integral(kx * np.sum(g ** 2, axis=1)))
    return float(J0), float(J1), float(J3)


@dataclass
class DtPolicy:
    """``kind="spacing"``: dt = c (min spacing)^2; ``kind="fixed"``: dt as given."""

    kind: str = "spacing"
    c: float = 0.25
    dt: float | None = None

    def step_size(self, grid: RadialGrid) -> float:
        if self.kind == "spacing":
            return stability_dt(grid, self.c)
        if self.kind == "fixed" and self.dt:
            return abs(float(self.dt))
        raise ConfigError(f"bad dt policy {self.kind!r}")


COLUMNS = ["t", "energy", "degree", "J0", "J1", "J3", "lambda_fit", "alpha_fit", "prox_H1", "prox_wL2"]


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    reach: float | None = None
    collapsed: bool = False
    completed: bool = False
    planned_steps: int = 0
    max_renorm: float = 0.0
    steps: int = 0

    def add(self, row: dict) -> None:
        if self.rows:
            t0, t1 = self.rows[-1]["t"], row["t"]
            if t1 == t0 or (len(self.rows) > 1 and (t1 - t0) * (t0 - self.rows[-2]["t"]) <= 0):
                raise ValueError("report times must be strictly monotone")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow(["%.17g" % r[c] for c in COLUMNS])


def diagnostics(state: FlowState, reference=None, fit: bool = True) -> dict:
    v = state.v
    row = {c: math.nan for c in COLUMNS}
    row.update(t=state.t, energy=energy(v), degree=degree(v))
    if fit:
        try:
            mf = fit_modulation(v)
            row.update(lambda_fit=mf.lam, alpha_fit=mf.alpha)
        except FitDiverged:
            pass
    if reference is not None:
        ref = eval_uN(reference, state.t, v.grid)
        prox = proximity_norms(v, ref, state.t)
        row.update(prox_H1=prox["H1"], prox_wL2=prox["weightedL2"])
        lam = _scale_of(reference, state.t)
        S = RadialField(rescaled_grid(v.grid, lam), v.samples - ref.samples, m=1, vector=True)
        row["J0"], row["J1"], row["J3"] = functionals_J(S, reference, state.t)
    return row


def _dyadic(n: int) -> bool:
    return n <= 1 or (n & (n - 1)) == 0


def integrate(state: FlowState, t_end: float, dt_policy: DtPolicy | None = None,
              reference=None, fit: bool = True, resolve: int = 32,
              max_steps: int | None = None, max_seconds: float | None = None):
    """Step from ``state.t`` to ``t_end`` (either direction).

    Diagnostics are taken at step counts 0, 1, 2, 4, 8, ... and at the end.
    The run stops early, reporting its reach, once the fitted bubble scale
    is no longer resolved by ``resolve`` nodes per ``1/lambda`` near 0, or
    when the step or wall-clock budget is spent.
    """
    dt_policy = DtPolicy() if dt_policy is None else dt_policy
    if t_end == state.t:
        raise ConfigError("t_end must differ from the current time")
    h = dt_policy.step_size(state.grid)
    nsteps = max(1, int(math.ceil(abs(t_end - state.t) / h - 1e-9)))
    dt = (t_end - state.t) / nsteps
    if abs(dt) < 4.0 * np.spacing(max(abs(state.t), abs(t_end))):
        raise StepRejected(f"time step {abs(dt):.3g} is below the floating-point resolution "
                           f"of t = {state.t:.6g} ({nsteps:.3g} steps planned)")
    report = RunReport(planned_steps=nsteps)
    start = time.perf_counter()
    h0 = state.grid.spacing_near(0.0)

    def record(s):
        row = diagnostics(s, reference, fit)
        s.history.append((s.t, row))
        report.add(row)
        return row

    row = record(state)
    for k in range(1, nsteps + 1):
        state = step(state, dt)
        report.max_renorm = max(report.max_renorm, state.last_renorm)
        report.steps = k
        if _dyadic(k) or k == nsteps:
            row = record(state)
            lam = row["lambda_fit"]
            if np.isfinite(lam) and lam * h0 > 1.0 / resolve:
                report.collapsed = True
                break
        if k < nsteps and ((max_steps is not None and k >= max_steps) or
                           (max_seconds is not None and time.perf_counter() - start > max_seconds)):
            if not _dyadic(k):
                record(state)
            break
    report.reach = state.t
    report.completed = report.steps == nsteps
    return state, report
