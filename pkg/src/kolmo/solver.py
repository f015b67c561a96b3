"""Parametrix (Duhamel/Picard) solver for the degenerate chain equation

    d_t u + <A x + F(t, x), D_x u> + L_alpha u = -f,    u(T, .) = g,

on a periodic box. Freezing is always at the evaluation node, so the frozen
shift coincides with the flow and

    u(t, x) = (rho_{T-t} * g)(theta_{t,T}(x))
              + int_t^T [rho_{s-t} * (f + R^{t,x})(s)](theta_{t,s}(x)) ds

with ``R^{t,x}(s, y) = <F(s, y) - F(s, theta_{t,s}(x)), D_y u(s, y)>`` and
``rho_r`` the centred proxy kernel with Fourier transform ``exp(Psi_S(T_r p))``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.ndimage import map_coordinates
from scipy.special import gamma as gamma_fn

from .errors import AssumptionError, ConfigError, ContractionError, DomainError, InputError
from .flow import DriftSpec, FrozenKernel, FrozenProxy, integrate_flow
from .metric import MetricParams, holder_norm_estimate, regime_split, sample_pairs
from .ou import ChainMatrix, OUDensity, ScaleOps, resolvent
from .spacegrid import SpaceGrid
from .stable import LevyModel

log = logging.getLogger(__name__)


def check_standing_assumptions(alpha: float, beta: float, n: int) -> None:
    """Parameter constraints of the theory; raises naming the violated inequality."""
    if not (0.0 < alpha < 2.0):
        raise AssumptionError(f"need 0 < alpha < 2, got alpha = {alpha}")
    if not (0.0 < beta < 1.0):
        raise AssumptionError(f"need 0 < beta < 1, got beta = {beta}")
    if not (1.0 < alpha + beta < 2.0):
        raise AssumptionError(f"need 1 < alpha + beta < 2, got alpha + beta = {alpha + beta:g}")
    if alpha < 1.0:
        if not beta < alpha:
            raise AssumptionError(f"need beta < alpha when alpha < 1, got beta = {beta} >= alpha = {alpha}")
        lhs, rhs = 1.0 - alpha, (alpha - beta) / (1.0 + alpha * (n - 1))
        if not lhs < rhs:
            raise AssumptionError(
                f"need 1 - alpha < (alpha - beta)/(1 + alpha(n-1)) when alpha < 1, got {lhs:g} >= {rhs:g}")


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Terminal value problem for the chain equation.

    Attributes
    ----------
    A : ChainMatrix
    model : LevyModel
        Noise acting on the first block.
    beta : float
    T : float
        Horizon.
    drift : DriftSpec
    g : callable
        Terminal condition, maps (..., nd) to (...).
    f : callable, optional
        Source ``f(t, x)``; None means zero.
    """

    A: ChainMatrix
    model: LevyModel
    beta: float
    T: float
    drift: DriftSpec
    g: Callable
    f: Callable | None = None
    name: str = "problem"

    def __post_init__(self):
        check_standing_assumptions(self.model.alpha, self.beta, self.A.n)
        if self.T <= 0:
            raise InputError("horizon must be positive")
        if self.model.dimension != self.A.d or self.drift.n != self.A.n or self.drift.d != self.A.d:
            raise InputError("dimensions of A, noise and drift disagree")

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def metric(self) -> MetricParams:
        return MetricParams(self.A.n, self.A.d, self.alpha, self.beta)

    def source(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.f is None:
            return np.zeros(x.shape[:-1])
        return np.asarray(self.f(t, x), dtype=float)


@dataclass(eq=False)
class SolutionField:
    """Space-time samples of an iterate.

    Attributes
    ----------
    times : ndarray, shape (Nt + 1,)
    grid : SpaceGrid
    values : ndarray, shape (Nt + 1, *grid.points)
    grad : ndarray, shape (Nt + 1, *grid.points, nd)
        Fourth-order difference gradient of ``values``.
    iteration : int
    history : list of float
        Sup distances between successive iterates.
    factors : list of float
        Ratios of successive history entries.
    scale : float
        Scaling parameter used to produce the field (1 when unscaled).
    """

    times: np.ndarray
    grid: SpaceGrid
    values: np.ndarray
    grad: np.ndarray
    iteration: int = 0
    history: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    scale: float = 1.0

    @property
    def grad1(self) -> np.ndarray:
        """Gradient in the first (non-degenerate) coordinate only."""
        return self.grad[..., 0]

    @property
    def contraction(self) -> float:
        return self.factors[0] if self.factors else 0.0

    def _bracket(self, t):
        t = float(t)
        if not (self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12):
            raise InputError(f"time {t} outside the field")
        k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def slice_at(self, t) -> np.ndarray:
        """Grid values at time ``t`` (linear in time between nodes)."""
        k, w = self._bracket(t)
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def grad_slice_at(self, t) -> np.ndarray:
        k, w = self._bracket(t)
        return (1 - w) * self.grad[k] + w * self.grad[k + 1]

    def at(self, t, pts) -> np.ndarray:
        return self.grid.interpolate(self.slice_at(t), pts)

    def gradient_at(self, t, pts) -> np.ndarray:
        g = self.grad_slice_at(t)
        return np.stack([self.grid.interpolate(g[..., k], pts) for k in range(g.shape[-1])], axis=-1)

    def rows(self):
        """Run report rows ``(iter, sup_distance, factor)``."""
        out = []
        for k, h in enumerate(self.history, start=1):
            fac = self.factors[k - 2] if k >= 2 and k - 2 < len(self.factors) else float("nan")
            out.append((k, float(h), float(fac)))
        return out


def grid_gradient(grid: SpaceGrid, values: np.ndarray) -> np.ndarray:
    """Fourth-order periodic differences along every axis; shape (..., dims)."""
    lead = values.ndim - grid.dims
    return np.stack([grid.gradient_fd4(values, k, lead) for k in range(grid.dims)], axis=-1)


def _spline_prefilter(grid: SpaceGrid) -> np.ndarray:
    """Fourier multiplier turning samples into periodic cubic B-spline coefficients."""
    mult = np.ones(grid.points)
    for k, n in enumerate(grid.points):
        w = 2.0 * np.pi * np.fft.fftfreq(n)
        shape = [1] * grid.dims
        shape[k] = n
        mult = mult * (3.0 / (2.0 + np.cos(w))).reshape(shape)
    return mult


class DuhamelSolver:
    """Discrete Duhamel map on a periodic box.

    Parameters
    ----------
    problem : ProblemData
    grid : SpaceGrid
    n_time : int
        Number of time steps on ``[t_start, t_end]``.
    t_start, t_end : float, optional
        Sub-interval; defaults to ``[0, T]``.
    terminal : ndarray, optional
        Grid values replacing ``g`` at ``t_end``.
    ou : OUDensity, optional
        Shared projected-measure data.
    flow_substeps : int
        RK4 steps per time step for the flows.
    """

    def __init__(self, problem: ProblemData, grid: SpaceGrid, n_time: int, t_start=0.0, t_end=None,
                 terminal=None, ou: OUDensity | None = None, flow_substeps: int = 4):
        if n_time < 2:
            raise InputError("need at least two time steps")
        self.problem = problem
        self.grid = grid
        self.t_end = problem.T if t_end is None else float(t_end)
        self.times = np.linspace(float(t_start), self.t_end, n_time + 1)
        self.dt = self.times[1] - self.times[0]
        self.ou = ou or OUDensity(problem.A, problem.model)
        self.kernel = FrozenKernel(self.ou, grid)
        self.prefilter = _spline_prefilter(grid)
        self.mesh = grid.mesh()
        self.nodes = self.mesh.reshape(-1, grid.dims)
        self.drift = problem.drift
        self.active = self.drift.active_levels()
        self.substeps = int(flow_substeps)
        if terminal is None:
            self.terminal = np.asarray(problem.g(self.mesh), dtype=float)
        else:
            self.terminal = np.asarray(terminal, dtype=float)
            if self.terminal.shape != grid.points:
                raise InputError("terminal values must live on the grid")
        self.sources = np.array([problem.source(t, self.mesh) for t in self.times])
        self._coef_mult = {}
        self._flows = None
        if self.drift.autonomous:
            self._flows = self._integrate(self.times[0], len(self.times) - 1)

    # -- flows ----------------------------------------------------------------

    def _integrate(self, t0, n_lags):
        if self.drift.is_zero:
            return None
        path = integrate_flow(t0, self.nodes, self.drift, self.problem.A, t0 + n_lags * self.dt,
                              max(8, n_lags * self.substeps))
        return path.states[:: self.substeps] if n_lags * self.substeps >= 8 else \
            np.array([path.at(t0 + j * self.dt) for j in range(n_lags + 1)])

    def flows_from(self, k: int) -> np.ndarray:
        """``theta_{t_k, t_m}`` at every node for ``m = k..Nt``; shape (Nt+1-k, N, nd)."""
        n_lags = len(self.times) - 1 - k
        if self.drift.is_zero:
            res = [self.nodes @ resolvent(self.problem.A, j * self.dt).T for j in range(n_lags + 1)]
            return np.array(res)
        if self._flows is not None:
            return self._flows[: n_lags + 1]
        return self._integrate(self.times[k], n_lags)

    # -- Duhamel sweep ----------------------------------------------------------

    def _mult(self, lag: int):
        if lag not in self._coef_mult:
            self._coef_mult[lag] = self.kernel.multiplier(lag * self.dt) * self.prefilter
        return self._coef_mult[lag]

    def _eval(self, spectrum, lag, pts):
        coef = np.fft.ifftn(spectrum * self._mult(lag)).real
        idx = (pts - np.array(self.grid.lows)) / self.grid.spacing
        return map_coordinates(coef, idx.T, order=3, mode="grid-wrap", prefilter=False)

    def sweep(self, grad=None) -> np.ndarray:
        """One application of the Duhamel map.

        ``grad`` holds the gradient of the current iterate (shape (Nt+1, *points,
        nd)); None evaluates the proxy solution (zero remainder).
        """
        nt = len(self.times) - 1
        d = self.problem.A.d
        use_rem = grad is not None and self.active
        J_hat, D_hat = [], []
        for m, s in enumerate(self.times):
            J = self.sources[m].copy()
            lev_hat = {}
            if use_rem:
                Fm = self.drift(s, self.mesh)
                for i in self.active:
                    sl = slice(i * d, (i + 1) * d)
                    J += np.sum(Fm[..., sl] * grad[m][..., sl], axis=-1)
                    lev_hat[i] = [np.fft.fftn(grad[m][..., c]) for c in range(i * d, (i + 1) * d)]
            J_hat.append(np.fft.fftn(J))
            D_hat.append(lev_hat)
        g_hat = np.fft.fftn(self.terminal)
        out = np.empty((nt + 1,) + self.grid.points)
        out[nt] = self.terminal
        for k in range(nt):
            theta = self.flows_from(k)
            vals = np.empty((nt + 1 - k, len(self.nodes)))
            for j, m in enumerate(range(k, nt + 1)):
                pts = theta[j]
                v = self._eval(J_hat[m], j, pts)
                if use_rem:
                    for i in self.active:
                        Fi = self.drift.level(i, self.times[m], pts)
                        for c, spec in enumerate(D_hat[m][i]):
                            v -= Fi[:, c] * self._eval(spec, j, pts)
                vals[j] = v
            u = self._eval(g_hat, nt - k, theta[-1])
            u += integrate.simpson(vals, x=self.times[k:], axis=0)
            out[k] = u.reshape(self.grid.points)
        return out

    def field(self, values, **kw) -> SolutionField:
        return SolutionField(self.times.copy(), self.grid, values, grid_gradient(self.grid, values), **kw)


def proxy_solution(problem: ProblemData, grid: SpaceGrid, n_time: int, **kw) -> SolutionField:
    """Proxy solution ``u~`` (freezing at every node) on the solver grid."""
    solver = DuhamelSolver(problem, grid, n_time, **kw)
    return solver.field(solver.sweep(None))


def _sup(a, b) -> float:
    return float(np.max(np.abs(a - b)))


def picard_solve(problem: ProblemData, grid: SpaceGrid, n_time: int, max_iters: int = 25,
                 tol: float = 1e-9, auto_scale: bool = True, solver: DuhamelSolver | None = None,
                 smallness_target: float = 0.1, **kw) -> SolutionField:
    """Picard iteration ``u_{k+1} = u~ + int P~ R[u_k]`` started from the proxy.

    Raises
    ------
    ContractionError
        When the sup distance grows three times in a row.
    """
    solver = solver or DuhamelSolver(problem, grid, n_time, **kw)
    u = solver.sweep(None)
    history, factors = [], []
    if not solver.active:
        return solver.field(u, iteration=1, history=[0.0])
    it = 0
    for it in range(1, max_iters + 1):
        grad = grid_gradient(grid, u)
        un = solver.sweep(grad)
        history.append(_sup(un, u))
        u = un
        if len(history) >= 2:
            factors.append(history[-1] / history[-2] if history[-2] > 0 else 0.0)
            if auto_scale and len(factors) == 1 and factors[0] > 0.9:
                return _scaled_solve(problem, grid, n_time, smallness_target, factors[0], **kw)
        if history[-1] < tol:
            break
        if len(history) >= 4 and history[-1] > history[-2] > history[-3] > history[-4]:
            fac = factors[-1] if factors else float("nan")
            raise ContractionError(
                f"Picard iterates diverge (measured contraction factor {fac:.3g})", fac, list(history))
    return solver.field(u, iteration=it, history=history, factors=factors)


# -- scaling -------------------------------------------------------------------


@dataclass
class ScaledProblem:
    problem: ProblemData
    lam: float
    A_defect: float  # sup |lambda T^-1 A T - A|
    level_exponents: np.ndarray  # drift seminorm scales like lambda^e_i per level


def scale_problem(problem: ProblemData, lam: float) -> ScaledProblem:
    """Problem solved by ``u_lam(t, x) = u(lam t, T_lam x)`` on ``[0, T/lam]``."""
    if not (0.0 < lam <= 1.0):
        raise DomainError("lambda must lie in (0, 1]")
    A = problem.A
    a = problem.alpha
    sc = ScaleOps(A.n, A.d, a)
    Td = sc.T_diag(lam)
    A_lam = lam * (A.full() / Td[:, None]) * Td[None, :]
    defect = float(np.max(np.abs(A_lam - A.full())))
    d = A.d
    levels = []
    for i, Fi in enumerate(problem.drift.levels):
        if Fi is None:
            levels.append(None)
            continue
        fac = lam / Td[i * d]
        levels.append(lambda t, x, Fi=Fi, fac=fac: fac * Fi(lam * t, np.asarray(x) * Td))
    drift = DriftSpec(A.n, A.d, tuple(levels), problem.drift.norm_h * lam ** (problem.beta / a),
                      problem.drift.autonomous, f"scaled {problem.drift.name}")
    g = problem.g
    f = problem.f
    f_l = None if f is None else (lambda t, x: lam * f(lam * t, np.asarray(x) * Td))
    scaled = ProblemData(A, problem.model, problem.beta, problem.T / lam, drift,
                         lambda x: g(np.asarray(x) * Td), f_l, f"{problem.name}@{lam:g}")
    params = problem.metric
    gam = params.gamma_i
    expo = np.array([1.0 - params.degrees[i] / a + (gam[i] + problem.beta) / a for i in range(A.n)])
    return ScaledProblem(scaled, float(lam), defect, expo)


def scaled_grid(grid: SpaceGrid, A: ChainMatrix, alpha: float, lam: float) -> SpaceGrid:
    """Image of ``grid`` under ``x -> T_lam^{-1} x``."""
    Td = ScaleOps(A.n, A.d, alpha).T_diag(lam)
    return SpaceGrid(tuple(np.array(grid.lows) / Td), tuple(np.array(grid.widths) / Td), grid.points)


def smallness_scale(norm_h: float, alpha: float, beta: float, target: float = 0.1) -> float:
    """``lambda`` with ``lambda^{beta/alpha} ||F||_H = target`` (capped at 1)."""
    if not np.isfinite(norm_h) or norm_h <= 0:
        raise ConfigError("auto scaling needs a declared positive drift norm")
    return min(1.0, (target / norm_h) ** (alpha / beta))


def _scaled_solve(problem, grid, n_time, target, factor, **kw):
    lam = smallness_scale(problem.drift.norm_h, problem.alpha, problem.beta, target)
    log.info("contraction factor %.3g > 0.9, rescaling with lambda = %.4g", factor, lam)
    sp = scale_problem(problem, lam)
    sgrid = scaled_grid(grid, problem.A, problem.alpha, lam)
    kw = {k: v for k, v in kw.items() if k in ("ou", "flow_substeps")}
    chain = time_chain_solve(sp.problem, sp.problem.T, problem.T, sgrid, n_time, **kw)
    # values on mapped nodes coincide with the original nodes
    return SolutionField(chain.times * lam, grid, chain.values,
                         grid_gradient(grid, chain.values), chain.iteration, chain.history,
                         [factor] + chain.factors, lam)


def time_chain_solve(problem: ProblemData, T0: float, T_sub: float, grid: SpaceGrid, n_time: int,
                     **kw) -> SolutionField:
    """Backward chain of Picard solves on ``N = ceil(T0/T_sub)`` equal sub-intervals."""
    if T_sub <= 0 or T0 <= 0:
        raise InputError("positive horizons required")
    n_sub = max(1, math.ceil(T0 / T_sub - 1e-12))
    edges = np.linspace(0.0, T0, n_sub + 1)
    kw.setdefault("ou", OUDensity(problem.A, problem.model))
    terminal = None
    pieces, history, factors = [], [], []
    iters = 0
    for j in range(n_sub - 1, -1, -1):
        try:
            solver = DuhamelSolver(problem, grid, n_time, edges[j], edges[j + 1], terminal, **kw)
            part = picard_solve(problem, grid, n_time, auto_scale=False, solver=solver)
        except ContractionError as exc:
            raise ContractionError(f"sub-interval {j} [{edges[j]:.4g}, {edges[j + 1]:.4g}]: {exc}",
                                   exc.factor, exc.history) from exc
        terminal = part.values[0]
        pieces.append(part)
        history.extend(part.history)
        factors.extend(part.factors)
        iters = max(iters, part.iteration)
    pieces.reverse()
    times = np.concatenate([pieces[0].times] + [p.times[1:] for p in pieces[1:]])
    values = np.concatenate([pieces[0].values] + [p.values[1:] for p in pieces[1:]])
    return SolutionField(times, grid, values, grid_gradient(grid, values), iters, history, factors)


def wrap_error_bound(problem: ProblemData, grid: SpaceGrid, g_sup: float | None = None,
                     f_sup: float = 0.0) -> float:
    """Bound on ``sup |u_torus - u|`` from noise mass leaving the box.

    The first-block increment over the horizon exceeds the half-width with
    probability at most the stable tail summed over antipodal pairs; that mass
    sees wrapped data, costing at most twice the data oscillation.
    """
    from scipy.stats import levy_stable

    a = problem.alpha
    if g_sup is None:
        g_sup = float(np.max(np.abs(problem.g(grid.mesh()))))
    dirs, w = problem.model.measure.pairs()
    half = 0.5 * float(np.min(grid.widths[: problem.A.d]))
    tail = 0.0
    for wk in w:
        scale = (problem.T * wk) ** (1.0 / a)
        tail += 2.0 * float(levy_stable.sf(half / (len(w) * scale), a, 0.0))
    return 2.0 * (g_sup + problem.T * f_sup) * min(1.0, tail)


# -- remainder -----------------------------------------------------------------


def remainder(field: SolutionField, problem: ProblemData, t, x, s, y, n_steps: int = 256) -> np.ndarray:
    """``R^{t,x}(s, y) = <F(s, y) - F(s, theta_{t,s}(x)), D_y u(s, y)>``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float)
    theta = integrate_flow(t, x, problem.drift, problem.A, s, n_steps).states[-1] if s > t else x
    diff = problem.drift(s, y) - problem.drift(s, theta[None, :])
    return np.sum(diff * field.gradient_at(s, y), axis=-1)


# -- residual checks -------------------------------------------------------------


def stable_generator_constant(alpha: float) -> float:
    """``1 / int_0^inf (1 - cos r) r^{-1-alpha} dr``."""
    if abs(alpha - 1.0) < 1e-12:
        return 2.0 / math.pi
    return alpha / (gamma_fn(1.0 - alpha) * math.cos(math.pi * alpha / 2.0))


@dataclass
class GeneratorValue:
    value: np.ndarray
    budget: np.ndarray


def generator_pv(values, grid: SpaceGrid, model: LevyModel, pts, n: int, d: int, eps=None,
                 R=None, tail_tol=1e-4, periodic=False, gl_nodes=4) -> GeneratorValue:
    """Principal-value quadrature of ``L_alpha`` acting on the first block.

    ``L u(x) = C sum_pairs (w/2) int_0^inf [u(x+rs) + u(x-rs) - 2u(x)] r^{-1-alpha} dr``.
    The ball ``r < eps`` and the tail ``r > R`` enter the returned budget.
    Unless ``periodic`` is set, ``R`` is capped by the distance to the box
    faces so that no wrapped values are used.
    """
    a = model.alpha
    C = stable_generator_constant(a)
    dirs, pw = model.measure.pairs()
    total_w = float(np.sum(pw))  # total mass
    h = float(np.min(grid.spacing[:d]))
    eps = 2.0 * h if eps is None else eps
    if R is None:
        R = (C * total_w / (a * tail_tol)) ** (1.0 / a)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    coef = grid.spline(values)
    u0 = grid.interpolate(values, pts, coef)
    R_eff = R
    if not periodic:
        dist = np.min(np.minimum(pts[:, :d] - np.array(grid.lows[:d]),
                                 np.array(grid.lows[:d]) + np.array(grid.widths[:d]) - pts[:, :d]), axis=1)
        R_eff = np.minimum(R, np.maximum(dist, eps))
    R_eff = np.broadcast_to(np.asarray(R_eff, dtype=float), (len(pts),))
    xg, wg = leggauss(gl_nodes)
    out = np.zeros(len(pts))
    for k, p in enumerate(pts):
        edges = np.arange(eps, R_eff[k] + h / 2, h / 2)
        if edges[-1] < R_eff[k]:
            edges = np.append(edges, R_eff[k])
        lo, hi = edges[:-1], edges[1:]
        r = (0.5 * (hi - lo)[:, None] * xg[None, :] + 0.5 * (hi + lo)[:, None]).ravel()
        wr = (0.5 * (hi - lo)[:, None] * wg[None, :]).ravel() * r ** (-1.0 - a)
        acc = 0.0
        for s, w in zip(dirs, pw):
            shift = np.zeros(grid.dims)
            shift[:d] = s
            plus = grid.interpolate(values, p + r[:, None] * shift, coef)
            minus = grid.interpolate(values, p - r[:, None] * shift, coef)
            acc += 0.5 * w * float(np.sum((plus + minus - 2.0 * u0[k]) * wr))
        out[k] = C * acc
    # second derivatives near each probe only (the field may have a seam on the torus)
    d2f = np.max([np.abs(grid.gradient_fd4(grid.gradient_fd4(values, k), k)) for k in range(d)], axis=0)
    mesh = grid.mesh()
    d2 = np.empty(len(pts))
    for k, p in enumerate(pts):
        near = np.all(np.abs(mesh[..., :d] - p[:d]) <= eps + 2 * h, axis=-1)
        near &= np.all(np.abs(mesh[..., d:] - p[d:]) <= 2 * grid.spacing[d:], axis=-1)
        d2[k] = float(np.max(d2f[near])) if np.any(near) else float(np.max(d2f))
    small = 0.5 * d2 * C * total_w * eps ** (2.0 - a) / (2.0 - a)
    tail = 2.0 * float(np.max(np.abs(values))) * C * total_w * R_eff ** (-a) / a
    return GeneratorValue(out, small + tail)


@dataclass
class ResidualReport:
    residuals: np.ndarray
    budget: np.ndarray
    max_residual: float
    max_budget: float
    inconclusive: bool


def pde_residual(field: SolutionField, problem: ProblemData, probes, target: float = 1e-3,
                 periodic=False) -> ResidualReport:
    """``|d_t u + <Ax + F, D u> + L_alpha u + f|`` at probe points.

    Parameters
    ----------
    probes : sequence of (k, x)
        Interior time index ``1 <= k < Nt`` and a spatial point.

    The budget adds the generator's ball and tail terms to Richardson estimates
    of the time and space difference errors.
    """
    grid = field.grid
    A = problem.A
    res, bud = [], []
    nt = len(field.times) - 1
    for k, x in probes:
        if not (1 <= k < nt):
            raise InputError("probe time index must be interior")
        x = np.asarray(x, dtype=float)[None, :]
        t = field.times[k]
        dt = field.times[k + 1] - field.times[k]
        u = lambda j: float(grid.interpolate(field.values[j], x)[0])  # noqa: E731
        dtu = (u(k + 1) - u(k - 1)) / (2 * dt)
        err_t = 0.0
        if 2 <= k < nt - 1:
            dtu2 = (u(k + 2) - u(k - 2)) / (4 * dt)
            err_t = abs(dtu2 - dtu) / 3.0
        grad = np.array([grid.interpolate(field.grad[k][..., c], x)[0] for c in range(grid.dims)])
        coarse = SpaceGrid(grid.lows, grid.widths, tuple(p // 2 for p in grid.points))
        sub = field.values[k][tuple(slice(None, None, 2) for _ in range(grid.dims))]
        grad2 = np.array([coarse.interpolate(coarse.gradient_fd4(sub, c), x)[0] for c in range(grid.dims)])
        vel = x[0] @ A.full().T + problem.drift(t, x)[0]
        err_x = float(np.abs(vel) @ np.abs(grad2 - grad)) / 15.0
        gen = generator_pv(field.values[k], grid, problem.model, x, A.n, A.d, periodic=periodic)
        val = dtu + float(vel @ grad) + float(gen.value[0]) + float(problem.source(t, x)[0])
        res.append(abs(val))
        bud.append(err_t + err_x + float(np.max(gen.budget)))
    res, bud = np.array(res), np.array(bud)
    return ResidualReport(res, bud, float(res.max()), float(bud.max()), bool(bud.max() > target))


@dataclass(frozen=True)
class TestFunction:
    """``phi(t, x) = eta(t) chi(x)`` with ``eta(t) = exp(1 - T/t)`` and a smooth bump ``chi``."""

    centre: tuple
    radius: float
    T: float

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(1.0 - self.T / t[pos])
        return out

    def deta(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(1.0 - self.T / t[pos]) * self.T / t[pos] ** 2
        return out

    def chi(self, x):
        z2 = np.sum((np.asarray(x) - np.array(self.centre)) ** 2, axis=-1) / self.radius ** 2
        out = np.zeros(z2.shape)
        inside = z2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z2[inside]))
        return out


@dataclass
class WeakReport:
    defects: np.ndarray
    budgets: np.ndarray

    @property
    def worst_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.budgets > 0, self.defects / self.budgets, np.inf)
        return float(np.max(np.where(self.defects == 0, 0.0, r)))


def weak_residual(field: SolutionField, problem: ProblemData, tests, field_error: float = 0.0,
                  grad_error: float = 0.0) -> WeakReport:
    """Defect of the weak formulation for each test function.

    The drift term is paired as ``int phi <F, D u>`` (integration by parts
    moves the derivative onto ``u``), the Ornstein-Uhlenbeck term as
    ``-int u <A y, D phi>`` (``A`` is trace free) and ``L_alpha`` acts
    spectrally on the test function.

    ``field_error`` and ``grad_error`` are sup-norm error estimates of the field
    and its gradient; the budget adds them, weighted by the test function
    integrals, to a Richardson estimate of the space-time quadrature.
    """
    grid = field.grid
    A = problem.A
    d = A.d
    mesh = grid.mesh()
    freq = grid.frequency_mesh()
    from .stable import levy_symbol

    sym = levy_symbol(freq[..., :d], problem.model)
    Ax = mesh @ A.full().T
    defects, budgets = [], []
    times = field.times
    for tf in tests:
        chi = tf.chi(mesh)
        Lchi = np.fft.ifftn(sym * np.fft.fftn(chi)).real
        Dchi = grid_gradient(grid, chi)
        AxDchi = np.sum(Ax * Dchi, axis=-1)
        dens_u, dens_abs, dens_phi = [], [], []
        for k, t in enumerate(times):
            eta, deta = float(tf.eta(t)), float(tf.deta(t))
            u = field.values[k]
            Fd = problem.drift(t, mesh)
            op = -deta * chi + eta * (Lchi - AxDchi)
            dens = op * u + eta * chi * (np.sum(Fd * field.grad[k], axis=-1) + problem.source(t, mesh))
            dens_u.append(dens)
            dens_abs.append(np.abs(op))
            dens_phi.append(eta * chi * np.linalg.norm(Fd, axis=-1))
        dens_u = np.array(dens_u)
        space = lambda a: np.sum(a, axis=tuple(range(1, a.ndim))) * grid.cell_volume  # noqa: E731
        per_t = space(dens_u)
        total = integrate.simpson(per_t, x=times) + float(np.sum(field.values[-1] * chi)) * grid.cell_volume * float(tf.eta(times[-1]))
        # Richardson: every other time node and every other space node
        sub = tuple(slice(None, None, 2) for _ in range(grid.dims))
        coarse_vol = grid.cell_volume * 2 ** grid.dims
        per_t_c = np.array([np.sum(a[sub]) * coarse_vol for a in dens_u])
        end = float(np.sum((field.values[-1] * chi)[sub])) * coarse_vol * float(tf.eta(times[-1]))
        nt = len(times) - 1
        if nt % 2 == 0:
            t_coarse = integrate.simpson(per_t[::2], x=times[::2])
        else:
            t_coarse = integrate.trapezoid(per_t, x=times)
        # Richardson: fourth order in time (Simpson), at least second order in space
        quad = abs(t_coarse - integrate.simpson(per_t, x=times)) / 15.0 + abs(
            integrate.simpson(per_t_c, x=times) + end - total) / 3.0
        w_u = integrate.simpson(space(np.array(dens_abs)), x=times)
        w_g = integrate.simpson(space(np.array(dens_phi)), x=times)
        defects.append(abs(total))
        budgets.append(quad + field_error * w_u + grad_error * w_g)
    return WeakReport(np.array(defects), np.array(budgets))


# -- Schauder ratio ----------------------------------------------------------------


@dataclass
class SchauderReport:
    ratio: float
    u_norm: float
    f_norm: float
    g_norm: float
    noise: float


def _field_callable(grid, values):
    coef = grid.spline(values)
    return lambda pts: grid.interpolate(values, pts, coef)


def schauder_ratio(field: SolutionField, problem: ProblemData, pairs=None, part: str = "full",
                   time_stride: int = 1, pair_budget: int = 512, seed: int = 0, box=None,
                   diag_scale=None) -> SchauderReport:
    """``||u||_{C^{alpha+beta}} / (||f||_{C^beta} + ||g||_{C^{alpha+beta}})`` by sampled norms.

    Parameters
    ----------
    part : {"full", "seminorm"}
        Whether the sup norm enters the norms.
    box : (lows, highs), optional
        Sampling box; defaults to the middle half of the grid.
    diag_scale : ndarray, optional
        When given, the pair sample is mapped by ``x -> x / diag_scale`` (the
        fd step is mapped with the level-one factor); used for scaled problems.
    """
    if part not in ("full", "seminorm"):
        raise InputError("part must be 'full' or 'seminorm'")
    params = problem.metric
    a, b = problem.alpha, problem.beta
    grid = field.grid
    # pairs are drawn in unscaled coordinates, then mapped
    unscale = np.ones(grid.dims) if diag_scale is None else np.asarray(diag_scale, dtype=float)
    if pairs is None:
        if box is None:
            lo = (np.array(grid.lows) + 0.25 * np.array(grid.widths)) * unscale
            hi = (np.array(grid.lows) + 0.75 * np.array(grid.widths)) * unscale
        else:
            lo, hi = (np.asarray(v, dtype=float) for v in box)
        pairs = sample_pairs(params, lo, hi, pair_budget, seed=seed,
                             fd_step=float(grid.spacing[0] * unscale[0]) / 4)
    if diag_scale is not None:
        pairs = pairs.mapped(np.asarray(diag_scale), 1.0 / float(diag_scale[0]))
    pick = (lambda e: e.total) if part == "full" else (lambda e: e.seminorm_total)  # noqa: E731
    u_norm = 0.0
    for k in range(0, len(field.times), time_stride):
        est = holder_norm_estimate(_field_callable(grid, field.values[k]), a + b, params, pairs)
        u_norm = max(u_norm, pick(est))
    g_norm = pick(holder_norm_estimate(problem.g, a + b, params, pairs))
    f_norm = 0.0
    if problem.f is not None:
        for t in field.times[::time_stride]:
            est = holder_norm_estimate(lambda x, t=t: problem.source(t, x), b, params, pairs)
            f_norm = max(f_norm, pick(est))
    denom = f_norm + g_norm
    ratio = 0.0 if denom == 0 else u_norm / denom
    return SchauderReport(ratio, u_norm, f_norm, g_norm, float("nan"))


def schauder_ratio_with_noise(field, problem, seeds=(0, 1), **kw) -> SchauderReport:
    """Ratio from the first seed; noise is the spread over all seeds."""
    reps = [schauder_ratio(field, problem, seed=s, **kw) for s in seeds]
    vals = np.array([r.ratio for r in reps])
    first = reps[0]
    return replace(first, noise=float(vals.max() - vals.min()))


# -- mollification ------------------------------------------------------------------


def _bump_rule(n=16):
    x, w = leggauss(n)
    b = np.exp(-1.0 / (1.0 - x ** 2))
    w = w * b
    return x, w / w.sum()


def mollify_callable(fn: Callable, eps, dims: int, n=16) -> Callable:
    """``fn`` convolved with a product bump of radius ``eps`` per variable (tensor quadrature)."""
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (dims,))
    x, w = _bump_rule(n)
    grids = np.meshgrid(*([x] * dims), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1) * eps
    wts = np.prod(np.stack(np.meshgrid(*([w] * dims), indexing="ij"), axis=-1).reshape(-1, dims), axis=1)

    def smooth(pts):
        pts = np.asarray(pts, dtype=float)
        acc = 0.0
        for o, wk in zip(offs, wts):
            acc = acc + wk * np.asarray(fn(pts - o))
        return acc

    return smooth


def mollify(obj, eps, grid: SpaceGrid | None = None, n: int = 16):
    """Mollify a drift, a callable or grid values with a compact bump of radius ``eps``.

    Raises
    ------
    DomainError
        If ``eps`` exceeds half the grid width (grid input).
    """
    if np.any(np.asarray(eps) <= 0):
        raise DomainError("eps must be positive")
    if isinstance(obj, DriftSpec):
        nd = obj.n * obj.d
        levels = tuple(None if F is None else
                       (lambda t, x, F=F: mollify_callable(lambda y: F(t, y), eps, nd, n)(x))
                       for F in obj.levels)
        return DriftSpec(obj.n, obj.d, levels, obj.norm_h, obj.autonomous, f"mollified {obj.name}")
    if grid is not None:
        vals = np.asarray(obj, dtype=float)
        if np.any(np.asarray(eps) >= 0.5 * np.min(grid.widths)):
            raise DomainError("eps larger than the domain")
        eps_v = np.broadcast_to(np.asarray(eps, dtype=float), (grid.dims,))
        kern = np.ones(grid.points)
        for k, ax in enumerate(grid.axes()):
            c = ax - grid.lows[k]
            c = np.minimum(c, grid.widths[k] - c) / eps_v[k]  # periodic distance
            prof = np.where(np.abs(c) < 1, np.exp(-1.0 / np.maximum(1 - c ** 2, 1e-300)), 0.0)
            if prof.sum() == 0:
                prof[0] = 1.0
            shape = [1] * grid.dims
            shape[k] = -1
            kern = kern * (prof / prof.sum()).reshape(shape)
        return np.fft.ifftn(np.fft.fftn(vals) * np.fft.fftn(kern)).real
    if callable(obj):
        raise InputError("callable mollification needs the dimension; use mollify_callable")
    raise InputError("unsupported object")


# -- change of frozen point ------------------------------------------------------------


@dataclass
class FreezingReport:
    """Change-of-frozen-point comparison.

    ``split`` uses freezing ``x`` on ``[t, t0]`` and ``x'`` on ``[t0, T]``;
    ``single`` is the representation frozen at ``x`` throughout, built from
    the same field and quadrature. ``defect = |split - single|``;
    ``field_value`` is the iterate itself at ``(t, x)``.
    """

    defect: float
    split: float
    single: float
    field_value: float
    t0: float
    regime: str
    off_diagonal: bool
    terms: dict


def change_of_freezing_check(field: SolutionField, problem: ProblemData, t: float, x, xp,
                             c0: float = 0.25, n_nodes: int = 17, ou: OUDensity | None = None,
                             n_steps: int = 256) -> FreezingReport:
    """Evaluate the change-of-frozen-point representation at ``(t, x)``.

    An off-diagonal pair (``t0 = T``) is flagged; the identity then holds
    trivially since the switch term cancels the terminal term.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    T = field.times[-1]
    if not (field.times[0] <= t < T):
        raise InputError("t must lie in the field's time range, before the horizon")
    split_ = regime_split(t, T, x, xp, c0, problem.metric)
    t0 = float(min(split_.t0, T))
    ou = ou or OUDensity(problem.A, problem.model)
    kern = FrozenKernel(ou, field.grid)
    grid = field.grid
    mesh = grid.mesh()
    px = FrozenProxy(t, x, problem.drift, ou, T, n_steps)
    pxp = FrozenProxy(t, xp, problem.drift, ou, T, n_steps)

    def P(proxy, s, vals):
        if s <= t:
            return float(grid.interpolate(vals, x[None, :])[0])
        centre = proxy.shift(t, s, x)
        return float(grid.interpolate(kern.smooth(vals, s - t), centre[None, :])[0])

    def R(proxy, s):
        theta = proxy.flow(s)
        diff = problem.drift(s, mesh) - problem.drift(s, theta[None, :])[0]
        return np.sum(diff * field.grad_slice_at(s), axis=-1)

    def integral(proxy, lo, hi):
        if hi <= lo:
            return 0.0
        nodes = np.linspace(lo, hi, n_nodes)
        vals = [P(proxy, s, problem.source(s, mesh) + R(proxy, s)) for s in nodes]
        return float(integrate.simpson(vals, x=nodes))

    gT = field.values[-1]
    terms = {
        "terminal": P(pxp, T, gT),
        "near": integral(px, t, t0),
        "far": integral(pxp, t0, T),
        "switch": P(px, t0, field.slice_at(t0)) - P(pxp, t0, field.slice_at(t0)),
    }
    split = float(sum(terms.values()))
    single = P(px, T, gT) + integral(px, t, T)
    value = float(field.at(t, x[None, :])[0])
    return FreezingReport(abs(split - single), split, single, value, t0, split_.regime,
                          bool(t0 >= T), terms)
