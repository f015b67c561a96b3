"""Deterministic flow, frozen proxy and its semigroup.

The flow solves ``theta' = A theta + F(v, theta)`` from ``(tau, xi)``. Freezing
the drift along that flow yields an OU-type proxy whose transition density is

    p~(t, s, x, y) = p_S(s - t, M_{s-t}^{-1}(y - m~_{t,s}(x))) / det M_{s-t},

with the affine shift ``m~_{t,s}(x) = e^{A(s-t)} x + int_t^s e^{A(s-v)} F(v, theta_{tau,v}(xi)) dv``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import InputError, KolmoError
from .metric import MetricParams, aniso_distance
from .ou import ChainMatrix, OUDensity, ScaleOps, resolvent, resolvent_constants
from .spacegrid import SpaceGrid
from .stable import levy_symbol


class PropagationError(KolmoError):
    """Non-finite drift value met while integrating a flow."""


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Chain drift ``F = (F_1, ..., F_n)``.

    Attributes
    ----------
    n, d : int
    levels : tuple
        ``levels[i]`` maps ``(t, x)`` with ``x`` of shape (..., nd) to (..., d),
        or is None for a vanishing level. Level ``i`` (one-based) may only read
        components ``i..n``.
    norm_h : float
        Declared bound on the drift norm (``nan`` when unknown).
    autonomous : bool
        True when no level depends on time.
    """

    n: int
    d: int
    levels: tuple
    norm_h: float = float("nan")
    autonomous: bool = True
    name: str = "drift"

    @classmethod
    def zero(cls, n, d):
        return cls(n, d, (None,) * n, 0.0, True, "zero")

    @classmethod
    def constant(cls, c):
        c = np.asarray(c, dtype=float)
        n_d = c.size
        return cls(1, n_d, (lambda t, x: np.broadcast_to(c, np.shape(x)[:-1] + (n_d,)),), 0.0,
                   True, "constant")

    @classmethod
    def constant_chain(cls, n, d, c):
        c = np.asarray(c, dtype=float).reshape(n, d)
        levels = tuple((lambda t, x, ci=ci: np.broadcast_to(ci, np.shape(x)[:-1] + (d,)))
                       if np.any(ci) else None for ci in c)
        return cls(n, d, levels, 0.0, True, "constant")

    def active_levels(self):
        return [i for i, f in enumerate(self.levels) if f is not None]

    @property
    def is_zero(self) -> bool:
        return not self.active_levels()

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i, f in enumerate(self.levels):
            if f is not None:
                out[..., i * self.d:(i + 1) * self.d] = f(t, x)
        return out

    def level(self, i, t, x) -> np.ndarray:
        """Level ``i`` (zero-based) values."""
        f = self.levels[i]
        x = np.asarray(x, dtype=float)
        if f is None:
            return np.zeros(x.shape[:-1] + (self.d,))
        return np.asarray(f(t, x), dtype=float)

    def scaled(self, eps: float) -> "DriftSpec":
        levels = tuple(None if f is None else (lambda t, x, f=f: eps * f(t, x)) for f in self.levels)
        return DriftSpec(self.n, self.d, levels, abs(eps) * self.norm_h, self.autonomous,
                         f"{eps:g}*{self.name}")

    def check_structure(self, lows, highs, n_probes=64, seed=0) -> float:
        """Largest change of ``F_i`` when components ``j < i`` are perturbed."""
        rng = np.random.default_rng(seed)
        lows = np.asarray(lows, dtype=float)
        highs = np.asarray(highs, dtype=float)
        x = lows + rng.random((n_probes, len(lows))) * (highs - lows)
        worst = 0.0
        for i, f in enumerate(self.levels):
            if f is None or i == 0:
                continue
            xp = x.copy()
            xp[:, : i * self.d] = lows[: i * self.d] + rng.random((n_probes, i * self.d)) * (
                highs[: i * self.d] - lows[: i * self.d])
            worst = max(worst, float(np.max(np.abs(f(0.0, x) - f(0.0, xp)))))
        return worst


def _rk4(A_full, drift, t0, x0, steps, n_steps):
    """Vectorized RK4; ``steps`` broadcast against the leading axes of ``x0``."""
    x = np.array(x0, dtype=float)
    h = np.asarray(steps, dtype=float)[..., None]
    t0 = np.asarray(t0, dtype=float)[..., None]
    states = [x.copy()]

    def rhs(tt, z):
        val = z @ A_full.T + drift(tt if np.ndim(tt) == 0 else tt[..., 0], z)
        return val

    for k in range(n_steps):
        t = t0 + k * h
        tt = t if t.size > 1 else float(t.ravel()[0])
        hh = h
        k1 = rhs(tt, x)
        tm = t + 0.5 * hh
        tm = tm if tm.size > 1 else float(tm.ravel()[0])
        k2 = rhs(tm, x + 0.5 * hh * k1)
        k3 = rhs(tm, x + 0.5 * hh * k2)
        te = t + hh
        te = te if te.size > 1 else float(te.ravel()[0])
        k4 = rhs(te, x + hh * k3)
        x = x + hh * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.all(np.isfinite(x)):
            bad = float(np.ravel(t + hh)[0])
            raise PropagationError(f"non-finite flow state near time {bad:.6g}")
        states.append(x.copy())
    return np.array(states)


@dataclass(eq=False)
class FlowPath:
    """Discrete flow ``theta_{tau, .}(xi)``.

    Attributes
    ----------
    tau : float
    xi : ndarray, shape (nd,) or (m, nd)
    times : ndarray, shape (n_steps + 1,)
    states : ndarray, shape (n_steps + 1, *xi.shape)
    step : float
    order : int
        Nominal order of the scheme.
    residual : float
        Sup of the integral-equation residual (trapezoid re-quadrature).
    """

    tau: float
    xi: np.ndarray
    times: np.ndarray
    states: np.ndarray
    step: float
    order: int = 4
    residual: float = float("nan")
    derivs: np.ndarray = field(default=None, repr=False)

    def at(self, s) -> np.ndarray:
        """Cubic Hermite interpolation of the path at time ``s``."""
        s = float(s)
        lo, hi = self.times[0], self.times[-1]
        if not (min(lo, hi) - 1e-12 <= s <= max(lo, hi) + 1e-12):
            raise InputError(f"time {s} outside the stored path")
        k = int(np.clip(np.floor((s - lo) / self.step), 0, len(self.times) - 2))
        u = (s - self.times[k]) / self.step
        h00 = 2 * u ** 3 - 3 * u ** 2 + 1
        h10 = u ** 3 - 2 * u ** 2 + u
        h01 = -2 * u ** 3 + 3 * u ** 2
        h11 = u ** 3 - u ** 2
        return (h00 * self.states[k] + h10 * self.step * self.derivs[k]
                + h01 * self.states[k + 1] + h11 * self.step * self.derivs[k + 1])

    def rows(self):
        """CSV rows ``(time, components...)`` for a single path."""
        st = self.states.reshape(len(self.times), -1)
        return [(float(t),) + tuple(float(v) for v in row) for t, row in zip(self.times, st)]


def integrate_flow(tau, xi, drift: DriftSpec, A: ChainMatrix, t_end, n_steps: int = 256) -> FlowPath:
    """Fixed-step RK4 path of ``theta' = A theta + F(v, theta)`` from ``(tau, xi)``.

    ``xi`` may hold many starting points (shape (m, nd)); they share the time grid.
    """
    if n_steps < 8:
        raise InputError("n_steps must be at least 8")
    xi = np.asarray(xi, dtype=float)
    A_full = A.full()
    step = (t_end - tau) / n_steps
    states = _rk4(A_full, drift, tau, xi, step, n_steps)
    times = tau + step * np.arange(n_steps + 1)
    if drift.autonomous:
        derivs = states @ A_full.T + drift(tau, states)
    else:
        derivs = np.array([states[k] @ A_full.T + drift(times[k], states[k]) for k in range(n_steps + 1)])
    # integral-equation residual by trapezoid re-quadrature
    cum = integrate.cumulative_trapezoid(derivs, times, axis=0, initial=0.0)
    resid = float(np.max(np.abs(states - xi - cum))) if step != 0 else 0.0
    return FlowPath(float(tau), xi, times, states, float(step), 4, resid, derivs)


@dataclass
class OrderReport:
    errors: np.ndarray
    orders: np.ndarray


def flow_order_study(tau, xi, drift, A, t_end, n_steps=32, levels=4) -> OrderReport:
    """Realized convergence order from successive step halving."""
    finals = [integrate_flow(tau, xi, drift, A, t_end, n_steps * 2 ** k).states[-1]
              for k in range(levels)]
    errs = np.array([np.max(np.abs(finals[k] - finals[k + 1])) for k in range(levels - 1)])
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(errs[:-1] / errs[1:])
    return OrderReport(errs, orders)


def _resolvent_apply(A: ChainMatrix, lags, vecs) -> np.ndarray:
    """Rows ``e^{lag A} v`` for paired ``lags`` (m,) and ``vecs`` (m, nd)."""
    d = A.d
    out = np.zeros_like(vecs, dtype=float)
    for (i, j), c in resolvent_constants(A).items():
        blk = vecs[:, (j - 1) * d:j * d] @ c.T
        out[:, (i - 1) * d:i * d] += blk * (lags ** (i - j))[:, None]
    return out


class FrozenProxy:
    """Proxy frozen along the flow from ``(tau, xi)``.

    Parameters
    ----------
    tau : float
    xi : array_like, shape (nd,)
    drift : DriftSpec
    ou : OUDensity
        Supplies ``A``, the projected symbol and ``p_S``.
    t_end : float
        Flow horizon.
    n_steps : int
        RK4 steps on ``[tau, t_end]``.
    """

    def __init__(self, tau, xi, drift: DriftSpec, ou: OUDensity, t_end, n_steps=256):
        self.tau = float(tau)
        self.xi = np.asarray(xi, dtype=float)
        self.drift = drift
        self.ou = ou
        self.A = ou.A
        self.path = integrate_flow(tau, self.xi, drift, ou.A, t_end, n_steps)

    def flow(self, s):
        return self.path.at(s)

    def forcing(self, t, s, n_nodes=None) -> np.ndarray:
        """``int_t^s e^{A(s-v)} F(v, theta_{tau,v}(xi)) dv`` by composite Simpson."""
        if s < t:
            raise InputError("need t <= s")
        if s == t or self.drift.is_zero:
            return np.zeros(self.A.dim)
        times = self.path.times
        lo, hi = min(times[0], times[-1]), max(times[0], times[-1])
        if t < lo - 1e-12 or s > hi + 1e-12:
            raise InputError("flow path does not cover [t, s]")
        if n_nodes is None:
            inner = times[(times > t + 1e-12) & (times < s - 1e-12)]
            v = np.concatenate([[t], inner, [s]])
        else:
            v = np.linspace(t, s, n_nodes)
        if n_nodes is None:
            # stored states at interior nodes, Hermite values only at the ends
            states = np.concatenate([self.path.at(t)[None], self.path.states[(times > t + 1e-12)
                                                                            & (times < s - 1e-12)],
                                     self.path.at(s)[None]])
        else:
            states = np.array([self.path.at(vk) for vk in v])
        F = np.array([self.drift(vk, st) for vk, st in zip(v, states)]) if not self.drift.autonomous \
            else self.drift(v[0], states)
        vals = _resolvent_apply(self.A, s - v, F)
        return integrate.simpson(vals, x=v, axis=0)

    def shift(self, t, s, x, n_nodes=None) -> np.ndarray:
        """Frozen shift ``m~_{t,s}(x)`` (``x`` may be a batch)."""
        x = np.asarray(x, dtype=float)
        return x @ resolvent(self.A, s - t).T + self.forcing(t, s, n_nodes)

    def density(self, t, s, x, y) -> np.ndarray:
        """Frozen transition density ``p~(t, s, x, y)``."""
        m = self.shift(t, s, x)
        return self.ou.kernel(s - t, np.asarray(y, dtype=float) - m)


def shift_and_flow_batch(tau, xi, s, drift: DriftSpec, A: ChainMatrix, n_steps: int = 4096):
    """``(m~^{tau,xi}_{tau,s}(xi), theta_{tau,s}(xi))`` for many freezing couples at once.

    Each couple gets its own uniform grid of ``n_steps`` (even) steps; the flow
    is RK4 and the forcing integral is composite Simpson on the same nodes, as
    in :class:`FrozenProxy`.
    """
    if n_steps < 8 or n_steps % 2:
        raise InputError("n_steps must be even and at least 8")
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if np.any(s < tau):
        raise InputError("need tau <= s")
    h = (s - tau) / n_steps
    A_full = A.full()
    states = _rk4(A_full, drift, tau, xi, h, n_steps)
    w = np.ones(n_steps + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    forcing = np.zeros_like(xi)
    for j in range(n_steps + 1):
        tj = tau + j * h
        F = drift(float(tj[0]), states[j]) if drift.autonomous else \
            np.array([drift(float(tk), st[None])[0] for tk, st in zip(tj, states[j])])
        forcing += (w[j] * h / 3.0)[:, None] * _resolvent_apply(A, s - tj, F)
    mean = _resolvent_apply(A, s - tau, xi)
    return mean + forcing, states[-1]


def frozen_shift(t, s, x, proxy: FrozenProxy, n_nodes=None):
    return proxy.shift(t, s, x, n_nodes)


def frozen_density(t, s, x, y, proxy: FrozenProxy):
    return proxy.density(t, s, x, y)


class FrozenKernel:
    """Fourier multipliers of the centred proxy kernel on a periodic box.

    The law of ``M_r S_r`` has characteristic function ``exp(Psi_S(T_r p))``;
    multiplying by it convolves a grid function with the proxy kernel.
    """

    def __init__(self, ou: OUDensity, grid: SpaceGrid):
        if grid.dims != ou.A.dim:
            raise InputError("grid dimension must be n*d")
        self.ou = ou
        self.grid = grid
        self.scale = ScaleOps(ou.A.n, ou.A.d, ou.model.alpha)
        self._freq = grid.frequency_mesh()
        self._cache = {}

    def multiplier(self, r: float) -> np.ndarray:
        key = round(float(r), 14)
        if key not in self._cache:
            if r <= 0:
                self._cache[key] = np.ones(self.grid.points)
            else:
                q = self._freq * self.scale.T_diag(r)
                self._cache[key] = np.exp(levy_symbol(q, self.ou.proj_model))
        return self._cache[key]

    def smooth(self, values, r) -> np.ndarray:
        """Convolution of grid values with the kernel at time lag ``r``."""
        if r <= 0:
            return np.array(values, dtype=float)
        return self.grid.apply_multiplier(values, self.multiplier(r))

    def average(self, values, r, centres) -> np.ndarray:
        """``int p_S-kernel(r, c - y) phi(y) dy`` at the given centres."""
        return self.grid.interpolate(self.smooth(values, r), centres)

    def clear(self):
        self._cache.clear()


def semigroup_apply(t, s, phi, proxy: FrozenProxy, kernel: FrozenKernel, points=None,
                    with_gradient=False):
    """``P~_{t,s} phi`` for a single freezing couple.

    Parameters
    ----------
    phi : ndarray
        Values on ``kernel.grid``.
    points : ndarray, optional
        Output points, default the grid nodes.
    with_gradient : bool
        Also return ``D_{x_1} P~ phi`` (spectral gradient of the smoothed field
        pulled back through the affine shift).

    Returns
    -------
    values, or (values, grad_x1) with grad_x1 of shape (..., d)
    """
    grid = kernel.grid
    pts = grid.mesh() if points is None else np.asarray(points, dtype=float)
    centres = proxy.shift(t, s, pts)
    smoothed = kernel.smooth(phi, s - t)
    vals = grid.interpolate(smoothed, centres)
    if not with_gradient:
        return vals
    d = proxy.A.d
    freq = kernel._freq
    res = resolvent(proxy.A, s - t)
    grads = []
    for k in range(proxy.A.dim):
        dk = np.fft.ifftn(np.fft.fftn(smoothed) * (1j * freq[..., k])).real
        grads.append(grid.interpolate(dk, centres))
    grads = np.stack(grads, axis=-1)
    # D_x of phi(e^{A(s-t)} x + c) is e^{A(s-t)}^T grad
    gx = grads @ res
    return vals, gx[..., :d]


def semigroup_quadrature(t, s, phi: Callable, proxy: FrozenProxy, x) -> np.ndarray:
    """``P~_{t,s} phi(x)`` as a sum over the unit-time master lattice.

    Uses ``y = m~ + T_{s-t} w`` so that ``p~ dy = p_S(1, w) dw``; ``phi`` must be
    a vectorized callable.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ou = proxy.ou
    grid = ou.master.grid
    w = grid.mesh().reshape(-1, ou.A.dim)
    weight = ou.master.values.ravel() * grid.cell_volume
    keep = weight > 0
    w, weight = w[keep], weight[keep]
    if s - t <= 0:
        return phi(x)
    tw = w * ou.scale.T_diag(s - t)
    out = np.empty(len(x))
    for k, m in enumerate(proxy.shift(t, s, x)):
        out[k] = float(weight @ phi(m + tw))
    return out


def green_apply(t, v, r, f: Callable, proxy: FrozenProxy, kernel: FrozenKernel, n_nodes=17,
                points=None):
    """``int_v^r P~_{t,s} f(s, .) ds`` by composite Simpson in ``s``.

    ``f`` maps ``(s, grid_mesh)`` to grid values.
    """
    if r < v:
        raise InputError("need v <= r")
    if r == v:
        grid = kernel.grid
        shape = grid.points if points is None else np.asarray(points).shape[:-1]
        return np.zeros(shape)
    mesh = kernel.grid.mesh()
    nodes = np.linspace(v, r, n_nodes)
    vals = [semigroup_apply(t, s, f(s, mesh), proxy, kernel, points) for s in nodes]
    return integrate.simpson(np.array(vals), x=nodes, axis=0)


@dataclass
class SensitivityReport:
    """Ratios of the flow/shift sensitivity bounds over a pair sample."""

    flow_ratio: np.ndarray
    mean_ratio: np.ndarray
    freeze_ratio: np.ndarray
    distances: np.ndarray

    def summary(self):
        f = lambda a: float(np.max(a)) if a.size else 0.0  # noqa: E731
        return {"flow": f(self.flow_ratio), "mean": f(self.mean_ratio), "freeze": f(self.freeze_ratio)}


def flow_sensitivity_report(drift: DriftSpec, A: ChainMatrix, alpha: float, beta: float,
                            x, xp, t, s, c0=0.25, n_steps=64) -> SensitivityReport:
    """Measured ratios for the flow and frozen-shift sensitivity bounds.

    * flow: ``d(theta_{t,s}(x), theta_{t,s}(x')) / (d(x,x') + (s-t)^{1/alpha})``
    * mean: ``|(m~^{t,x}_{t,s}(x) - m~^{t,x'}_{t,s}(x))_1| / ((s-t) d^beta + (s-t)^{(alpha+beta)/alpha})``
    * freeze: ``d(m~^{t,x}_{t,t0}(x'), m~^{t,x'}_{t,t0}(x')) / (c0^{1/(1+alpha(n-1))} d(x,x'))``
      with ``t0 = min(t + c0 d^alpha, s)``.

    Pairs with ``x == x'`` report zero numerators and zero ratios.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    params = MetricParams(A.n, A.d, alpha, beta)
    d = A.d
    dist = aniso_distance(x, xp, params)
    A_full = A.full()
    both = np.concatenate([x, xp])
    end = _rk4(A_full, drift, t, both, (s - t) / n_steps, n_steps)[-1]
    th, thp = end[: len(x)], end[len(x):]
    tau = s - t
    flow = aniso_distance(th, thp, params) / (dist + tau ** (1.0 / alpha))
    # the level-one shift difference only involves the forcing integrals
    diff1 = (th - x @ resolvent(A, tau).T)[:, :d] - (thp - xp @ resolvent(A, tau).T)[:, :d]
    denom = tau * dist ** beta + tau ** ((alpha + beta) / alpha)
    mean = np.linalg.norm(diff1, axis=1) / denom
    t0 = np.minimum(t + c0 * dist ** alpha, s)
    lag = t0 - t
    ends = _rk4(A_full, drift, t, both, np.concatenate([lag, lag]) / n_steps, n_steps)[-1]
    e0, e0p = ends[: len(x)], ends[len(x):]
    m_x = e0 + np.einsum("kij,kj->ki", np.array([resolvent(A, g) for g in lag]), xp - x)
    num = aniso_distance(m_x, e0p, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        freeze = np.where(dist > 0, num / (c0 ** (1.0 / (1.0 + alpha * (A.n - 1))) * dist), 0.0)
        flow = np.where(dist > 0, flow, 0.0)
        mean = np.where(dist > 0, mean, 0.0)
    return SensitivityReport(flow, mean, freeze, dist)


def frozen_smoothing_moment(ou: OUDensity, r: float, gamma: float, x_order: Sequence[int] = (),
                            y_order: Sequence[int] = (), partial_from: int = 1,
                            grid=None) -> float:
    """``int |D^rho_y D^theta_x p~| d^gamma(y, m~) dy`` for a frozen proxy with lag ``r``.

    ``x_order`` and ``y_order`` list coordinate indices (zero-based) to
    differentiate. Derivatives are spectral on a lattice scaled by ``T_r``; the
    shift enters only through the linear map ``e^{rA}``.
    ``partial_from`` restricts the distance to levels ``i..n``.
    """
    from .stable import GridSpec, stable_density_grid

    A = ou.A
    nd = A.dim
    scale = ou.scale
    master = ou.master.grid if grid is None else grid
    lattice = GridSpec(master.points, tuple(h * r ** (1.0 / ou.model.alpha) for h in master.spacing))
    res = resolvent(A, r)
    Minv = 1.0 / scale.M_diag(r)
    detM = scale.det_M(r)
    # derivative of K(z) = p_S(r, M^{-1} z)/det M along e_j is Minv_j d_j p_S
    # D_x of K(y - e^{rA} x - c) along e_k is -sum_j res_{jk} d_{z_j} K
    terms = [((), 1.0)]
    for k in x_order:
        terms = [(idx + (j,), c * (-res[j, k])) for idx, c in terms for j in range(nd) if res[j, k] != 0]
    for k in y_order:
        terms = [(idx + (k,), c) for idx, c in terms]
    total = 0.0
    cache = {}
    for idx, c in terms:
        mi = tuple(idx.count(j) for j in range(nd))
        if mi not in cache:
            g = stable_density_grid(ou.proj_model, r, lattice, derivative=mi if any(mi) else None)
            fac = np.prod([Minv[j] ** mi[j] for j in range(nd)]) / detM
            cache[mi] = g.values * fac
        total = total + c * cache[mi]
    z = lattice.mesh() * scale.M_diag(r)  # y - m~ on the lattice
    params = MetricParams(A.n, A.d, ou.model.alpha)
    r_lv = params.level_norms(z) ** params.exponents
    dist = np.sum(r_lv[..., partial_from - 1:], axis=-1)
    vol = lattice.cell_volume * detM
    return float(np.sum(np.abs(total) * dist ** gamma) * vol)
