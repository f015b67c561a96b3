"""Anisotropic distance, dilations and sampled Hoelder norms.

Level ``i`` of ``R^{nd}`` is homogeneous of degree ``1 + alpha (i-1)`` for the
dilation ``delta_lambda``; the distance

    d(x, x') = sum_i |(x - x')_i|^{1/(1 + alpha (i-1))}

is therefore one-homogeneous.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError


@dataclass(frozen=True)
class MetricParams:
    """Exponents attached to the chain ``(n, d, alpha)``.

    Attributes
    ----------
    exponents : ndarray
        ``1/(1 + alpha (i-1))`` per level.
    alpha_i, beta_i : ndarray
        ``alpha/(1 + alpha(i-1))`` and ``beta/(1 + alpha(i-1))``.
    """

    n: int
    d: int
    alpha: float
    beta: float = 0.0

    @property
    def degrees(self) -> np.ndarray:
        return 1.0 + self.alpha * np.arange(self.n)

    @property
    def exponents(self) -> np.ndarray:
        return 1.0 / self.degrees

    @property
    def alpha_i(self) -> np.ndarray:
        return self.alpha / self.degrees

    @property
    def beta_i(self) -> np.ndarray:
        return self.beta / self.degrees

    @property
    def gamma_i(self) -> np.ndarray:
        """Extra regularity of the drift at level ``i``: 0, then ``1 + alpha(i-2)``."""
        g = np.zeros(self.n)
        g[1:] = 1.0 + self.alpha * np.arange(self.n - 1)
        return g

    def level_norms(self, z) -> np.ndarray:
        """Euclidean norms of the level blocks, shape (..., n)."""
        z = np.asarray(z, dtype=float)
        return np.linalg.norm(z.reshape(z.shape[:-1] + (self.n, self.d)), axis=-1)


def aniso_distance(x, xp, params: MetricParams) -> np.ndarray:
    """``d(x, x') = sum_i |(x - x')_i|^{1/(1+alpha(i-1))}``."""
    r = params.level_norms(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
    return np.sum(r ** params.exponents, axis=-1)


def partial_distance(x, xp, params: MetricParams, i: int) -> np.ndarray:
    """Restriction of the distance to levels ``i..n`` (one-based)."""
    r = params.level_norms(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
    return np.sum((r ** params.exponents)[..., i - 1:], axis=-1)


def parabolic_distance(t, x, s, xp, params: MetricParams) -> np.ndarray:
    """``|s - t|^{1/alpha} + d(x, x')``."""
    return np.abs(np.asarray(s) - np.asarray(t)) ** (1.0 / params.alpha) + aniso_distance(x, xp, params)


def dilate(t, x, lam: float, params: MetricParams):
    """``delta_lambda(t, x) = (lambda^alpha t, lambda^{1+alpha(i-1)} x_i)``."""
    if lam <= 0:
        raise InputError("dilation factor must be positive")
    x = np.asarray(x, dtype=float)
    fac = np.repeat(lam ** params.degrees, params.d)
    return lam ** params.alpha * np.asarray(t, dtype=float), x * fac


@dataclass
class RegimeSplit:
    regime: str  # "diagonal" or "off_diagonal"
    t0: float


def regime_split(t, T, x, xp, c0, params: MetricParams) -> RegimeSplit:
    """Crossover time ``t0 = min(t + c0 d^alpha(x, x'), T)``.

    The pair is off-diagonal when ``T - t < c0 d^alpha(x, x')``.
    """
    if not (0.0 < c0 <= 1.0):
        raise DomainError("c0 must lie in (0, 1]")
    gap = c0 * float(aniso_distance(x, xp, params)) ** params.alpha
    if T - t < gap:
        return RegimeSplit("off_diagonal", float(T))
    return RegimeSplit("diagonal", float(t + gap))


@dataclass
class HolderEstimate:
    """Sampled anisotropic Hoelder norm.

    ``total`` is ``sup_norm + sum(seminorms)``.
    """

    sup_norm: float
    seminorms: np.ndarray
    pairs_used: np.ndarray
    gamma: float
    noise: float = field(default=float("nan"))

    @property
    def total(self) -> float:
        return float(self.sup_norm + np.sum(self.seminorms))

    @property
    def seminorm_total(self) -> float:
        return float(np.sum(self.seminorms))

    def rows(self):
        """CSV rows ``(level, seminorm, pairs_used)``; level 0 is the sup norm."""
        out = [(0, self.sup_norm, int(np.sum(self.pairs_used)))]
        for i, (s, k) in enumerate(zip(self.seminorms, self.pairs_used), start=1):
            out.append((i, float(s), int(k)))
        return out


@dataclass
class PairSample:
    """Base points and per-level increments used by the norm estimator.

    ``bases[i]`` has shape (m, nd); ``steps[i]`` has shape (m, d) and is the
    displacement applied to level ``i+1``.
    """

    bases: list
    steps: list
    fd_step: float

    def mapped(self, diag_scale, fd_scale: float):
        """Image of the sample under ``x -> diag_scale^{-1} x`` (``diag_scale`` is nd)."""
        d = len(self.steps[0][0]) if self.steps and len(self.steps[0]) else 1
        n = len(self.bases)
        out_b, out_s = [], []
        for i in range(n):
            out_b.append(self.bases[i] / diag_scale)
            out_s.append(self.steps[i] / diag_scale[i * d:(i + 1) * d])
        return PairSample(out_b, out_s, self.fd_step * fd_scale)


def sample_pairs(params: MetricParams, lows, highs, pair_budget: int, seed=0,
                 n_scales: int = 4, fd_step=None) -> PairSample:
    """Stratified pair design: 4 dyadic separation scales per level.

    The largest separation at level ``i`` is a quarter of the box width in that
    level; each further scale halves it. Streams are spawned per (level, scale)
    so a larger budget extends a smaller one.
    """
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    nd = params.n * params.d
    if lows.shape != (nd,) or np.any(highs <= lows):
        raise InputError("invalid sampling box")
    if pair_budget < params.n * n_scales:
        raise InputError("pair budget too small for the stratification")
    per = pair_budget // (params.n * n_scales)
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(params.n * n_scales)
    bases, steps = [], []
    width = highs - lows
    for i in range(params.n):
        blk = slice(i * params.d, (i + 1) * params.d)
        hmax = 0.25 * float(np.min(width[blk]))
        b_all, s_all = [], []
        for k in range(n_scales):
            rng = np.random.default_rng(children[i * n_scales + k])
            u = rng.random((per, nd + params.d + 1))
            base = lows + u[:, :nd] * width
            direc = u[:, nd:nd + params.d] - 0.5
            if params.d == 1:
                direc = np.sign(direc)
            else:
                direc = direc / np.linalg.norm(direc, axis=1, keepdims=True)
            size = hmax * 2.0 ** (-k) * (0.5 + 0.5 * u[:, -1:])
            b_all.append(base)
            s_all.append(direc * size)
        bases.append(np.concatenate(b_all))
        steps.append(np.concatenate(s_all))
    if fd_step is None:
        fd_step = 1e-3 * float(np.min(width[: params.d]))
    return PairSample(bases, steps, fd_step)


def _grad1(phi, x, d, h):
    """Central differences of ``phi`` in the level-one block."""
    g = np.empty(x.shape[:-1] + (d,))
    for k in range(d):
        e = np.zeros(x.shape[-1])
        e[k] = h
        g[..., k] = (phi(x + e) - phi(x - e)) / (2.0 * h)
    return g


def holder_norm_estimate(phi, gamma: float, params: MetricParams, pairs: PairSample,
                         sup_points=None) -> HolderEstimate:
    """Sampled ``C^gamma_d`` norm of a vectorized callable ``phi``.

    Level ``i`` uses ``|phi(x + h e_i) - phi(x)| / |h|^{gamma/(1+alpha(i-1))}``.
    At level one with ``gamma > 1`` the quotient is taken on the central
    difference gradient with exponent ``gamma - 1``.

    Parameters
    ----------
    phi : callable
        Maps (m, nd) arrays to (m,) values.
    gamma : float
        Regularity index in (0, 2).
    pairs : PairSample
    sup_points : ndarray, optional
        Points for the sup norm; defaults to all base points.
    """
    if not (0.0 < gamma < 2.0):
        raise DomainError("gamma must lie in (0, 2)")
    exps = gamma * params.exponents
    if np.any(exps[1:] >= 1.0):
        raise DomainError("gamma too large for a first-order quotient at levels >= 2")
    d = params.d
    semis = np.zeros(params.n)
    used = np.zeros(params.n, dtype=int)
    sup = 0.0
    for i in range(params.n):
        base = pairs.bases[i]
        step = pairs.steps[i]
        if base.size == 0:
            continue
        shifted = base.copy()
        shifted[:, i * d:(i + 1) * d] += step
        size = np.linalg.norm(step, axis=1)
        ok = size > 0
        if not np.any(ok):
            continue
        if i == 0 and gamma > 1.0:
            g0 = _grad1(phi, base, d, pairs.fd_step)
            g1 = _grad1(phi, shifted, d, pairs.fd_step)
            num = np.linalg.norm(g1 - g0, axis=1)
            e = gamma - 1.0
        else:
            v0 = phi(base)
            v1 = phi(shifted)
            num = np.abs(v1 - v0)
            e = exps[i]
            sup = max(sup, float(np.max(np.abs(v0))), float(np.max(np.abs(v1))))
        q = num[ok] / size[ok] ** e
        semis[i] = float(np.max(q)) if q.size else 0.0
        used[i] = int(np.count_nonzero(ok))
    if sup_points is not None:
        sup = max(sup, float(np.max(np.abs(phi(np.asarray(sup_points))))))
    else:
        sup = max(sup, float(np.max(np.abs(phi(pairs.bases[0])))))
    if not np.any(used):
        raise InputError("degenerate pair sample")
    return HolderEstimate(sup, semis, used, gamma)


def reverse_taylor_check(grad1, gamma: float, x, xp, params: MetricParams) -> float:
    """``sup |D_{x_1} phi(x) - D_{x_1} phi(x')| / d^{gamma-1}(x, x')`` over pairs.

    Coincident pairs are skipped; an empty sample returns 0.
    """
    if gamma <= 1.0:
        raise DomainError("the reverse Taylor quotient needs gamma > 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    dist = aniso_distance(x, xp, params)
    keep = dist > 0
    if not np.any(keep):
        return 0.0
    g = np.atleast_2d(grad1(x[keep]))
    gp = np.atleast_2d(grad1(xp[keep]))
    num = np.linalg.norm((g - gp).reshape(len(dist[keep]), -1), axis=1)
    return float(np.max(num / dist[keep] ** (gamma - 1.0)))
