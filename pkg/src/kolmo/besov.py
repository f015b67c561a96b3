"""Thermic Besov norms and the Besov controls of the frozen density.

For ``f`` on R (sampled on a periodic grid) the norm is

    ||f|| = ||(phi0 f^)^v||_{L^p} + ( int_0^1 v^{-g/alpha} ||d_v p_h(v) * f||_{L^p}^q dv )^{1/q}

with ``p_h`` the isotropic stable heat kernel. For ``q = inf`` the thermic
part is ``sup_v v^{1 - g/alpha} ||d_v p_h(v) * f||_{L^p}``. Convolutions are
exact Fourier multiplications on the discrete transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .analysis import loglog_slope
from .errors import InputError, ResolutionError
from .flow import DriftSpec, integrate_flow
from .ou import OUDensity, resolvent


def phi0(p) -> np.ndarray:
    """Smooth window ``exp(1 - 1/(1 - |p|^2))`` supported in ``|p| < 1``, ``phi0(0) = 1``."""
    p2 = np.asarray(p, dtype=float) ** 2
    out = np.zeros_like(p2)
    inside = p2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - p2[inside]))
    return out


@dataclass(frozen=True)
class ThermicNormSpec:
    """Parameters of a thermic Besov norm on R.

    Attributes
    ----------
    gamma_tilde : float
        Smoothness index, possibly negative.
    p, q : float
        Each 1 or ``inf``.
    alpha : float
        Index of the heat kernel.
    v_min : float
        Smallest node of the geometric ``v`` grid (the grid ends at 1).
    n_v : int
        Number of ``v`` nodes.
    """

    gamma_tilde: float
    p: float = 1.0
    q: float = 1.0
    alpha: float = 1.5
    v_min: float = 1e-8
    n_v: int = 64

    def __post_init__(self):
        if self.p not in (1.0, np.inf) or self.q not in (1.0, np.inf):
            raise InputError("p and q must be 1 or inf")
        if not (0.0 < self.v_min < 1.0) or self.n_v < 4:
            raise InputError("invalid v grid")

    @property
    def v_grid(self) -> np.ndarray:
        return np.geomspace(self.v_min, 1.0, self.n_v)

    def refined(self, factor=2) -> "ThermicNormSpec":
        return ThermicNormSpec(self.gamma_tilde, self.p, self.q, self.alpha, self.v_min,
                               factor * (self.n_v - 1) + 1)


@dataclass
class ThermicNorm:
    low: float
    thermic: float
    profile: np.ndarray = field(default=None, repr=False)  # weighted L^p norm per v node

    @property
    def total(self) -> float:
        return self.low + self.thermic


def _lp(vals, h, p):
    if p == 1.0:
        return np.sum(np.abs(vals), axis=-1) * h
    return np.max(np.abs(vals), axis=-1)


def _thermic_rows(rows_hat, n, h, spec: ThermicNormSpec, extra=None):
    """Low part and thermic part for each row given its ``rfft`` along the last axis.

    ``extra`` is an optional multiplier applied on top of the heat kernel one.
    """
    p = 2.0 * np.pi * np.fft.rfftfreq(n, h)
    base = rows_hat if extra is None else rows_hat * extra
    low = _lp(sfft.irfft(base * phi0(p), n=n, axis=-1), h, spec.p)
    sym = np.abs(p) ** spec.alpha
    v = spec.v_grid
    norms = np.empty(rows_hat.shape[:-1] + (len(v),))
    for k, vk in enumerate(v):
        mult = -sym * np.exp(-vk * sym)
        norms[..., k] = _lp(sfft.irfft(base * mult, n=n, axis=-1), h, spec.p)
    if spec.q == 1.0:
        # int v^{-g/alpha} N dv = int v^{1-g/alpha} N dlog v
        prof = v ** (1.0 - spec.gamma_tilde / spec.alpha) * norms
        therm = np.trapezoid(prof, np.log(v), axis=-1)
    else:
        prof = v ** (1.0 - spec.gamma_tilde / spec.alpha) * norms
        therm = np.max(prof, axis=-1)
    return low, therm, prof


def thermic_norm(values, spacing: float, spec: ThermicNormSpec, decay_tol: float = 1e-10) -> ThermicNorm:
    """Thermic Besov norm of a 1-D grid function.

    Parameters
    ----------
    values : array_like, shape (N,)
    spacing : float
    decay_tol : float
        Largest allowed ``|f|`` at the two end nodes, relative to ``max |f|``.

    Raises
    ------
    ResolutionError
        If ``f`` does not decay at the grid boundary.
    """
    f = np.asarray(values, dtype=float)
    if f.ndim != 1:
        raise InputError("thermic_norm expects a 1-D grid function")
    peak = float(np.max(np.abs(f))) if f.size else 0.0
    if peak == 0.0:
        return ThermicNorm(0.0, 0.0, np.zeros(spec.n_v))
    edge = max(abs(f[0]), abs(f[-1]))
    if edge > decay_tol * peak:
        raise ResolutionError(
            f"function is {edge / peak:.3g} of its peak at the boundary (needs < {decay_tol:g}); "
            "enlarge the grid", suggested_spacing=None)
    low, therm, prof = _thermic_rows(sfft.rfft(f), f.size, spacing, spec)
    return ThermicNorm(float(low), float(therm), prof)


@dataclass
class DualityReport:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return 0.0 if self.rhs == 0 else self.lhs / self.rhs


def duality_check(f, g, spacing: float, gamma: float, alpha: float = 1.5,
                  decay_tol: float = 1e-10) -> DualityReport:
    """``|int f g|`` against ``||f||_{B^gamma_{inf,inf}} ||g||_{B^{-gamma}_{1,1}}``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    lhs = abs(float(np.sum(f * g) * spacing))
    nf = thermic_norm(f, spacing, ThermicNormSpec(gamma, np.inf, np.inf, alpha), decay_tol)
    ng = thermic_norm(g, spacing, ThermicNormSpec(-gamma, 1.0, 1.0, alpha), decay_tol)
    return DualityReport(lhs, nf.total * ng.total)


# -- Besov controls of the frozen density -----------------------------------------


@dataclass
class ControlValue:
    """Outer ``y_1`` integral of the row-wise Besov norms."""

    lag: float
    low: float
    thermic: float

    @property
    def total(self) -> float:
        return self.low + self.thermic


@dataclass
class ControlSeries:
    lags: np.ndarray
    thermic: np.ndarray
    lows: np.ndarray
    target: float

    @property
    def values(self) -> np.ndarray:
        """Full norms (low-frequency plus thermic part)."""
        return self.thermic + self.lows

    @property
    def slope(self) -> float:
        return loglog_slope(self.lags, self.values).slope

    def rows(self):
        return [(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(self.lags, self.values, self.lows, self.thermic)]


class _Lattice:
    """Self-similar lattice for the desk chain (n = 2, d = 1) at lag ``r``.

    ``y_1`` spacing scales as ``r^{1/alpha}``, ``y_2`` as ``r^{1+1/alpha}``; the
    ``y_2`` period is padded so that the heat kernel at ``v = 1`` fits.
    """

    def __init__(self, ou: OUDensity, r: float, h_unit: float, half_unit: float, pad: float):
        a = ou.model.alpha
        s1 = r ** (1.0 / a)
        s2 = r ** (1.0 + 1.0 / a)
        self.h1 = h_unit * s1
        self.n1 = int(round(2 * half_unit / h_unit))
        self.h2 = h_unit * s2
        width2 = pad + 2 * half_unit * s2
        self.n2 = sfft.next_fast_len(int(np.ceil(width2 / self.h2)), real=True)
        self.p1 = 2.0 * np.pi * np.fft.fftfreq(self.n1, self.h1)
        self.p2 = 2.0 * np.pi * np.fft.fftfreq(self.n2, self.h2)
        self.y1 = (np.arange(self.n1) - self.n1 // 2) * self.h1
        self.y2 = (np.arange(self.n2) - self.n2 // 2) * self.h2

    def freq(self):
        P1, P2 = np.meshgrid(self.p1, self.p2, indexing="ij")
        return np.stack([P1, P2], axis=-1)

    def to_space(self, spectrum):
        """Inverse transform of an fft-ordered spectrum to centred real values."""
        vals = np.fft.ifft2(spectrum).real / (self.h1 * self.h2)
        return np.fft.fftshift(vals)

    def points(self, centre):
        Y1, Y2 = np.meshgrid(self.y1, self.y2, indexing="ij")
        return np.stack([Y1 + centre[0], Y2 + centre[1]], axis=-1)


def _check_desk(ou: OUDensity, j: int):
    if ou.A.n != 2 or ou.A.d != 1:
        raise InputError("Besov controls are implemented for the n = 2, d = 1 chain")
    if j != 2:
        raise InputError("j must lie in [2, n]")


def _x_multiplier(ou, r, P, orders):
    """Fourier factor of ``D^orders_x`` applied to ``K_r(y - e^{rA} x - c)``."""
    res = resolvent(ou.A, r)
    out = np.ones(P.shape[:-1], dtype=complex)
    for k, m in enumerate(orders):
        if m:
            out = out * (-1j * (P @ res[:, k])) ** m
    return out


def _kernel_spectrum(ou, r, P):
    q = P * ou.scale.T_diag(r)
    return np.exp(ou.symbol(q))


def _rows_norm(lat: _Lattice, values, spec, derivative_first=False):
    """Integrate the row-wise norms over ``y_1``; optional ``D_{y_2}`` folded in."""
    rows_hat = sfft.rfft(values, axis=-1)
    extra = None
    if derivative_first:
        extra = 1j * 2.0 * np.pi * np.fft.rfftfreq(lat.n2, lat.h2)
    low, therm, _ = _thermic_rows(rows_hat, lat.n2, lat.h2, spec, extra)
    return float(np.sum(low) * lat.h1), float(np.sum(therm) * lat.h1)


def besov_spec_for_level(ou: OUDensity, j: int, beta: float, n_v: int = 64, v_min=1e-8):
    """``B^{-(alpha_j + beta_j)}_{1,1}`` on level ``j``."""
    a = ou.model.alpha
    deg = 1.0 + a * (j - 1)
    return ThermicNormSpec(-(a + beta) / deg, 1.0, 1.0, a, v_min, n_v)


def first_besov_control(ou: OUDensity, t: float, s: float, j: int = 2, l: int = 0,
                        beta: float = 0.4, x=None, proxy=None, h_unit: float = 0.125,
                        half_unit: float = 16.0, pad: float = 16.0, n_v: int = 64) -> ControlValue:
    """``int ||D_{y_j} D^l_{x_1} p~(t,s,x,y_1,.)||_{B^{-(alpha_j+beta_j)}_{1,1}} dy_1``.

    The frozen density is a translate of the centred kernel, so the lattice is
    centred at the frozen shift (from ``proxy`` when given, else ``e^{A(s-t)} x``).
    """
    _check_desk(ou, j)
    if l not in (0, 1):
        raise InputError("l must be 0 or 1")
    r = s - t
    if r <= 0:
        raise InputError("need t < s")
    lat = _Lattice(ou, r, h_unit, half_unit, pad)
    P = lat.freq()
    spec_hat = _kernel_spectrum(ou, r, P) * (1j * P[..., 1])
    spec_hat = spec_hat * _x_multiplier(ou, r, P, (l, 0))
    vals = lat.to_space(spec_hat)
    low, therm = _rows_norm(lat, vals, besov_spec_for_level(ou, j, beta, n_v))
    return ControlValue(r, low, therm)


def second_besov_control(ou: OUDensity, drift: DriftSpec, t: float, s: float, x, j: int = 2,
                         theta_order=(0, 0), beta: float = 0.4, h_unit: float = 0.125,
                         half_unit: float = 16.0, pad: float = 16.0, n_v: int = 64,
                         n_steps: int = 256) -> ControlValue:
    """Besov control of ``D_{y_j} . {D^theta_x p~ [F_j(s,y) - F_j(s, theta_{t,s}(x))]}``.

    Freezing is at ``(t, x)`` so the kernel is centred at ``theta_{t,s}(x)``.
    """
    _check_desk(ou, j)
    if sum(theta_order) > 2:
        raise InputError("|theta| must be at most 2")
    r = s - t
    if r <= 0:
        raise InputError("need t < s")
    x = np.asarray(x, dtype=float)
    theta = integrate_flow(t, x, drift, ou.A, s, n_steps).states[-1]
    lat = _Lattice(ou, r, h_unit, half_unit, pad)
    P = lat.freq()
    dens = lat.to_space(_kernel_spectrum(ou, r, P) * _x_multiplier(ou, r, P, theta_order))
    pts = lat.points(theta)
    diff = drift.level(j - 1, s, pts)[..., 0] - drift.level(j - 1, s, theta[None, :])[0, 0]
    low, therm = _rows_norm(lat, dens * diff, besov_spec_for_level(ou, j, beta, n_v),
                            derivative_first=True)
    return ControlValue(r, low, therm)


def control_series(fn, lags, target, **kw) -> ControlSeries:
    """Evaluate a control at ``(0, lag)`` for each lag."""
    vals = [fn(t=0.0, s=float(r), **kw) for r in lags]
    return ControlSeries(np.asarray(lags, dtype=float), np.array([v.thermic for v in vals]),
                         np.array([v.low for v in vals]), target)


def first_control_exponent(alpha, beta, j, l):
    a_j = alpha / (1.0 + alpha * (j - 1))
    return (alpha + beta) / alpha - 1.0 / a_j - l / alpha


def second_control_exponent(alpha, beta, theta_order):
    n = len(theta_order)
    a_k = alpha / (1.0 + alpha * np.arange(n))
    return beta / alpha - float(np.sum(np.asarray(theta_order) / a_k))
