"""Symmetric stable laws: spherical measures, Levy symbols, densities, samplers.

A symmetric alpha-stable law on R^d is described here by its spherical
measure ``mu`` through the symbol

    Psi(p) = - int_{S^{d-1}} |<p, s>|^alpha mu(ds),

so that the characteristic function at time ``t`` is ``exp(t Psi(p))``.
Densities are obtained by discrete Fourier inversion on centred grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.ndimage import map_coordinates, spline_filter

from .errors import (
    DegeneracyError,
    DomainError,
    InputError,
    NegativeDensityError,
    ResolutionError,
)

# Fourier inversion is trusted only when exp(t Psi) is negligible on the
# boundary of the frequency box.
BOUNDARY_DECAY = 1e-12
# Relative thresholds (w.r.t. the peak value) for FFT ringing.
CLAMP_THRESHOLD = 1e-9
FAIL_THRESHOLD = 1e-6

_UNIT_TOL = 1e-12


def _merge_atoms(directions, weights, tol=1e-12):
    """Merge atoms with coinciding directions (weights are added)."""
    out_dirs, out_w = [], []
    for s, w in zip(directions, weights):
        for k, t in enumerate(out_dirs):
            if np.max(np.abs(t - s)) <= tol:
                out_w[k] += w
                break
        else:
            out_dirs.append(np.array(s, dtype=float))
            out_w.append(float(w))
    return np.array(out_dirs), np.array(out_w)


def sphere_design(d: int, m: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors in R^d.

    Parameters
    ----------
    d : int
        Ambient dimension.
    m : int
        Number of directions. For ``d == 1`` only the two points ``+1`` and
        ``-1`` exist and ``m`` is ignored.

    Returns
    -------
    ndarray of shape (m, d)
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2.0 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        # Fibonacci lattice
        k = np.arange(m) + 0.5
        z = 1.0 - 2.0 * k / m
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    u = stats.qmc.Halton(d, scramble=False).random(m + 1)[1:]
    g = stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SphericalMeasure:
    """Finite symmetric measure on the unit sphere of R^d.

    Uniform measures are stored as a symmetric atomic design, so every
    downstream computation sees atoms only.

    Attributes
    ----------
    dimension : int
    directions : ndarray, shape (m, dimension)
        Unit vectors.
    weights : ndarray, shape (m,)
    kind : {"atoms", "uniform"}
    total_mass : float
    """

    dimension: int
    directions: np.ndarray
    weights: np.ndarray
    kind: str = "atoms"
    total_mass: float = field(default=float("nan"))

    def __post_init__(self):
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if dirs.shape != (w.size, self.dimension):
            raise InputError("directions must have shape (len(weights), dimension)")
        if not (np.all(np.isfinite(dirs)) and np.all(np.isfinite(w))):
            raise InputError("non-finite atom data")
        if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > _UNIT_TOL):
            raise InputError("atom directions must be unit vectors")
        if np.any(w < 0):
            raise InputError("atom weights must be nonnegative")
        if not np.any(w > 0):
            raise DegeneracyError("spherical measure has zero mass")
        for s, ws in zip(dirs, w):
            hit = np.max(np.abs(dirs + s), axis=1) <= 1e-12
            if not np.any(hit) or abs(w[hit].sum() - ws) > 1e-12 * max(1.0, ws):
                raise InputError("spherical measure is not symmetric")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_mass", float(w.sum()))

    @classmethod
    def from_atoms(cls, directions, weights, symmetrize=True):
        """Build an atomic measure, symmetrizing ``(s, w) -> (s, w/2), (-s, w/2)``."""
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if symmetrize:
            dirs = np.concatenate([dirs, -dirs])
            w = np.concatenate([w, w]) / 2.0
        dirs, w = _merge_atoms(dirs, w)
        return cls(dirs.shape[1], dirs, w, "atoms")

    @classmethod
    def canonical(cls, d: int, weight: float = 0.5):
        """Atoms at ``+-e_i`` with equal weight; symbol ``-2 weight sum |p_i|^alpha``."""
        eye = np.eye(d)
        return cls(d, np.concatenate([eye, -eye]), np.full(2 * d, weight), "atoms")

    @classmethod
    def uniform(cls, d: int, total_mass: float = 1.0, n_atoms: int = 64):
        """Uniform measure atomized on a symmetric quasi-uniform design."""
        if d == 1:
            dirs = sphere_design(1, 2)
        elif d == 2:
            if n_atoms % 2:
                raise InputError("n_atoms must be even")
            dirs = sphere_design(2, n_atoms)
        else:
            half = sphere_design(d, n_atoms // 2)
            dirs = np.concatenate([half, -half])
        w = np.full(len(dirs), total_mass / len(dirs))
        return cls(d, dirs, w, "uniform")

    def pairs(self):
        """Representatives of antipodal pairs and the summed pair weights."""
        keep = []
        for k, s in enumerate(self.directions):
            nz = s[np.abs(s) > 1e-14]
            if nz.size and nz[0] > 0:
                keep.append(k)
        keep = np.array(keep, dtype=int)
        return self.directions[keep], 2.0 * self.weights[keep]


@dataclass(frozen=True, eq=False)
class LevyModel:
    """Symmetric alpha-stable model ``(alpha, mu)``."""

    alpha: float
    measure: SphericalMeasure

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise InputError(f"alpha must lie in (0, 2), got {self.alpha}")

    @property
    def dimension(self) -> int:
        return self.measure.dimension


def levy_symbol(p, model: LevyModel) -> np.ndarray:
    """Evaluate ``Psi(p) = -int |<p, s>|^alpha mu(ds)``.

    Parameters
    ----------
    p : array_like, shape (..., d)
    model : LevyModel

    Returns
    -------
    ndarray of shape p.shape[:-1]
        Nonpositive values.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != model.dimension:
        raise InputError("last axis of p must match the measure dimension")
    if not np.all(np.isfinite(p)):
        raise InputError("non-finite frequency")
    m = model.measure
    out = np.zeros(p.shape[:-1])
    for s, w in zip(m.directions, m.weights):
        out -= w * np.abs(p @ s) ** model.alpha
    return out


@dataclass(frozen=True)
class NondegeneracyReport:
    eta_low: float
    eta_high: float
    eta: float

    @property
    def nondegenerate(self) -> bool:
        return self.eta_low > 0.0


def nondegeneracy_ratio(model: LevyModel, n_directions: int = 256) -> NondegeneracyReport:
    """Bracket ``int |<p,s>|^alpha mu(ds)`` over quasi-uniform unit ``p``.

    ``eta`` is ``max(eta_high, 1/eta_low)``; it is infinite for a degenerate
    measure.
    """
    if n_directions < 16:
        raise InputError("n_directions must be at least 16")
    dirs = sphere_design(model.dimension, n_directions)
    vals = -levy_symbol(dirs, model)
    lo, hi = float(vals.min()), float(vals.max())
    lo = 0.0 if lo < 1e-14 * max(hi, 1.0) else lo
    eta = math.inf if lo == 0.0 else max(hi, 1.0 / lo)
    return NondegeneracyReport(lo, hi, eta)


# ----------------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Centred regular grid: axis k has nodes ``(j - N_k//2) * h_k``."""

    points: tuple
    spacing: tuple

    def __post_init__(self):
        pts = tuple(int(n) for n in np.atleast_1d(self.points))
        h = tuple(float(x) for x in np.atleast_1d(self.spacing))
        if len(h) == 1 and len(pts) > 1:
            h = h * len(pts)
        if len(pts) != len(h) or any(n < 4 for n in pts) or any(x <= 0 for x in h):
            raise InputError("invalid grid specification")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", h)

    @classmethod
    def cube(cls, dims: int, n: int, half_width: float):
        """``n`` points per axis with spacing ``2*half_width/n``."""
        return cls((n,) * dims, (2.0 * half_width / n,) * dims)

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def lows(self):
        return tuple(-(n // 2) * h for n, h in zip(self.points, self.spacing))

    @property
    def highs(self):
        return tuple((n - 1 - n // 2) * h for n, h in zip(self.points, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [(np.arange(n) - n // 2) * h for n, h in zip(self.points, self.spacing)]

    def mesh(self):
        """Stacked coordinates, shape (*points, dims)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def frequencies(self):
        """Angular frequencies per axis in FFT order."""
        return [2.0 * np.pi * np.fft.fftfreq(n, h) for n, h in zip(self.points, self.spacing)]

    def scaled(self, factor):
        f = np.broadcast_to(np.asarray(factor, dtype=float), (self.dims,))
        return GridSpec(self.points, tuple(h * c for h, c in zip(self.spacing, f)))


@dataclass(eq=False)
class GridDensity:
    """Samples of a kernel (or one of its derivatives) on a centred grid.

    Attributes
    ----------
    grid : GridSpec
    values : ndarray
        Array of shape ``grid.points``.
    time : float
    tol : float
        Declared mass tolerance of the producing operation.
    mass_defect : float or None
        ``sum(values) * cell_volume - 1`` for densities, None for derivatives.
    clamped : int
        Number of small negative values set to zero.
    """

    grid: GridSpec
    values: np.ndarray
    time: float
    tol: float = 1e-6
    mass_defect: float | None = None
    clamped: int = 0
    label: str = "density"

    @property
    def dims(self) -> int:
        return self.grid.dims

    @property
    def lows(self):
        return self.grid.lows

    @property
    def highs(self):
        return self.grid.highs

    @property
    def points_per_axis(self):
        return self.grid.points

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def _frequency_mesh(grid: GridSpec):
    return np.stack(np.meshgrid(*grid.frequencies(), indexing="ij"), axis=-1)


def _boundary_max(arr: np.ndarray) -> float:
    """Largest modulus on the Nyquist faces of an FFT-ordered array."""
    out = 0.0
    for ax, n in enumerate(arr.shape):
        sl = [slice(None)] * arr.ndim
        sl[ax] = n // 2
        out = max(out, float(np.max(np.abs(arr[tuple(sl)]))))
    return out


def _invert(transform: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Inverse Fourier transform from FFT order to centred real samples.

    Uses ``f(x) = (2 pi)^{-D} int exp(-i p.x) F(p) dp``.
    """
    vals = np.fft.fftn(transform)
    vals = np.fft.fftshift(vals).real
    return vals / float(np.prod([n * h for n, h in zip(grid.points, grid.spacing)]))


def _derivative_factor(pmesh, derivative):
    fac = 1.0 + 0j
    for ax, k in enumerate(derivative):
        if k:
            pk = pmesh[..., ax].copy()
            if k % 2:
                n = pmesh.shape[ax]
                if n % 2 == 0:
                    # drop the unpaired Nyquist mode for odd orders
                    sl = [slice(None)] * (pmesh.ndim - 1)
                    sl[ax] = n // 2
                    pk[tuple(sl)] = 0.0
            fac = fac * (-1j * pk) ** k
    return fac


def _kernel_grid(symbol_fn, alpha, t, grid, derivative, time_derivative, label, check):
    if t <= 0:
        raise InputError("time must be positive")
    pmesh = _frequency_mesh(grid)
    psi = symbol_fn(pmesh)
    chf = np.exp(t * psi)
    decay = _boundary_max(chf)
    if check and decay >= BOUNDARY_DECAY:
        # symbol is alpha-homogeneous: rescale the boundary frequency
        gain = math.log(1.0 / BOUNDARY_DECAY) / max(-math.log(max(decay, 1e-300)), 1e-12)
        suggested = tuple(h / gain ** (1.0 / alpha) for h in grid.spacing)
        raise ResolutionError(
            f"exp(t*Psi) = {decay:.3g} on the frequency boundary (needs < {BOUNDARY_DECAY:g}); "
            f"refine the spacing, e.g. to {tuple(float(f'{s:.4g}') for s in suggested)}",
            suggested_spacing=suggested,
        )
    transform = chf
    if time_derivative:
        transform = transform * psi
    plain = not time_derivative and not any(derivative or ())
    if derivative is not None and any(derivative):
        transform = transform * _derivative_factor(pmesh, derivative)
    values = _invert(transform, grid)
    if not plain:
        return GridDensity(grid, values, t, label=label + "-derivative")
    peak = float(values.max())
    neg = values < 0
    clamped = 0
    if np.any(neg):
        worst = float(values.min())
        if worst < -FAIL_THRESHOLD * peak:
            raise NegativeDensityError(
                f"Fourier inversion produced {worst:.3g} (peak {peak:.3g}); grid too coarse"
            )
        clamped = int(neg.sum())
        values = np.where(neg, 0.0, values)
    mass = values.sum() * grid.cell_volume
    return GridDensity(grid, values, t, 1e-6, float(mass - 1.0), clamped, label)


def stable_density_grid(
    model: LevyModel,
    t: float,
    grid: GridSpec,
    derivative=None,
    time_derivative: bool = False,
    check: bool = True,
) -> GridDensity:
    """Density of the stable law ``(model)`` at time ``t`` on ``grid``.

    Parameters
    ----------
    model : LevyModel
        Its dimension must equal ``grid.dims``.
    t : float
        Positive time.
    grid : GridSpec
    derivative : tuple of int, optional
        Spatial multi-index; derivatives are spectral.
    time_derivative : bool
        Return ``d/dt`` of the (differentiated) density instead.
    check : bool
        Enforce the boundary decay requirement.

    Raises
    ------
    ResolutionError
        If ``exp(t Psi)`` is not below ``1e-12`` on the frequency boundary.
    NegativeDensityError
        If ringing exceeds ``1e-6`` of the peak.
    """
    if grid.dims != model.dimension:
        raise InputError("grid and model dimensions differ")
    return _kernel_grid(
        lambda P: levy_symbol(P, model), model.alpha, t, grid, derivative, time_derivative, "stable", check
    )


def isotropic_symbol(p, alpha: float) -> np.ndarray:
    """``-|p|^alpha``, the symbol of the rotation invariant kernel."""
    p = np.asarray(p, dtype=float)
    return -np.linalg.norm(p, axis=-1) ** alpha


def heat_kernel_grid(
    alpha: float,
    d: int,
    t: float,
    grid: GridSpec,
    derivative=None,
    time_derivative: bool = False,
    check: bool = True,
) -> GridDensity:
    """Isotropic stable heat kernel ``p_h(t, .)`` on R^d (symbol ``-|p|^alpha``)."""
    if not (0.0 < alpha < 2.0):
        raise InputError("alpha must lie in (0, 2)")
    if grid.dims != d:
        raise InputError("grid dimension differs from d")
    return _kernel_grid(
        lambda P: isotropic_symbol(P, alpha), alpha, t, grid, derivative, time_derivative, "heat", check
    )


def smoothing_moment(density: GridDensity, gamma: float, order: int = 0, alpha=None,
                     components=None) -> float:
    """``int |y|^gamma |D^l p(y)| dy`` for a density or derivative grid.

    Parameters
    ----------
    density : GridDensity
        Samples of ``p`` (``order == 0``) or, when ``components`` is given,
        ignored in favour of the component grids.
    gamma : float
        Weight exponent; must be below ``alpha`` when ``alpha`` is given.
    order : int
        Derivative order, only used for bookkeeping.
    components : list of GridDensity, optional
        All partial derivatives of order ``l``; their Euclidean norm is used.
    """
    if alpha is not None and not (0.0 <= gamma < alpha):
        raise DomainError("gamma must lie in [0, alpha) for the moment to be finite")
    grid = density.grid
    r = np.linalg.norm(grid.mesh(), axis=-1)
    if components:
        mag = np.sqrt(sum(c.values ** 2 for c in components))
    else:
        mag = np.abs(density.values)
    return float(np.sum(r ** gamma * mag) * grid.cell_volume)


class DensityEvaluator:
    """Cubic-spline evaluator of ``p(t, z) = t^{-D/alpha} p(1, t^{-1/alpha} z)``.

    Built once from a unit-time grid. Points falling outside the grid are
    assigned zero and counted in ``outside``.
    """

    def __init__(self, unit_density: GridDensity, alpha: float):
        if abs(unit_density.time - 1.0) > 1e-14:
            raise InputError("evaluator expects a unit-time density grid")
        self.density = unit_density
        self.alpha = float(alpha)
        self._coef = spline_filter(unit_density.values, order=3, mode="nearest")
        self.outside = 0

    @property
    def dims(self):
        return self.density.dims

    def unit(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = self.density.grid
        idx = [(z[..., k] / g.spacing[k]) + g.points[k] // 2 for k in range(g.dims)]
        inside = np.ones(z.shape[:-1], dtype=bool)
        for k in range(g.dims):
            inside &= (idx[k] >= 0) & (idx[k] <= g.points[k] - 1)
        self.outside += int(np.size(inside) - np.count_nonzero(inside))
        coords = np.stack([np.ravel(i) for i in idx])
        vals = map_coordinates(self._coef, coords, order=3, mode="nearest", prefilter=False)
        vals = vals.reshape(z.shape[:-1])
        return np.where(inside, np.maximum(vals, 0.0), 0.0)

    def __call__(self, t, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        s = t ** (1.0 / self.alpha)
        return self.unit(z / s) / s ** self.dims


def sample_symmetric_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric stable variates with characteristic function ``exp(-|u|^alpha)``."""
    return stats.levy_stable.rvs(alpha, 0.0, size=size, random_state=rng)


def sample_stable(model: LevyModel, t: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw the stable vector at time ``t``.

    Uses ``sum_k (t w_k)^{1/alpha} Z_k s_k`` over antipodal pairs ``(s_k, w_k)``
    with independent standard symmetric variates ``Z_k``.

    Returns
    -------
    ndarray of shape ``(*size, d)`` (``(d,)`` if ``size`` is None)
    """
    dirs, w = model.measure.pairs()
    shape = () if size is None else tuple(np.atleast_1d(size))
    z = sample_symmetric_stable(model.alpha, shape + (len(w),), rng)
    scale = (t * w) ** (1.0 / model.alpha)
    return (z * scale) @ dirs
