"""Chain matrices, intrinsic scalings and the degenerate OU density.

The chain matrix ``A`` on ``R^{nd}`` only has the sub-diagonal blocks
``A_{i,i-1}`` and ``B`` embeds ``R^d`` into the first block. The noise part of
``X_t = e^{tA} x + int_0^t e^{(t-s)A} B dZ_s`` equals ``M_t S_t`` in law, where
``S`` is a symmetric stable process on ``R^{nd}`` whose spherical measure is
the lift of ``mu`` through ``(v, s) -> e^{vA} B s`` (see :func:`projected_measure`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import AssumptionError, InputError
from .stable import (
    DensityEvaluator,
    GridDensity,
    GridSpec,
    LevyModel,
    SphericalMeasure,
    levy_symbol,
    stable_density_grid,
)

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ChainMatrix:
    """Sub-diagonal block matrix ``A`` with blocks ``A_{i,i-1}``, ``i = 2..n``.

    Parameters
    ----------
    n : int
        Number of levels.
    d : int
        Block size.
    subblocks : sequence of (d, d) arrays
        ``subblocks[k]`` is ``A_{k+2, k+1}`` (levels counted from one).
    """

    n: int
    d: int
    subblocks: tuple

    def __post_init__(self):
        blocks = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.subblocks)
        if self.n < 1 or self.d < 1 or len(blocks) != self.n - 1:
            raise InputError("need n-1 sub-diagonal blocks")
        for k, b in enumerate(blocks):
            if b.shape != (self.d, self.d):
                raise InputError(f"block A_{k + 2},{k + 1} has shape {b.shape}")
            smin = np.linalg.svd(b, compute_uv=False).min()
            if smin <= RANK_TOL:
                raise AssumptionError(
                    f"block A_{k + 2},{k + 1} is rank deficient (smallest singular value {smin:.3g})"
                )
        object.__setattr__(self, "subblocks", blocks)

    @classmethod
    def scalar_chain(cls, n: int, coupling: float = 1.0):
        """``d = 1`` chain with all couplings equal."""
        return cls(n, 1, tuple(np.array([[coupling]]) for _ in range(n - 1)))

    @property
    def dim(self) -> int:
        return self.n * self.d

    def full(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        d = self.d
        for k, b in enumerate(self.subblocks):
            i = k + 1
            a[i * d:(i + 1) * d, (i - 1) * d:i * d] = b
        return a

    def B(self) -> np.ndarray:
        b = np.zeros((self.dim, self.d))
        b[: self.d] = np.eye(self.d)
        return b

    def block(self, x, i):
        """Level ``i`` (one-based) components of ``x``."""
        x = np.asarray(x)
        return x[..., (i - 1) * self.d:i * self.d]


def resolvent_constants(A: ChainMatrix):
    """Blocks ``C_{i,j}`` with ``[e^{tA}]_{i,j} = C_{i,j} t^{i-j}`` for ``i >= j``.

    Returns a dict keyed by one-based ``(i, j)``.
    """
    out = {}
    for j in range(1, A.n + 1):
        prod = np.eye(A.d)
        out[(j, j)] = prod.copy()
        for i in range(j + 1, A.n + 1):
            prod = A.subblocks[i - 2] @ prod
            out[(i, j)] = prod / math.factorial(i - j)
    return out


def resolvent(A: ChainMatrix, t: float) -> np.ndarray:
    """Closed form of ``e^{tA}`` (the nilpotent series stops at order n-1)."""
    d = A.d
    out = np.zeros((A.dim, A.dim))
    for (i, j), c in resolvent_constants(A).items():
        out[(i - 1) * d:i * d, (j - 1) * d:j * d] = c * t ** (i - j)
    return out


@dataclass(frozen=True)
class ScaleOps:
    """Intrinsic scalings ``M_t`` (block ``i`` is ``t^{i-1} I``) and ``T_t = t^{1/alpha} M_t``."""

    n: int
    d: int
    alpha: float

    def M_diag(self, t) -> np.ndarray:
        return np.repeat([float(t) ** i for i in range(self.n)], self.d)

    def M(self, t) -> np.ndarray:
        return np.diag(self.M_diag(t))

    def det_M(self, t) -> float:
        return float(t) ** (self.d * self.n * (self.n - 1) / 2)

    def T_diag(self, t) -> np.ndarray:
        return float(t) ** (1.0 / self.alpha) * self.M_diag(t)

    def T(self, t) -> np.ndarray:
        return np.diag(self.T_diag(t))

    def level_exponents(self) -> np.ndarray:
        """``1 + alpha (i-1)`` repeated over each block, the homogeneity of level ``i``."""
        return np.repeat([1.0 + self.alpha * i for i in range(self.n)], self.d)


@dataclass(frozen=True, eq=False)
class ProjectedMeasure:
    """Spherical measure on ``S^{nd-1}`` obtained by lifting ``mu``.

    Attributes
    ----------
    measure : SphericalMeasure
        The lifted, symmetrized atoms.
    n_time_nodes : int
    total_weight : float
        Quadrature value of ``int_0^1 int |e^{vA} B s|^alpha mu(ds) dv``.
    """

    measure: SphericalMeasure
    n_time_nodes: int
    total_weight: float

    def model(self, alpha: float) -> LevyModel:
        return LevyModel(alpha, self.measure)


def projected_measure(A: ChainMatrix, model: LevyModel, n_time_nodes: int = 16) -> ProjectedMeasure:
    """Lift ``mu`` to ``S^{nd-1}`` with Gauss-Legendre nodes in ``v``.

    Atom ``(v_j, s_k)`` sits at ``e^{v_j A} B s_k / |e^{v_j A} B s_k|`` with weight
    ``w_k q_j |e^{v_j A} B s_k|^alpha``.
    """
    if model.dimension != A.d:
        raise InputError("measure dimension must equal the block size d")
    nodes, wq = np.polynomial.legendre.leggauss(n_time_nodes)
    v = 0.5 * (nodes + 1.0)
    wq = 0.5 * wq
    B = A.B()
    dirs, weights = [], []
    for vj, qj in zip(v, wq):
        lift = resolvent(A, vj) @ B
        for s, w in zip(model.measure.directions, model.measure.weights):
            vec = lift @ s
            norm = np.linalg.norm(vec)
            if norm <= 0.0:
                raise AssertionError("lift of a unit vector vanished")
            dirs.append(vec / norm)
            weights.append(w * qj * norm ** model.alpha)
    dirs = np.array(dirs)
    weights = np.array(weights)
    total = float(weights.sum())
    # input measure is symmetric, hence so is the lift; symmetrize for safety
    measure = SphericalMeasure.from_atoms(dirs, weights, symmetrize=True)
    return ProjectedMeasure(measure, n_time_nodes, total)


def projected_symbol_exact(q, A: ChainMatrix, model: LevyModel, epsabs=1e-13) -> np.ndarray:
    """``-int_0^1 int |<q, e^{vA} B s>|^alpha mu(ds) dv`` by adaptive quadrature.

    Independent of the Gauss-Legendre lift; intended as a reference value.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    B = A.B()
    out = np.empty(len(q))
    consts = resolvent_constants(A)
    for k, qk in enumerate(q):
        # <q, e^{vA} B s> is a polynomial in v; locate sign changes as breakpoints
        def integrand(v):
            lift = resolvent(A, v) @ B
            return sum(w * abs(qk @ lift @ s) ** model.alpha
                       for s, w in zip(model.measure.directions, model.measure.weights))
        brk = []
        for s in model.measure.directions:
            coeffs = []
            for i in range(A.n):
                blk = qk[i * A.d:(i + 1) * A.d]
                coeffs.append(float(blk @ consts[(i + 1, 1)] @ s))
            roots = np.roots(coeffs[::-1]) if any(coeffs[1:]) else []
            brk += [r.real for r in roots if abs(r.imag) < 1e-12 and 0 < r.real < 1]
        val, _ = integrate.quad(integrand, 0.0, 1.0, points=sorted(set(brk)) or None,
                                epsabs=epsabs, epsrel=1e-12, limit=200)
        out[k] = -val
    return out


def ou_characteristic_function(p, t, x, A: ChainMatrix, model: LevyModel, symbol=None):
    """``E exp(i <p, X_t>)`` for the chain started at ``x`` without drift.

    Equals ``exp(i <p, e^{tA} x> + t Psi_S(M_t p))``. ``symbol`` defaults to the
    exact projected symbol.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    scale = ScaleOps(A.n, A.d, model.alpha)
    mp = p * scale.M_diag(t)
    psi = projected_symbol_exact(mp, A, model) if symbol is None else symbol(mp)
    phase = p @ (resolvent(A, t) @ np.asarray(x, dtype=float))
    return np.exp(1j * phase + t * psi)


def default_master_grid(dim: int, n: int = 512, spacing: float = 0.08) -> GridSpec:
    return GridSpec((n,) * dim, (spacing,) * dim)


class OUDensity:
    """Evaluator of ``p^{ou}(t, x, y) = p_S(t, M_t^{-1}(e^{tA} x - y)) / det M_t``.

    Parameters
    ----------
    A : ChainMatrix
    model : LevyModel
        Driving model on ``R^d``.
    grid : GridSpec, optional
        Unit-time master grid on ``R^{nd}`` for ``p_S``.
    n_time_nodes : int
        Gauss-Legendre nodes for the lift.
    """

    def __init__(self, A: ChainMatrix, model: LevyModel, grid: GridSpec | None = None,
                 n_time_nodes: int = 16):
        self.A = A
        self.model = model
        self.proj = projected_measure(A, model, n_time_nodes)
        self.proj_model = self.proj.model(model.alpha)
        self.scale = ScaleOps(A.n, A.d, model.alpha)
        grid = grid or default_master_grid(A.dim)
        self.master: GridDensity = stable_density_grid(self.proj_model, 1.0, grid)
        self.p_S = DensityEvaluator(self.master, model.alpha)

    def symbol(self, q) -> np.ndarray:
        """Quadrature projected symbol ``Psi_S``."""
        return levy_symbol(q, self.proj_model)

    def kernel(self, t, z) -> np.ndarray:
        """Density of the noise part ``M_t S_t`` at ``z``."""
        z = np.asarray(z, dtype=float)
        return self.p_S(t, z / self.scale.M_diag(t)) / self.scale.det_M(t)

    def __call__(self, t, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mean = x @ resolvent(self.A, t).T
        return self.kernel(t, mean - y)

    def lattice(self, t, x):
        """Points ``y = e^{tA} x - T_t w`` over the master lattice and their cell volume."""
        w = self.master.grid.mesh().reshape(-1, self.A.dim)
        y = np.asarray(x, dtype=float) @ resolvent(self.A, t).T - w * self.scale.T_diag(t)
        vol = self.master.grid.cell_volume * float(np.prod(self.scale.T_diag(t)))
        return y, vol


def ou_density(t, x, y, evaluator: OUDensity) -> np.ndarray:
    """Functional form of :class:`OUDensity`."""
    return evaluator(t, x, y)


@dataclass
class ScalingLemmaReport:
    residuals: np.ndarray  # max relative residual per level
    probes: int
    outside: int


def check_scaling_lemma(ou: OUDensity, t: float, x, y, fd_step: float = 1e-3) -> ScalingLemmaReport:
    """Finite-difference check of ``D_{x_i} p = -sum_{j>=i} (C_{j,i} t^{j-i})^T D_{y_j} p``.

    Parameters
    ----------
    x, y : array_like, shape (m, nd)
        Probe pairs.
    fd_step : float
        Central difference step, must exceed the float noise level.

    Returns
    -------
    ScalingLemmaReport
        ``residuals[i-1]`` is the largest relative residual at level ``i``.
    """
    if fd_step < 1e-7:
        raise InputError("fd_step too small compared with interpolation noise")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    A = ou.A
    nd, d = A.dim, A.d
    before = ou.p_S.outside
    eye = np.eye(nd)

    def grad(fun, base):
        g = np.empty(base.shape)
        for k in range(nd):
            h = fd_step * eye[k]
            g[:, k] = (fun(base + h) - fun(base - h)) / (2.0 * fd_step)
        return g

    dx = grad(lambda z: ou(t, z, y), x)
    dy = grad(lambda z: ou(t, x, z), y)
    consts = resolvent_constants(A)
    res = np.zeros(A.n)
    for i in range(1, A.n + 1):
        lhs = dx[:, (i - 1) * d:i * d]
        rhs = np.zeros_like(lhs)
        for j in range(i, A.n + 1):
            c = consts[(j, i)] * t ** (j - i)
            rhs -= dy[:, (j - 1) * d:j * d] @ c
        scale = np.maximum(np.abs(lhs).max(axis=1), np.abs(rhs).max(axis=1))
        scale = np.maximum(scale, 1e-12)
        res[i - 1] = float(np.max(np.abs(lhs - rhs).max(axis=1) / scale))
    return ScalingLemmaReport(res, len(x), ou.p_S.outside - before)
