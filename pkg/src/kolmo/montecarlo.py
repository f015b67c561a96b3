"""Monte Carlo estimates of the Feynman-Kac representation

    u(t, x) = E[ g(X_T) + int_t^T f(s, X_s) ds ],   X_t = x.

The first block receives the stable increments; the linear coupling is
integrated with the trapezoid rule in time, which keeps the scheme first order
in the drift and second order in the Ornstein-Uhlenbeck part.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .solver import ProblemData
from .stable import sample_stable

log = logging.getLogger(__name__)


@dataclass
class PathBatch:
    """Final states and running source integrals of simulated paths.

    Attributes
    ----------
    final : ndarray, shape (N, nd)
    running : ndarray, shape (N,)
        ``int_t^T f(s, X_s) ds`` by the trapezoid rule.
    finite : ndarray of bool, shape (N,)
    """

    final: np.ndarray
    running: np.ndarray
    finite: np.ndarray

    @property
    def excluded_fraction(self) -> float:
        return float(1.0 - np.mean(self.finite))


def simulate_chain(problem: ProblemData, t: float, x, n_paths: int, n_steps: int = 200,
                   rng: np.random.Generator | None = None, seed: int = 0) -> PathBatch:
    """Simulate ``n_paths`` paths of the chain from ``(t, x)`` up to ``problem.T``."""
    if n_paths < 2 or n_steps < 16:
        raise InputError("need at least two paths and 16 time steps")
    if not (0.0 <= t <= problem.T):
        raise InputError("start time outside [0, T]")
    rng = np.random.default_rng(seed) if rng is None else rng
    A = problem.A
    d, n = A.d, A.n
    C = A.full()
    x = np.broadcast_to(np.asarray(x, dtype=float), (n_paths, A.dim)).copy()
    dt = (problem.T - t) / n_steps
    run = np.zeros(n_paths)
    with np.errstate(over="ignore", invalid="ignore"):
        f_prev = problem.source(t, x)
        for k in range(n_steps):
            s = t + k * dt
            drift = problem.drift(s, x)
            old = x.copy()
            x[:, :d] += drift[:, :d] * dt + sample_stable(problem.model, dt, rng, n_paths)
            for i in range(1, n):
                sl, prev = slice(i * d, (i + 1) * d), slice((i - 1) * d, i * d)
                lin = 0.5 * ((old[:, prev] + x[:, prev]) @ C[sl, prev].T)
                x[:, sl] += (lin + drift[:, sl]) * dt
            f_next = problem.source(s + dt, x)
            run += 0.5 * dt * (f_prev + f_next)
            f_prev = f_next
    finite = np.all(np.isfinite(x), axis=1) & np.isfinite(run)
    return PathBatch(x, run, finite)


@dataclass
class MCEstimate:
    value: float
    std_error: float
    n_used: int
    excluded: float


def feynman_kac(problem: ProblemData, t: float, x, n_paths: int = 100_000, n_steps: int = 200,
                seed: int = 0) -> MCEstimate:
    """Sample mean and standard error of the Feynman-Kac functional.

    Non-finite paths are dropped; a warning is issued when more than 1% are.
    """
    batch = simulate_chain(problem, t, x, n_paths, n_steps, seed=seed)
    ok = batch.finite
    vals = np.asarray(problem.g(batch.final[ok]), dtype=float) + batch.running[ok]
    excl = batch.excluded_fraction
    if excl > 0.01:
        warnings.warn(f"{100 * excl:.2f}% of Monte Carlo paths were non-finite and excluded",
                      RuntimeWarning, stacklevel=2)
    se = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
    return MCEstimate(float(np.mean(vals)), se, int(ok.sum()), excl)


def probe_seeds(seed: int, n: int):
    """Independent integer seeds, one per probe."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
