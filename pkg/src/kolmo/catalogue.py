"""Test functions and drifts of known regularity used by the verification suites."""
from __future__ import annotations

import numpy as np

from .flow import DriftSpec
from .metric import MetricParams, holder_norm_estimate, sample_pairs


def gaussian_envelope(x, width: float = 8.0):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.sum(x * x, axis=-1) / width)


def cos_mode(p):
    """``x -> cos(<p, x>)``."""
    p = np.asarray(p, dtype=float)
    return lambda x: np.cos(np.asarray(x, dtype=float) @ p)


def torus_frequency(grid, modes):
    """Angular frequency of integer ``modes`` on the periodic box."""
    return 2.0 * np.pi * np.asarray(modes, dtype=float) / np.array(grid.widths)


def smooth_bump(centre, radius: float = 1.0):
    """Compactly supported ``exp(1 - 1/(1 - |x - c|^2/r^2))``."""
    c = np.asarray(centre, dtype=float)

    def bump(x):
        z2 = np.sum((np.asarray(x, dtype=float) - c) ** 2, axis=-1) / radius ** 2
        out = np.zeros(z2.shape)
        m = z2 < 1.0
        out[m] = np.exp(1.0 - 1.0 / (1.0 - z2[m]))
        return out

    return bump


def anisotropic_power(params: MetricParams, gamma: float, centre=None, width: float = 8.0):
    """Function of exact anisotropic regularity ``gamma`` (Gaussian envelope).

    Level ``i`` contributes ``|x_i - c_i|^{gamma/(1 + alpha(i-1))}`` (a first
    coordinate power ``|x_1 - c_1|^gamma`` when ``gamma > 1``).
    """
    nd = params.n * params.d
    c = np.zeros(nd) if centre is None else np.asarray(centre, dtype=float)
    exps = gamma * params.exponents

    def phi(x):
        x = np.asarray(x, dtype=float)
        acc = 0.0
        for i in range(params.n):
            blk = np.linalg.norm(x[..., i * params.d:(i + 1) * params.d] - c[i * params.d:(i + 1) * params.d],
                                 axis=-1)
            acc = acc + blk ** exps[i]
        return gaussian_envelope(x, width) * acc

    return phi


def _estimate_norm(drift: DriftSpec, alpha, beta, box=4.0, budget=256, seed=0):
    params = MetricParams(drift.n, drift.d, alpha, beta)
    nd = drift.n * drift.d
    pairs = sample_pairs(params, -box * np.ones(nd), box * np.ones(nd), budget, seed=seed)
    worst = 0.0
    for i in drift.active_levels():
        reg = beta if i == 0 else 1.0 + alpha * (i - 1) + beta
        for c in range(drift.d):
            fn = lambda x, i=i, c=c: drift.level(i, 0.0, x)[..., c]  # noqa: E731
            worst = max(worst, holder_norm_estimate(fn, reg, params, pairs).total) if reg < 2 else worst
    return worst


def desk_drift(eps: float = 0.1, alpha: float = 1.5, beta: float = 0.4, centre=(0.3, -0.2)) -> DriftSpec:
    """Level-one drift on the two-level scalar chain, Hoelder but not smoother.

    ``F_1 = eps * env(x) * (|x_1 - c_1|^beta + |x_2 - c_2|^{beta/(1+alpha)})``, ``F_2 = 0``.
    The declared norm is a sampled estimate.
    """
    c1, c2 = centre
    e2 = beta / (1.0 + alpha)

    def f1(t, x):
        x = np.asarray(x, dtype=float)
        v = gaussian_envelope(x) * (np.abs(x[..., 0] - c1) ** beta + np.abs(x[..., 1] - c2) ** e2)
        return eps * v[..., None]

    base = DriftSpec(2, 1, (f1, None), float("nan"), True, f"desk({eps:g})")
    return DriftSpec(2, 1, (f1, None), _estimate_norm(base, alpha, beta), True, base.name)


def desk_level2_drift(eps: float = 1.0, alpha: float = 1.5, beta: float = 0.4, centre: float = -0.2) -> DriftSpec:
    """Level-two drift ``F_2 = eps * exp(-x_2^2/8) |x_2 - c|^{(1+beta)/(1+alpha)}``."""
    rho = (1.0 + beta) / (1.0 + alpha)

    def f2(t, x):
        x2 = np.asarray(x, dtype=float)[..., 1]
        return (eps * np.exp(-x2 * x2 / 8.0) * np.abs(x2 - centre) ** rho)[..., None]

    return DriftSpec(2, 1, (None, f2), abs(eps) * 2.0, True, f"level2({eps:g})")
