"""Property suites on the desk chain (n = 2, d = 1, alpha = 1.5, beta = 0.4, T = 1).

Every suite returns a :class:`SuiteResult` whose table is plain CSV and whose
``passed`` flag applies the suite's tolerance. Suites are deterministic for a
fixed seed.
"""
from __future__ import annotations

import functools
import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import loglog_slope
from .besov import (control_series, first_besov_control, first_control_exponent,
                    second_besov_control, second_control_exponent)
from .catalogue import cos_mode, desk_drift, desk_level2_drift, torus_frequency
from .errors import ContractionError, InputError
from .flow import DriftSpec, flow_sensitivity_report, frozen_smoothing_moment, shift_and_flow_batch
from .gridio import format_table
from .metric import MetricParams, aniso_distance, holder_norm_estimate, sample_pairs
from .montecarlo import feynman_kac, probe_seeds
from .ou import ChainMatrix, OUDensity, ScaleOps, check_scaling_lemma, ou_characteristic_function, resolvent
from .solver import (ProblemData, TestFunction, picard_solve, proxy_solution, scale_problem, scaled_grid,
                     schauder_ratio, schauder_ratio_with_noise, weak_residual, wrap_error_bound)
from .spacegrid import SpaceGrid
from .stable import GridSpec, LevyModel, SphericalMeasure, heat_kernel_grid, smoothing_moment, stable_density_grid


@dataclass(frozen=True)
class Desk:
    """Default chain and horizon used by the suites."""

    n: int = 2
    d: int = 1
    alpha: float = 1.5
    beta: float = 0.4
    T: float = 1.0

    @property
    def A(self) -> ChainMatrix:
        return ChainMatrix.scalar_chain(self.n)

    @property
    def model(self) -> LevyModel:
        return LevyModel(self.alpha, SphericalMeasure.canonical(self.d))

    @property
    def params(self) -> MetricParams:
        return MetricParams(self.n, self.d, self.alpha, self.beta)

    def key(self) -> str:
        return f"n={self.n};d={self.d};alpha={self.alpha!r};beta={self.beta!r};T={self.T!r}"


DESK = Desk()


@functools.lru_cache(maxsize=4)
def desk_ou(desk: Desk = DESK) -> OUDensity:
    return OUDensity(desk.A, desk.model)


@dataclass
class SuiteResult:
    name: str
    header: tuple
    rows: list
    passed: bool
    summary: str
    extra: dict = field(default_factory=dict)

    def csv(self, config_hash=None) -> str:
        return format_table(self.header, self.rows, config_hash)

    def digest(self) -> str:
        return hashlib.sha256(self.csv().encode()).hexdigest()


def _gauss(x):
    return np.exp(-np.sum(np.asarray(x, dtype=float) ** 2, axis=-1) / 4.0)


def _source(t, x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.cos(x[..., 0]) * np.exp(-np.sum(x * x, axis=-1) / 8.0)


def desk_problem(eps: float = 0.5, desk: Desk = DESK, with_source: bool = True) -> ProblemData:
    drift = desk_drift(eps, desk.alpha, desk.beta) if eps else DriftSpec.zero(desk.n, desk.d)
    return ProblemData(desk.A, desk.model, desk.beta, desk.T, drift, _gauss,
                       _source if with_source else None, f"desk({eps:g})")


@functools.lru_cache(maxsize=8)
def desk_solution(eps: float = 0.5, half_width: float = 16.0, points: int = 128, n_time: int = 32):
    prob = desk_problem(eps)
    grid = SpaceGrid.box([half_width] * 2, points)
    return prob, picard_solve(prob, grid, n_time, tol=1e-10, ou=desk_ou())


# -- 1 ---------------------------------------------------------------------------


def suite_self_similarity(seed: int = 0, times=(0.25, 0.5, 1.0), points: int = 512,
                          half_width: float = 20.48, tol: float = 1e-6) -> SuiteResult:
    """``p_S(t, y) = t^{-nd/alpha} p_S(1, t^{-1/alpha} y)`` on shared lattice points."""
    desk = DESK
    proj = desk_ou().proj_model
    nd = desk.n * desk.d
    unit_grid = GridSpec.cube(nd, points, half_width)
    unit = stable_density_grid(proj, 1.0, unit_grid).values
    rows = []
    worst = 0.0
    for t in times:
        grid_t = unit_grid.scaled(t ** (1.0 / desk.alpha))
        pt = stable_density_grid(proj, t, grid_t).values
        ref = t ** (-nd / desk.alpha) * unit
        keep = ref > 1e-8 * ref.max()
        err = float(np.max(np.abs(pt[keep] - ref[keep]) / ref[keep]))
        worst = max(worst, err)
        rows.append((t, err))
    return SuiteResult("self-similarity", ("t", "max_rel_error"), rows, worst < tol,
                       f"max relative error {worst:.3e} (tol {tol:g})")


# -- 2 ---------------------------------------------------------------------------


def suite_scaling_lemma(seed: int = 0, n_probes: int = 10, tol: float = 1e-3,
                        fd_step: float = 3e-4) -> SuiteResult:
    """Finite-difference residuals of the scaling identity for ``p^{ou}``."""
    desk = DESK
    ou = desk_ou()
    rng = np.random.default_rng(seed)
    rows = []
    worst = np.zeros(desk.n)
    for k in range(n_probes):
        t = float(rng.uniform(0.3, 1.0))
        x = rng.uniform(-1.0, 1.0, (1, desk.n * desk.d))
        w = rng.uniform(-1.0, 1.0, (1, desk.n * desk.d))
        y = x @ resolvent(desk.A, t).T - w * ou.scale.T_diag(t)
        rep = check_scaling_lemma(ou, t, x, y, fd_step)
        worst = np.maximum(worst, rep.residuals)
        rows.append((k, t) + tuple(float(r) for r in rep.residuals))
    header = ("probe", "t") + tuple(f"level{i + 1}" for i in range(desk.n))
    return SuiteResult("scaling-lemma", header, rows, bool(np.all(worst < tol)),
                       "per-level max residual " + ", ".join(f"{r:.2e}" for r in worst))


# -- 3 ---------------------------------------------------------------------------


def _slope(times, vals):
    return loglog_slope(np.asarray(times), np.asarray(vals)).slope


def suite_smoothing(seed: int = 0, tol: float = 0.07, heat_tol: float = 0.05) -> SuiteResult:
    """Log-log slopes of weighted derivative moments of the stable, frozen and heat kernels."""
    desk = DESK
    a = desk.alpha
    ou = desk_ou()
    proj = ou.proj_model
    nd = desk.n * desk.d
    times = np.geomspace(0.1, 1.0, 6)
    base = GridSpec.cube(nd, 512, 20.48)
    rows, ok = [], True
    for gamma in (0.2, 0.8):
        for l in (0, 1):
            vals = []
            for t in times:
                g = base.scaled(t ** (1.0 / a))
                if l == 0:
                    vals.append(smoothing_moment(stable_density_grid(proj, t, g), gamma, alpha=a))
                else:
                    comps = [stable_density_grid(proj, t, g, derivative=tuple(int(i == k) for i in range(nd)))
                             for k in range(nd)]
                    vals.append(smoothing_moment(comps[0], gamma, l, alpha=a, components=comps))
            slope, target = _slope(times, vals), (gamma - l) / a
            ok &= abs(slope - target) <= tol
            rows.append(("stable", gamma, l, slope, target))
    a_k = a / (1.0 + a * np.arange(desk.n))
    for gamma in (0.2, 0.8):
        for l in (0, 1):
            x_order = (0,) * l
            vals = [frozen_smoothing_moment(ou, t, gamma, x_order=x_order) for t in times]
            slope = _slope(times, vals)
            target = gamma / a - l / a_k[0]
            ok &= abs(slope - target) <= tol
            rows.append(("frozen", gamma, l, slope, target))
    vs = np.geomspace(0.05, 1.0, 6)
    hbase = GridSpec.cube(1, 4096, 400.0)
    for gamma in (0.5, 1.0, 2.0):
        for l in (1, 2):
            vals = [smoothing_moment(heat_kernel_grid(a, 1, v, hbase.scaled(v ** (1.0 / a)), derivative=(l,),
                                                      time_derivative=True), gamma)
                    for v in vs]
            slope, target = _slope(vs, vals), (gamma - l) / a - 1.0
            ok &= abs(slope - target) <= heat_tol
            rows.append(("heat", gamma, l, slope, target))
    worst = max(abs(r[3] - r[4]) for r in rows)
    return SuiteResult("smoothing", ("kernel", "gamma", "l", "slope", "target"), rows, bool(ok),
                       f"largest slope deviation {worst:.3e}")


# -- 4 ---------------------------------------------------------------------------


def suite_identification(seed: int = 0, n_probes: int = 20, tol: float = 1e-6,
                         n_steps: int = 65536) -> SuiteResult:
    """Frozen shift at the freezing point against the flow, on a shared step grid.

    The desk drift is only Hoelder, so both the RK4 flow and the Simpson
    forcing quadrature converge at a Hoelder-limited rate near the kinks; ``n_steps`` is sized for
    the tolerance.
    """
    desk = DESK
    drift = desk_drift(1.0, desk.alpha, desk.beta)
    rng = np.random.default_rng(seed)
    ts, ss, xs = [], [], []
    for _ in range(n_probes):
        t = float(rng.uniform(0.0, 0.5))
        ts.append(t)
        ss.append(float(rng.uniform(t + 0.05, desk.T)))
        xs.append(rng.uniform(-1.5, 1.5, desk.n * desk.d))
    shift, flow = shift_and_flow_batch(ts, xs, ss, drift, desk.A, n_steps)
    gaps = np.max(np.abs(shift - flow), axis=1)
    rows = [(k, ts[k], ss[k], float(gaps[k])) for k in range(n_probes)]
    worst = float(gaps.max())
    return SuiteResult("identification", ("probe", "t", "s", "discrepancy"), rows, worst < tol,
                       f"sup discrepancy {worst:.3e}")


# -- 5 ---------------------------------------------------------------------------


def suite_ou_closed_form(seed: int = 0, tol: float = 1e-4, points: int = 128, n_time: int = 16) -> SuiteResult:
    """Proxy solution with a Fourier terminal value against the characteristic function."""
    desk = DESK
    grid = SpaceGrid.box([16.0, 16.0], points)
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for modes in ((3, 1), (2, -2)):
        p = torus_frequency(grid, modes)
        prob = ProblemData(desk.A, desk.model, desk.beta, desk.T, DriftSpec.zero(desk.n, desk.d), cos_mode(p))
        fld = proxy_solution(prob, grid, n_time, ou=desk_ou())
        for k in (0, n_time // 2, n_time - 1):
            for x in rng.uniform(-6.0, 6.0, (4, 2)):
                tau = desk.T - fld.times[k]
                ref = float(ou_characteristic_function(p, tau, x, desk.A, desk.model).real[0])
                err = abs(float(fld.at(fld.times[k], x[None])[0]) - ref)
                worst = max(worst, err)
                rows.append((modes[0], modes[1], fld.times[k], x[0], x[1], err))
    return SuiteResult("ou-closed-form", ("k1", "k2", "t", "x1", "x2", "abs_error"), rows, worst < tol,
                       f"sup error {worst:.3e}")


# -- 6 ---------------------------------------------------------------------------


def suite_feynman_kac(seed: int = 0, n_paths: int = 100_000, n_probes: int = 10, n_steps: int = 200,
                      eps_values=(0.0, 0.5)) -> SuiteResult:
    """Picard solution against Monte Carlo at probe points (zero and Hoelder drift)."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.5, 1.5, (n_probes, 2))
    seeds = probe_seeds(seed, n_probes)
    rows, ok, worst = [], True, 0.0
    for eps in eps_values:
        prob, fld = desk_solution(eps)
        for x, s in zip(xs, seeds):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = feynman_kac(prob, 0.0, x, n_paths, n_steps, seed=s)
            u = float(fld.at(0.0, x[None])[0])
            z = (u - est.value) / est.std_error
            worst = max(worst, abs(z))
            ok &= abs(z) < 3.0
            rows.append((eps, x[0], x[1], u, est.value, est.std_error, z))
    return SuiteResult("feynman-kac", ("eps", "x1", "x2", "solver", "mc", "std_error", "z"), rows, bool(ok),
                       f"largest |z| {worst:.2f} (limit 3)")


# -- 7 ---------------------------------------------------------------------------


def suite_besov(seed: int = 0, tol: float = 0.1, lags=None) -> SuiteResult:
    """Slopes of the first and second controls, plus the constant and linearity checks."""
    desk = DESK
    ou = desk_ou()
    lags = np.geomspace(0.1, 0.6, 5) if lags is None else np.asarray(lags)
    rows, ok = [], True
    for l in (0, 1):
        target = first_control_exponent(desk.alpha, desk.beta, 2, l)
        ser = control_series(lambda **kw: first_besov_control(ou, l=l, beta=desk.beta, **kw), lags, target)
        ok &= abs(ser.slope - target) <= tol
        rows.append((f"first_l{l}", ser.slope, target, abs(ser.slope - target) <= tol))
    drift = desk_level2_drift(1.0, desk.alpha, desk.beta)
    x = np.array([0.0, -0.2])
    target = second_control_exponent(desk.alpha, desk.beta, (0, 0))
    ser = control_series(lambda **kw: second_besov_control(ou, drift, x=x, beta=desk.beta, **kw), lags, target)
    ok &= abs(ser.slope - target) <= tol
    rows.append(("second", ser.slope, target, abs(ser.slope - target) <= tol))
    const = DriftSpec.constant_chain(2, 1, [0.0, 0.7])
    c_val = second_besov_control(ou, const, 0.0, 0.3, x, beta=desk.beta).total
    ok &= c_val == 0.0
    rows.append(("second_constant_drift", c_val, 0.0, c_val == 0.0))
    v1 = second_besov_control(ou, drift, 0.0, 0.3, x, beta=desk.beta).total
    v2 = second_besov_control(ou, drift.scaled(2.0), 0.0, 0.3, x, beta=desk.beta).total
    lin = abs(v2 - 2.0 * v1)
    ok &= lin <= 1e-8
    rows.append(("second_linearity", lin, 0.0, lin <= 1e-8))
    rows = [(r[0], float(r[1]), float(r[2]), int(bool(r[3]))) for r in rows]
    return SuiteResult("besov", ("check", "measured", "target", "pass"), rows, bool(ok),
                       "; ".join(f"{r[0]}={r[1]:.4g}" for r in rows))


# -- 8 ---------------------------------------------------------------------------


def suite_contraction(seed: int = 0, eps_values=(0.05, 0.1, 0.2), huge: float = 1000.0,
                      tol: float = 0.2) -> SuiteResult:
    """Picard contraction ratios against drift amplitude, and the divergence detector."""
    desk = DESK
    grid = SpaceGrid.box([8.0, 8.0], 64)
    rows, ratios = [], []
    for eps in eps_values:
        prob = desk_problem(eps)
        fld = picard_solve(prob, grid, 16, max_iters=3, tol=0.0, auto_scale=False, ou=desk_ou())
        ratios.append(fld.factors[0])
        rows.append(("ratio", eps, fld.factors[0]))
    ok = True
    for k in range(1, len(ratios)):
        growth = ratios[k] / ratios[k - 1]
        expect = eps_values[k] / eps_values[k - 1]
        ok &= abs(growth / expect - 1.0) <= tol
        rows.append(("growth", eps_values[k], growth / expect))
    fired = False
    try:
        picard_solve(desk_problem(huge), grid, 16, max_iters=12, tol=0.0, auto_scale=False, ou=desk_ou())
    except ContractionError as exc:
        fired = True
        rows.append(("divergence_factor", huge, float(exc.factor)))
    rows.append(("divergence_fired", huge, float(fired)))
    ok &= fired
    return SuiteResult("contraction", ("kind", "eps", "value"), rows, bool(ok),
                       "ratios " + ", ".join(f"{r:.4g}" for r in ratios) + f"; detector fired={fired}")


# -- 9 ---------------------------------------------------------------------------


def suite_schauder(seed: int = 0, lam: float = 0.5) -> SuiteResult:
    """Schauder ratio: finiteness, refinement stability and invariance under the scaling map."""
    desk = DESK
    prob = desk_problem(0.5)
    box = (np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
    rows, ok = [], True
    ratios = []
    for pts, nt in ((64, 16), (128, 32)):
        grid = SpaceGrid.box([8.0, 8.0], pts)
        fld = picard_solve(prob, grid, nt, tol=1e-10, ou=desk_ou())
        rep = schauder_ratio_with_noise(fld, prob, seeds=(seed, seed + 1), box=box)
        ratios.append(rep.ratio)
        rows.append(("ratio", pts, rep.ratio, rep.noise))
        ok &= bool(np.isfinite(rep.ratio)) and rep.ratio > 0
    change = max(ratios) / min(ratios)
    ok &= change < 2.0
    rows.append(("refinement_change", 0, change, 0.0))
    # scaling map on the coarse resolution
    grid = SpaceGrid.box([8.0, 8.0], 64)
    fld = picard_solve(prob, grid, 16, tol=1e-10, ou=desk_ou())
    sp = scale_problem(prob, lam)
    fs = picard_solve(sp.problem, scaled_grid(grid, desk.A, desk.alpha, lam), 16, tol=1e-10, ou=desk_ou())
    Td = ScaleOps(desk.n, desk.d, desk.alpha).T_diag(lam)
    r0 = schauder_ratio(fld, prob, box=box, part="seminorm", seed=seed)
    r1 = schauder_ratio(fs, sp.problem, box=box, part="seminorm", seed=seed, diag_scale=Td)
    noise = schauder_ratio_with_noise(fld, prob, seeds=(seed, seed + 1), box=box, part="seminorm").noise
    gap = abs(r1.ratio - r0.ratio)
    ok &= gap <= max(noise, 1e-12)
    rows.append(("scaled_seminorm_gap", 0, gap, noise))
    ok &= sp.A_defect == 0.0
    rows.append(("A_defect", 0, sp.A_defect, 0.0))
    # per-level drift seminorms on mapped samples
    params = desk.params
    pairs = sample_pairs(params, box[0], box[1], 256, seed=seed)
    mapped = pairs.mapped(Td, 1.0 / Td[0])
    F0 = lambda x: prob.drift.level(0, 0.0, x)[..., 0]  # noqa: E731
    F1 = lambda x: sp.problem.drift.level(0, 0.0, x)[..., 0]  # noqa: E731
    e0 = holder_norm_estimate(F0, desk.beta, params, pairs)
    e1 = holder_norm_estimate(F1, desk.beta, params, mapped)
    for i in range(desk.n):
        pred = lam ** sp.level_exponents[0] * e0.seminorms[i]
        rel = abs(e1.seminorms[i] - pred) / max(abs(pred), 1e-300)
        ok &= rel < 1e-10
        rows.append((f"level1_drift_seminorm_x{i + 1}", 0, rel, sp.level_exponents[0]))
    return SuiteResult("schauder", ("check", "points", "value", "aux"), rows, bool(ok),
                       f"ratios {ratios[0]:.4g}, {ratios[1]:.4g}; scaled gap {gap:.2e} (noise {noise:.2e})")


# -- 10 --------------------------------------------------------------------------


def suite_sensitivity(seed: int = 0, n_pairs: int = 200, t: float = 0.0, s: float = 0.5) -> SuiteResult:
    """Flow and frozen-shift sensitivity ratios under ODE step halving."""
    desk = DESK
    params = desk.params
    drift = desk_drift(1.0, desk.alpha, desk.beta)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, (n_pairs, 2))
    xp = x + rng.uniform(-0.5, 0.5, (n_pairs, 2)) * np.array([1.0, 0.25])
    dist = aniso_distance(x, xp, params)
    keep = dist <= 1.0
    x, xp = x[keep], xp[keep]
    reps = [flow_sensitivity_report(drift, desk.A, desk.alpha, desk.beta, x, xp, t, s, n_steps=n)
            for n in (64, 128)]
    rows, ok = [], True
    for key in ("flow", "mean", "freeze"):
        a, b = reps[0].summary()[key], reps[1].summary()[key]
        finite = bool(np.all(np.isfinite(getattr(reps[1], f"{key}_ratio"))))
        change = max(a, b) / min(a, b) if min(a, b) > 0 else (1.0 if a == b else np.inf)
        ok &= finite and change < 2.0
        rows.append((key, a, b, change))
    return SuiteResult("sensitivity", ("ratio", "max_64_steps", "max_128_steps", "change"), rows, bool(ok),
                       f"{int(keep.sum())} pairs; " + ", ".join(f"{r[0]} x{r[3]:.4f}" for r in rows))


# -- 11 --------------------------------------------------------------------------


def suite_weak(seed: int = 0, n_tests: int = 5, radius: float = 3.0, factor: float = 5.0) -> SuiteResult:
    """Weak-formulation defect of the converged desk field against bump test functions."""
    prob, fld = desk_solution(0.5)
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-2.0, 2.0, (n_tests, 2))
    tests = [TestFunction(tuple(c), radius, prob.T) for c in centres]
    f_sup = float(np.max(np.abs(prob.source(0.0, fld.grid.mesh()))))
    field_error = wrap_error_bound(prob, fld.grid, f_sup=f_sup) + (fld.history[-1] if fld.history else 0.0)
    rep = weak_residual(fld, prob, tests, field_error=field_error)
    ok = bool(np.all(rep.defects < factor * rep.budgets))
    rows = [(c[0], c[1], d, b) for c, d, b in zip(centres, rep.defects, rep.budgets)]
    return SuiteResult("weak", ("c1", "c2", "defect", "budget"), rows, ok,
                       f"worst defect/budget {rep.worst_ratio:.3f} (limit {factor:g})")


# -- 12 --------------------------------------------------------------------------


def suite_determinism(seed: int = 0) -> SuiteResult:
    """Repeat cheap suites and a small Monte Carlo run; compare byte digests."""
    rows, ok = [], True
    cheap = {"identification": dict(n_probes=4, n_steps=4096)}
    for fn in (suite_self_similarity, suite_identification, suite_sensitivity, suite_scaling_lemma):
        kw = cheap.get(fn.__name__.replace("suite_", ""), {})
        a, b = fn(seed=seed, **kw).digest(), fn(seed=seed, **kw).digest()
        ok &= a == b
        rows.append((fn.__name__.replace("suite_", ""), a[:16], int(a == b)))
    prob = desk_problem(0.5)
    e1 = feynman_kac(prob, 0.0, [0.1, 0.2], 2000, 32, seed=seed)
    e2 = feynman_kac(prob, 0.0, [0.1, 0.2], 2000, 32, seed=seed)
    same = e1.value == e2.value and e1.std_error == e2.std_error
    ok &= same
    rows.append(("monte-carlo", repr(e1.value), int(same)))
    return SuiteResult("determinism", ("suite", "digest", "identical"), rows, bool(ok),
                       f"{sum(r[2] for r in rows)}/{len(rows)} identical")


SUITES = {
    "self-similarity": suite_self_similarity,
    "scaling-lemma": suite_scaling_lemma,
    "smoothing": suite_smoothing,
    "identification": suite_identification,
    "ou-closed-form": suite_ou_closed_form,
    "feynman-kac": suite_feynman_kac,
    "besov": suite_besov,
    "contraction": suite_contraction,
    "schauder": suite_schauder,
    "sensitivity": suite_sensitivity,
    "weak": suite_weak,
    "determinism": suite_determinism,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise InputError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](seed=seed)
