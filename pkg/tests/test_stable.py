import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from kolmo.errors import DegeneracyError, DomainError, InputError, ResolutionError
from kolmo.stable import (GridSpec, LevyModel, SphericalMeasure, heat_kernel_grid, levy_symbol,
                          nondegeneracy_ratio, sample_stable, smoothing_moment, stable_density_grid)

alphas = st.floats(0.3, 1.95)
coords = st.floats(-50, 50)


# -- measures ------------------------------------------------------------------


def test_measure_rejects_non_unit_directions():
    with pytest.raises(InputError):
        SphericalMeasure(1, np.array([[2.0], [-2.0]]), np.array([0.5, 0.5]))


def test_measure_rejects_asymmetric_atoms():
    with pytest.raises(InputError):
        SphericalMeasure(2, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.5, 0.5]))


def test_measure_rejects_zero_mass():
    with pytest.raises(DegeneracyError):
        SphericalMeasure(1, np.array([[1.0], [-1.0]]), np.array([0.0, 0.0]))


def test_from_atoms_symmetrizes():
    m = SphericalMeasure.from_atoms([[1.0, 0.0]], [1.0])
    assert m.total_mass == pytest.approx(1.0)
    assert {tuple(d) for d in m.directions} == {(1.0, 0.0), (-1.0, 0.0)}


# -- symbol --------------------------------------------------------------------


@given(alphas, coords, coords)
def test_canonical_symbol_is_coordinate_sum(alpha, a, b):
    model = LevyModel(alpha, SphericalMeasure.canonical(2))
    val = levy_symbol(np.array([a, b]), model)
    assert val == pytest.approx(-(abs(a) ** alpha + abs(b) ** alpha), rel=1e-12, abs=1e-300)


def test_symbol_vanishes_at_origin():
    model = LevyModel(1.2, SphericalMeasure.uniform(2, 1.0, 64))
    assert levy_symbol(np.zeros(2), model) == 0.0


def test_uniform_symbol_matches_dense_quadrature():
    # oracle: 10^5-node midpoint rule, cross-checked with adaptive quadrature
    m = 100_000
    th = (np.arange(m) + 0.5) * 2 * np.pi / m
    dense = -np.mean(np.abs(np.cos(th)) ** 1.5)
    adaptive = -integrate.quad(lambda x: abs(math.cos(x)) ** 1.5, 0, 2 * np.pi, points=[np.pi / 2, 3 * np.pi / 2],
                               limit=200)[0] / (2 * np.pi)
    assert dense == pytest.approx(adaptive, rel=1e-8)
    model = LevyModel(1.5, SphericalMeasure.uniform(2, 1.0, 64))
    assert levy_symbol(np.array([1.0, 0.0]), model) == pytest.approx(dense, rel=1e-4)


def test_symbol_rejects_nonfinite():
    model = LevyModel(1.5, SphericalMeasure.canonical(1))
    with pytest.raises(InputError):
        levy_symbol(np.array([np.nan]), model)


@given(alphas, st.floats(0.01, 100), st.floats(-5, 5), st.floats(-5, 5))
def test_symbol_homogeneity(alpha, lam, a, b):
    p = np.array([a, b])
    exact = LevyModel(alpha, SphericalMeasure.canonical(2))
    assert levy_symbol(lam * p, exact) == pytest.approx(lam ** alpha * levy_symbol(p, exact), rel=1e-12, abs=1e-300)
    # design directions: p.s may cancel to rounding level, amplified by |.|^alpha
    design = LevyModel(alpha, SphericalMeasure.uniform(2, 1.0, 32))
    scale = max(lam, 1.0) ** alpha * (1.0 + abs(a) + abs(b)) ** alpha
    assert levy_symbol(lam * p, design) == pytest.approx(lam ** alpha * levy_symbol(p, design), rel=1e-10,
                                                         abs=1e-7 * scale)


# -- nondegeneracy ---------------------------------------------------------------


def test_single_axis_measure_is_degenerate():
    mu = SphericalMeasure(2, np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.5, 0.5]))
    rep = nondegeneracy_ratio(LevyModel(1.5, mu), 256)
    assert rep.eta_low == 0.0
    assert not rep.nondegenerate


def test_canonical_bracket_matches_brute_force():
    th = np.linspace(0, 2 * np.pi, 100_000, endpoint=False)
    vals = np.abs(np.cos(th)) + np.abs(np.sin(th))  # alpha = 1, weights 1/2 on four atoms
    rep = nondegeneracy_ratio(LevyModel(1.0, SphericalMeasure.canonical(2)), 256)
    assert rep.eta_low == pytest.approx(vals.min(), abs=1e-3)
    assert rep.eta_high == pytest.approx(vals.max(), abs=1e-3)


def test_uniform_bracket_is_tight():
    rep = nondegeneracy_ratio(LevyModel(1.3, SphericalMeasure.uniform(2, 1.0, 64)), 128)
    assert rep.eta_high / rep.eta_low - 1.0 < 1e-3


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_bracket_bounds_symbol(a, b):
    model = LevyModel(1.5, SphericalMeasure.canonical(2))
    rep = nondegeneracy_ratio(model, 512)
    p = np.array([a, b])
    r = np.linalg.norm(p) ** 1.5
    val = -levy_symbol(p, model)
    assert rep.eta_low * r * (1 - 1e-3) <= val + 1e-12
    assert val <= rep.eta_high * r * (1 + 1e-3) + 1e-12


def test_nondegeneracy_needs_enough_directions():
    with pytest.raises(InputError):
        nondegeneracy_ratio(LevyModel(1.5, SphericalMeasure.canonical(2)), 8)


# -- density grids ------------------------------------------------------------------


@pytest.fixture(scope="module")
def dens2():
    model = LevyModel(1.5, SphericalMeasure.uniform(2, 1.0, 16))
    return stable_density_grid(model, 0.5, GridSpec.cube(2, 256, 0.04 * 256 * 0.5 ** (1 / 1.5) * 2))


def test_density_mass(dens2):
    assert abs(dens2.mass_defect) < 1e-6
    assert np.all(dens2.values >= 0)


def test_density_even(dens2):
    v = dens2.values[1:, 1:]  # centred lattice: drop the unpaired first row/column
    np.testing.assert_allclose(v, v[::-1, ::-1], rtol=0, atol=1e-14 * v.max())


def test_self_similarity_small():
    model = LevyModel(1.5, SphericalMeasure.canonical(2))
    unit = GridSpec.cube(2, 256, 10.24)
    p1 = stable_density_grid(model, 1.0, unit).values
    t = 0.5
    pt = stable_density_grid(model, t, unit.scaled(t ** (1 / 1.5))).values
    ref = t ** (-2 / 1.5) * p1
    big = ref > 1e-6 * ref.max()
    assert np.max(np.abs(pt[big] - ref[big]) / ref[big]) < 1e-6


def test_coarse_grid_raises_resolution_error():
    model = LevyModel(1.5, SphericalMeasure.canonical(1))
    with pytest.raises(ResolutionError) as exc:
        stable_density_grid(model, 0.1, GridSpec.cube(1, 64, 20.0))
    assert exc.value.suggested_spacing is not None


def test_heat_kernel_mass_and_rotation():
    g = heat_kernel_grid(1.5, 2, 1.0, GridSpec.cube(2, 256, 20.48))
    assert abs(g.mass_defect) < 1e-6
    v = g.values
    c = 128  # index of the origin
    for a, b in [(3, 7), (10, 1), (20, 13)]:
        ring = [v[c + a, c + b], v[c + b, c + a], v[c - a, c + b], v[c + b, c - a], v[c - a, c - b]]
        assert np.ptp(ring) < 1e-8


def test_smoothing_moment_mass():
    model = LevyModel(1.5, SphericalMeasure.canonical(1))
    g = stable_density_grid(model, 1.0, GridSpec.cube(1, 4096, 0.08 * 2048))
    assert smoothing_moment(g, 0.0) == pytest.approx(1.0, abs=1e-6)


def test_smoothing_moment_domain():
    model = LevyModel(1.5, SphericalMeasure.canonical(1))
    g = stable_density_grid(model, 1.0, GridSpec.cube(1, 1024, 40.96))
    with pytest.raises(DomainError):
        smoothing_moment(g, 1.5, alpha=1.5)


# -- sampling -----------------------------------------------------------------------


def test_empirical_characteristic_function():
    model = LevyModel(1.5, SphericalMeasure.canonical(2))
    rng = np.random.default_rng(7)
    n = 1_000_000
    x = sample_stable(model, 0.7, rng, n)
    prng = np.random.default_rng(8)
    ps = prng.uniform(-2, 2, (20, 2))
    emp = np.array([np.mean(np.cos(x @ p)) for p in ps])  # law is symmetric
    exact = np.exp(0.7 * levy_symbol(ps, model))
    assert np.max(np.abs(emp - exact)) < 4 / np.sqrt(n)


def test_sample_scaling_in_time():
    model = LevyModel(1.5, SphericalMeasure.canonical(1))
    times = np.geomspace(1e-3, 1.0, 6)
    iqr = []
    for k, t in enumerate(times):
        x = sample_stable(model, t, np.random.default_rng(k), 200_000)[:, 0]
        q = np.quantile(x, [0.25, 0.75])
        iqr.append(q[1] - q[0])
    slope = np.polyfit(np.log(times), np.log(iqr), 1)[0]
    assert abs(slope - 1 / 1.5) < 0.05


def test_sample_sign_symmetry():
    model = LevyModel(1.2, SphericalMeasure.uniform(2, 1.0, 16))
    x = sample_stable(model, 1.0, np.random.default_rng(3), 100_000)
    stat = np.tanh(x)  # odd and bounded
    se = stat.std(axis=0) / np.sqrt(len(x))
    assert np.all(np.abs(stat.mean(axis=0)) < 4 * se)
