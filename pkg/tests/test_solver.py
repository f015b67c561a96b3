import re

import numpy as np
import pytest

from kolmo.catalogue import desk_drift
from kolmo.errors import AssumptionError, DomainError, InputError
from kolmo.flow import DriftSpec
from kolmo.ou import ChainMatrix
from kolmo.solver import (ProblemData, TestFunction as Bump, change_of_freezing_check, check_standing_assumptions,
                          mollify, mollify_callable, pde_residual, picard_solve, proxy_solution, remainder,
                          scale_problem, schauder_ratio, time_chain_solve, weak_residual)
from kolmo.spacegrid import SpaceGrid
from kolmo.stable import LevyModel, SphericalMeasure

A2 = ChainMatrix.scalar_chain(2)
MODEL = LevyModel(1.5, SphericalMeasure.canonical(1))
GRID = SpaceGrid.box([12.0, 12.0], 32)


def gauss(x):
    return np.exp(-np.sum(np.asarray(x) ** 2, axis=-1) / 4.0)


def problem(drift=None, g=gauss, f=None, T=0.5):
    return ProblemData(A2, MODEL, 0.4, T, drift or DriftSpec.zero(2, 1), g, f)


@pytest.mark.parametrize("alpha, beta, n, needle", [
    (2.0, 0.4, 2, "0 < alpha < 2"),
    (1.5, 1.0, 2, "0 < beta < 1"),
    (1.7, 0.5, 2, "1 < alpha + beta < 2"),
    (0.9, 0.95, 2, "beta < alpha"),
    (0.6, 0.3, 2, "1 < alpha + beta"),
    (0.8, 0.3, 3, "1 - alpha <"),
])
def test_standing_assumptions_named(alpha, beta, n, needle):
    with pytest.raises(AssumptionError, match=re.escape(needle)):
        check_standing_assumptions(alpha, beta, n)


def test_standing_assumptions_accept():
    check_standing_assumptions(1.5, 0.4, 2)
    check_standing_assumptions(0.95, 0.3, 2)


def test_zero_drift_single_iteration():
    p = problem()
    sol = picard_solve(p, GRID, 8)
    ref = proxy_solution(p, GRID, 8)
    assert sol.iteration == 1
    np.testing.assert_array_equal(sol.values, ref.values)


def test_constant_terminal_is_preserved():
    p = problem(drift=desk_drift(0.1), g=lambda x: np.full(np.shape(x)[:-1], 0.7))
    sol = picard_solve(p, GRID, 8)
    np.testing.assert_allclose(sol.values, 0.7, atol=1e-12)


def test_terminal_slice_matches_data():
    p = problem(drift=desk_drift(0.1))
    sol = picard_solve(p, GRID, 8)
    np.testing.assert_allclose(sol.values[-1], gauss(GRID.mesh()))
    assert sol.times[0] == 0.0 and sol.times[-1] == p.T


def test_picard_contracts():
    sol = picard_solve(problem(drift=desk_drift(0.2)), GRID, 8)
    assert sol.history[-1] < 1e-9
    assert 0 < sol.contraction < 0.5


def test_remainder_constant_drift_vanishes():
    p = problem(drift=DriftSpec.constant_chain(2, 1, [0.3, 0.1]))
    sol = picard_solve(p, GRID, 8)
    r = remainder(sol, p, 0.0, [0.2, 0.1], 0.25, np.array([[0.5, -0.3], [1.0, 1.0]]))
    np.testing.assert_allclose(r, 0.0, atol=1e-14)


def test_remainder_at_the_flow_point_vanishes():
    p = problem(drift=desk_drift(0.2))
    sol = proxy_solution(p, GRID, 8)
    from kolmo.flow import integrate_flow
    theta = integrate_flow(0.0, np.array([0.3, 0.1]), p.drift, A2, 0.25, 256).states[-1]
    assert abs(remainder(sol, p, 0.0, [0.3, 0.1], 0.25, theta[None, :])[0]) < 1e-12


@pytest.mark.parametrize("lam", [1.0, 0.5, 0.1])
def test_scaling_keeps_the_chain(lam):
    sp = scale_problem(problem(drift=desk_drift(0.2)), lam)
    assert sp.A_defect < 1e-12
    assert sp.problem.T == pytest.approx(0.5 / lam)
    assert np.all(sp.level_exponents > 0)


def test_scaling_identity():
    p = problem(drift=desk_drift(0.2))
    sp = scale_problem(p, 1.0)
    x = np.array([[0.4, -1.2], [2.0, 0.3]])
    np.testing.assert_allclose(sp.problem.g(x), p.g(x))
    np.testing.assert_allclose(sp.problem.drift(0.1, x), p.drift(0.1, x))


@pytest.mark.parametrize("lam", [0.0, 1.5])
def test_scaling_domain(lam):
    with pytest.raises(DomainError):
        scale_problem(problem(), lam)


def test_time_chain_single_piece_equals_picard():
    p = problem(drift=desk_drift(0.2))
    a = time_chain_solve(p, p.T, p.T, GRID, 8)
    b = picard_solve(p, GRID, 8, auto_scale=False)
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_time_chain_junctions():
    p = problem(drift=desk_drift(0.2))
    sol = time_chain_solve(p, p.T, p.T / 2, GRID, 8)
    assert len(sol.times) == 17 and np.all(np.diff(sol.times) > 0)
    single = time_chain_solve(p, p.T, p.T, GRID, 16)
    assert np.max(np.abs(sol.values[0] - single.values[0])) < 1e-3


def test_pde_residual_of_constant():
    p = problem(g=lambda x: np.ones(np.shape(x)[:-1]))
    sol = proxy_solution(p, GRID, 8)
    rep = pde_residual(sol, p, [(4, [0.0, 0.0]), (2, [1.0, -1.0])])
    assert rep.max_residual < 1e-10


def test_pde_residual_rejects_boundary_index():
    p = problem()
    sol = proxy_solution(p, GRID, 8)
    with pytest.raises(InputError):
        pde_residual(sol, p, [(0, [0.0, 0.0])])


def test_weak_residual_zero_field():
    p = problem(g=lambda x: np.zeros(np.shape(x)[:-1]))
    sol = proxy_solution(p, GRID, 8)
    rep = weak_residual(sol, p, [Bump((0.0, 0.0), 3.0, p.T)])
    assert rep.defects[0] == 0.0 and rep.worst_ratio == 0.0


def test_test_function_profile():
    tf = Bump((0.0, 0.0), 2.0, 1.0)
    assert tf.eta(np.array([0.0]))[0] == 0.0 and tf.eta(np.array([1.0]))[0] == pytest.approx(1.0)
    assert tf.chi(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)
    assert tf.chi(np.array([[2.0, 0.0]]))[0] == 0.0


def test_schauder_zero_data():
    p = problem(g=lambda x: np.zeros(np.shape(x)[:-1]))
    sol = proxy_solution(p, GRID, 8)
    assert schauder_ratio(sol, p, pair_budget=64).ratio == 0.0


def test_mollify_constant_and_domain():
    vals = np.full(GRID.points, 2.5)
    np.testing.assert_allclose(mollify(vals, 1.0, GRID), 2.5)
    with pytest.raises(DomainError):
        mollify(vals, 13.0, GRID)
    with pytest.raises(DomainError):
        mollify(vals, 0.0, GRID)


def test_mollify_preserves_affine():
    fn = mollify_callable(lambda x: 3 * x[..., 0] - x[..., 1] + 1, 0.3, 2)
    x = np.array([[0.2, 0.7], [-1.0, 2.0]])
    np.testing.assert_allclose(fn(x), 3 * x[:, 0] - x[:, 1] + 1, atol=1e-12)


@pytest.mark.parametrize("f, rate", [(lambda x: np.cos(x[..., 0]), 2.0),
                                     (lambda x: np.abs(x[..., 0]) ** 0.4, 0.4)])
def test_mollify_convergence_rate(f, rate):
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    x = np.zeros((1, 1))
    err = [abs(float(mollify_callable(f, e, 1, n=64)(x)[0]) - float(f(x)[0])) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert slope == pytest.approx(rate, abs=0.1)
    assert np.all(np.diff(err) < 0)


def test_mollified_drift_constant_levels():
    drift = DriftSpec.constant_chain(2, 1, [0.3, -0.1])
    sm = mollify(drift, 0.2)
    np.testing.assert_allclose(sm(0.0, np.zeros((1, 2))), [[0.3, -0.1]], atol=1e-12)


def test_change_of_freezing_same_point():
    p = problem(drift=desk_drift(0.2))
    sol = picard_solve(p, GRID, 8)
    rep = change_of_freezing_check(sol, p, 0.0, [0.2, 0.1], [0.2, 0.1])
    assert rep.defect < 1e-12 and rep.terms["switch"] == 0.0


def test_change_of_freezing_zero_drift():
    p = problem()
    sol = picard_solve(p, GRID, 8)
    rep = change_of_freezing_check(sol, p, 0.0, [0.2, 0.1], [0.3, 0.15])
    assert rep.defect < 1e-6
    # different interpolation paths on a coarse grid
    assert rep.single == pytest.approx(rep.field_value, abs=1e-3)


def test_change_of_freezing_refines():
    p = problem(drift=desk_drift(0.3))
    sol = picard_solve(p, GRID, 8)
    coarse = change_of_freezing_check(sol, p, 0.0, [0.2, 0.1], [0.35, 0.2], n_nodes=5)
    fine = change_of_freezing_check(sol, p, 0.0, [0.2, 0.1], [0.35, 0.2], n_nodes=17)
    assert fine.defect <= 0.5 * coarse.defect or fine.defect < 1e-10
