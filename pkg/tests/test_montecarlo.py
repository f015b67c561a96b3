import warnings

import numpy as np
import pytest

from kolmo.catalogue import desk_drift
from kolmo.errors import InputError
from kolmo.flow import DriftSpec, integrate_flow
from kolmo.montecarlo import feynman_kac, probe_seeds, simulate_chain
from kolmo.ou import ChainMatrix, ou_characteristic_function, resolvent
from kolmo.solver import ProblemData
from kolmo.stable import LevyModel, SphericalMeasure

A2 = ChainMatrix.scalar_chain(2)
MODEL = LevyModel(1.5, SphericalMeasure.canonical(1))
QUIET = LevyModel(1.5, SphericalMeasure.canonical(1, 1e-12))
P = np.array([0.7, -0.4])


def cosine(x):
    return np.cos(np.asarray(x) @ P)


def problem(model=MODEL, drift=None, g=cosine, f=None, T=1.0):
    return ProblemData(A2, model, 0.4, T, drift or DriftSpec.zero(2, 1), g, f)


def test_constant_payoff_has_zero_error():
    est = feynman_kac(problem(g=lambda x: np.full(np.shape(x)[:-1], 2.0)), 0.0, [0.1, 0.2], 1000, 16)
    assert est.value == 2.0 and est.std_error == 0.0 and est.excluded == 0.0


def test_running_source_integral():
    est = feynman_kac(problem(g=lambda x: np.zeros(np.shape(x)[:-1]),
                              f=lambda t, x: np.full(np.shape(x)[:-1], 3.0)), 0.25, [0.0, 0.0], 100, 16)
    assert est.value == pytest.approx(3.0 * 0.75, rel=1e-12)


def test_characteristic_function():
    n = 40_000
    x = np.array([0.3, -0.5])
    batch = simulate_chain(problem(), 0.0, x, n, 200, seed=3)
    emp = np.mean(np.exp(1j * batch.final @ P))
    exact = ou_characteristic_function(P, 1.0, x, A2, MODEL)[0]
    assert abs(emp - exact) < 4 / np.sqrt(n)


def test_noiseless_zero_drift_is_the_resolvent():
    x = np.array([0.4, -1.0])
    batch = simulate_chain(problem(model=QUIET), 0.0, x, 4, 16)
    np.testing.assert_allclose(batch.final, np.tile(resolvent(A2, 1.0) @ x, (4, 1)), atol=1e-5)


def _halving_errors(drift, steps=(16, 32, 64, 128)):
    prob = problem(model=QUIET, drift=drift)
    x = np.array([0.2, 0.1])
    ref = integrate_flow(0.0, x, drift, A2, 1.0, 4096).states[-1]
    return np.array([np.max(np.abs(simulate_chain(prob, 0.0, x, 2, k).final[0] - ref)) for k in steps])


def test_step_halving_first_order_for_smooth_drift():
    smooth = DriftSpec(2, 1, (lambda t, x: np.sin(x[..., :1] + x[..., 1:]), None))
    rates = -np.diff(np.log2(_halving_errors(smooth)))
    np.testing.assert_allclose(rates, 1.0, atol=0.05)


def test_step_halving_monotone_for_hoelder_drift():
    assert np.all(np.diff(_halving_errors(desk_drift(0.5))) < 0)


def test_seed_determinism():
    a = feynman_kac(problem(), 0.0, [0.1, 0.2], 500, 16, seed=9)
    b = feynman_kac(problem(), 0.0, [0.1, 0.2], 500, 16, seed=9)
    c = feynman_kac(problem(), 0.0, [0.1, 0.2], 500, 16, seed=10)
    assert a == b and a.value != c.value


def test_confidence_interval_coverage():
    x = np.array([0.3, 0.2])
    exact = ou_characteristic_function(P, 1.0, x, A2, MODEL)[0].real
    hits = 0
    reps = 200
    for s in probe_seeds(1, reps):
        est = feynman_kac(problem(), 0.0, x, 1000, 32, seed=s)
        hits += abs(est.value - exact) < 1.96 * est.std_error
    assert 0.90 <= hits / reps <= 0.99


def test_probe_seeds_distinct_and_reproducible():
    s = probe_seeds(5, 8)
    assert len(set(s)) == 8 and s == probe_seeds(5, 8)


@pytest.mark.parametrize("kw", [dict(n_paths=1, n_steps=32), dict(n_paths=10, n_steps=8)])
def test_sizes_validated(kw):
    with pytest.raises(InputError):
        simulate_chain(problem(), 0.0, [0.0, 0.0], **kw)


def test_start_time_validated():
    with pytest.raises(InputError):
        simulate_chain(problem(), 1.5, [0.0, 0.0], 10, 16)


def test_non_finite_paths_excluded_with_warning():
    bad = DriftSpec(2, 1, (lambda t, x: np.where(x[..., :1] > 0.5, np.nan, 0.0), None))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        est = feynman_kac(problem(drift=bad), 0.0, [0.0, 0.0], 2000, 16)
    assert est.excluded > 0.01 and est.n_used < 2000
    assert any(issubclass(w.category, RuntimeWarning) and "excluded" in str(w.message) for w in rec)
