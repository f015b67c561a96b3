import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from kolmo.flow import (DriftSpec, FrozenKernel, FrozenProxy, PropagationError, flow_order_study,
                        flow_sensitivity_report, frozen_density, frozen_shift, green_apply, integrate_flow,
                        semigroup_apply, shift_and_flow_batch)
from kolmo.ou import ChainMatrix, resolvent
from kolmo.spacegrid import SpaceGrid


def smooth_drift():
    return DriftSpec(2, 1, (lambda t, x: np.sin(x[..., 1:2]) * 0.5, lambda t, x: 0.3 * np.cos(x[..., 1:2])))


def test_zero_drift_flow_is_linear(chain2):
    xi = np.array([0.4, -1.2])
    path = integrate_flow(0.1, xi, DriftSpec.zero(2, 1), chain2, 0.9, 256)
    np.testing.assert_allclose(path.states[-1], resolvent(chain2, 0.8) @ xi, atol=1e-8)


def test_constant_drift_variation_of_constants(chain2):
    c = np.array([0.7, -0.3])
    xi = np.array([0.2, 0.5])
    path = integrate_flow(0.0, xi, DriftSpec.constant_chain(2, 1, c), chain2, 1.3, 256)
    forced = integrate.quad_vec(lambda v: resolvent(chain2, 1.3 - v) @ c, 0.0, 1.3, epsabs=1e-14)[0]
    np.testing.assert_allclose(path.states[-1], resolvent(chain2, 1.3) @ xi + forced, atol=1e-12)


def test_step_halving_order(chain2):
    rep = flow_order_study(0.0, np.array([0.3, 0.1]), smooth_drift(), chain2, 1.0, n_steps=8, levels=4)
    assert np.all(np.abs(rep.orders - 4.0) < 0.3)


def test_nonfinite_drift_raises(chain2):
    bad = DriftSpec(2, 1, (lambda t, x: np.exp(1e3 * x[..., 1:2]), None))
    with pytest.raises(PropagationError, match="time"), np.errstate(all="ignore"):
        integrate_flow(0.0, np.array([0.0, 1.0]), bad, chain2, 1.0, 16)


def test_structure_check_flags_lower_dependence():
    ok = DriftSpec(2, 1, (None, lambda t, x: x[..., 1:2] ** 2))
    bad = DriftSpec(2, 1, (None, lambda t, x: x[..., 0:1]))
    assert ok.check_structure([-1, -1], [1, 1]) == 0.0
    assert bad.check_structure([-1, -1], [1, 1]) > 0.1


def test_frozen_shift_without_drift(ou2):
    proxy = FrozenProxy(0.0, [0.1, 0.2], DriftSpec.zero(2, 1), ou2, 1.0)
    x = np.array([0.5, -0.5])
    np.testing.assert_allclose(frozen_shift(0.2, 0.7, x, proxy), resolvent(ou2.A, 0.5) @ x, atol=1e-15)


def test_identification_shared_steps(ou2):
    drift = smooth_drift()
    for x in ([0.3, -0.2], [1.0, 2.0]):
        m, theta = shift_and_flow_batch(0.1, x, 0.8, drift, ou2.A, n_steps=512)
        assert np.max(np.abs(m - theta)) < 1e-6


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_frozen_shift_is_affine(h1, h2):
    from kolmo.stable import LevyModel, SphericalMeasure  # noqa: F401
    A = ChainMatrix.scalar_chain(2)
    proxy = _PROXY
    x = np.array([0.1, 0.4])
    h = np.array([h1, h2])
    diff = proxy.shift(0.0, 0.6, x + h) - proxy.shift(0.0, 0.6, x)
    np.testing.assert_allclose(diff, resolvent(A, 0.6) @ h, atol=1e-13)


_PROXY = None


@pytest.fixture(autouse=True, scope="module")
def _shared_proxy(ou2):
    global _PROXY
    _PROXY = FrozenProxy(0.0, [0.2, -0.1], smooth_drift(), ou2, 1.0)
    yield


def test_frozen_density_without_drift_is_ou(ou2):
    proxy = FrozenProxy(0.0, [0.0, 0.0], DriftSpec.zero(2, 1), ou2, 1.0)
    x = np.array([[0.3, 0.1]])
    y = np.array([[0.5, 0.2], [-0.4, 1.0]])
    np.testing.assert_allclose(frozen_density(0.0, 0.5, x, y, proxy), ou2(0.5, x, y), rtol=1e-12, atol=1e-16)


def test_frozen_density_mass(ou2):
    proxy = FrozenProxy(0.0, [0.3, 0.1], smooth_drift(), ou2, 1.0)
    x = np.array([0.3, 0.1])
    y, vol = ou2.lattice(0.5, x)
    y = y + proxy.forcing(0.0, 0.5)
    assert float(np.sum(proxy.density(0.0, 0.5, x, y)) * vol) == pytest.approx(1.0, abs=1e-4)


@pytest.fixture(scope="module")
def kernel(ou2):
    return FrozenKernel(ou2, SpaceGrid.box([16.0, 16.0], 128))


def test_semigroup_of_constant(ou2, kernel):
    proxy = FrozenProxy(0.0, [0.0, 0.0], smooth_drift(), ou2, 1.0)
    vals = semigroup_apply(0.0, 0.6, np.ones(kernel.grid.points), proxy, kernel)
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)


def test_semigroup_short_time_limit(ou2, kernel):
    proxy = FrozenProxy(0.0, [0.0, 0.0], DriftSpec.zero(2, 1), ou2, 1.0)
    mesh = kernel.grid.mesh()
    phi = np.exp(-np.sum(mesh ** 2, axis=-1) / 4)
    pts = mesh[50:78, 50:78].reshape(-1, 2)
    devs = [np.max(np.abs(semigroup_apply(0.0, r, phi, proxy, kernel, pts) - kernel.grid.interpolate(phi, pts)))
            for r in (0.1, 0.01, 0.001)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 1e-2


def test_green_of_constant_and_additivity(ou2, kernel):
    proxy = FrozenProxy(0.0, [0.0, 0.0], smooth_drift(), ou2, 1.0)
    one = lambda s, mesh: np.ones(mesh.shape[:-1])  # noqa: E731
    np.testing.assert_allclose(green_apply(0.0, 0.1, 0.7, one, proxy, kernel), 0.6, atol=1e-12)
    f = lambda s, mesh: np.exp(-np.sum(mesh ** 2, axis=-1) / 8) * (1 + s)  # noqa: E731
    pts = np.array([[0.0, 0.0], [1.0, -1.0]])
    whole = green_apply(0.0, 0.1, 0.7, f, proxy, kernel, 33, pts)
    parts = green_apply(0.0, 0.1, 0.4, f, proxy, kernel, 33, pts) + green_apply(0.0, 0.4, 0.7, f, proxy, kernel, 33, pts)
    np.testing.assert_allclose(whole, parts, atol=1e-6)


def test_sensitivity_coincident_pairs_are_zero(chain2):
    x = np.array([[0.1, 0.2], [0.5, -0.3]])
    rep = flow_sensitivity_report(smooth_drift(), chain2, 1.5, 0.4, x, x, 0.0, 0.5)
    assert not np.any(rep.flow_ratio) and not np.any(rep.mean_ratio) and not np.any(rep.freeze_ratio)


def test_sensitivity_linear_flow_bound(chain2):
    from kolmo.metric import MetricParams, aniso_distance
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (50, 2))
    xp = x + rng.uniform(-0.2, 0.2, (50, 2))
    rep = flow_sensitivity_report(DriftSpec.zero(2, 1), chain2, 1.5, 0.4, x, xp, 0.0, 0.5)
    params = MetricParams(2, 1, 1.5, 0.4)
    R = resolvent(chain2, 0.5)
    exact = aniso_distance(x @ R.T, xp @ R.T, params) / (aniso_distance(x, xp, params) + 0.5 ** (1 / 1.5))
    np.testing.assert_allclose(rep.flow_ratio, exact, rtol=1e-12)
    assert np.all(rep.mean_ratio < 1e-12)
