import numpy as np
import pytest

from kolmo.catalogue import (anisotropic_power, cos_mode, desk_drift, desk_level2_drift, smooth_bump,
                             torus_frequency)
from kolmo.metric import MetricParams
from kolmo.spacegrid import SpaceGrid


def test_cos_mode_periodic_on_box():
    grid = SpaceGrid.box([4.0, 2.0], 16)
    f = cos_mode(torus_frequency(grid, [2, 1]))
    x = np.array([[0.3, -0.7]])
    np.testing.assert_allclose(f(x), f(x + np.array([[8.0, 0.0]])), atol=1e-12)
    np.testing.assert_allclose(f(x), f(x + np.array([[0.0, 4.0]])), atol=1e-12)


def test_smooth_bump_support():
    b = smooth_bump([1.0, 0.0], 0.5)
    assert b(np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert b(np.array([[1.5, 0.0], [0.0, 0.0]])).tolist() == [0.0, 0.0]


def test_anisotropic_power_vanishes_at_centre():
    phi = anisotropic_power(MetricParams(2, 1, 1.5, 0.4), 0.8, centre=[0.1, 0.2])
    assert phi(np.array([0.1, 0.2])) == 0.0
    assert phi(np.array([1.1, 0.2])) > 0


def test_desk_drift_structure():
    drift = desk_drift(0.2)
    assert drift.active_levels() == [0]
    assert np.isfinite(drift.norm_h) and drift.norm_h > 0
    assert drift.check_structure([-3, -3], [3, 3]) == 0.0
    lvl2 = desk_level2_drift(1.0)
    assert lvl2.active_levels() == [1]
    assert lvl2.check_structure([-3, -3], [3, 3]) == 0.0
    # level two reads only the second block
    x = np.array([[0.0, 0.5], [3.0, 0.5]])
    v = lvl2(0.0, x)
    assert v[0, 1] == v[1, 1] and np.all(v[:, 0] == 0)
