import numpy as np
import pytest

from kolmo.besov import (ThermicNormSpec, control_series, duality_check, first_besov_control,
                         first_control_exponent, second_besov_control, second_control_exponent, thermic_norm)
from kolmo.catalogue import desk_drift, desk_level2_drift
from kolmo.errors import InputError, ResolutionError
from kolmo.flow import DriftSpec, FrozenProxy
from kolmo.stable import GridSpec, heat_kernel_grid


def bump(x, r=8.0):
    z = np.clip(1 - (x / r) ** 2, 1e-300, None)
    return np.where(np.abs(x) < r, np.exp(1 - 1 / z), 0.0)


def test_zero_function():
    tn = thermic_norm(np.zeros(64), 0.1, ThermicNormSpec(0.3))
    assert (tn.low, tn.thermic) == (0.0, 0.0)


def test_spec_validation():
    with pytest.raises(InputError):
        ThermicNormSpec(0.3, p=2.0)
    with pytest.raises(InputError):
        ThermicNormSpec(0.3, v_min=2.0)


def test_boundary_decay_enforced():
    with pytest.raises(ResolutionError):
        thermic_norm(np.ones(64), 0.1, ThermicNormSpec(0.3))


@pytest.mark.parametrize("gamma", [0.2, 0.5, 0.9])
def test_heat_kernel_norm_stable_under_v_refinement(gamma):
    g = GridSpec.cube(1, 8192, 40.96)
    ph = heat_kernel_grid(1.5, 1, 1.0, g).values
    spec = ThermicNormSpec(gamma, np.inf, np.inf, 1.5)
    # the kernel's power tail is cut by the box, so the decay check is relaxed
    a = thermic_norm(ph, g.spacing[0], spec, decay_tol=1e-3).total
    b = thermic_norm(ph, g.spacing[0], spec.refined(), decay_tol=1e-3).total
    assert np.isfinite(a) and abs(b / a - 1) < 0.01


@pytest.mark.parametrize("gamma, grows", [(0.25, False), (0.35, True)])
def test_regularity_detection(gamma, grows):
    h = 0.001
    x = (np.arange(2 ** 16) - 2 ** 15) * h
    f = np.abs(x) ** 0.3 * bump(x)
    spec = ThermicNormSpec(gamma, np.inf, np.inf, 1.5, v_min=1e-4, n_v=41)
    prof = thermic_norm(f, h, spec).profile
    v = spec.v_grid
    sel = (v >= 1e-3) & (v <= 3e-2)  # above the lattice scale, below the window scale
    slope = np.polyfit(np.log(v[sel]), np.log(prof[sel]), 1)[0]
    assert (slope < 0) == grows


def test_duality():
    h = 0.01
    x = (np.arange(4096) - 2048) * h
    b = bump(x, 5.0)
    z = duality_check(np.zeros_like(x), np.zeros_like(x), h, 0.4)
    assert z.lhs == 0.0 and z.rhs == 0.0
    r = duality_check(b, np.gradient(b, h), h, 0.4)
    assert np.isfinite(r.ratio)
    r1 = duality_check(b, b * np.cos(x), h, 0.4)
    r2 = duality_check(2 * b, b * np.cos(x), h, 0.4)
    assert r2.lhs == pytest.approx(2 * r1.lhs, rel=1e-12)
    assert r2.rhs == pytest.approx(2 * r1.rhs, rel=1e-12)


def test_first_control_positive_and_drift_insensitive(ou2):
    plain = first_besov_control(ou2, 0.0, 0.3, l=0, x=np.array([0.1, 0.2]))
    proxy = FrozenProxy(0.0, [0.1, 0.2], desk_drift(0.1), ou2, 0.3)
    moved = first_besov_control(ou2, 0.0, 0.3, l=0, x=np.array([0.1, 0.2]), proxy=proxy)
    assert 0 < plain.total < np.inf
    assert 0.5 < moved.total / plain.total < 2.0


def test_first_control_rejects_bad_order(ou2):
    with pytest.raises(InputError):
        first_besov_control(ou2, 0.0, 0.3, l=2)


def test_second_control_vanishes_for_constant_drift(ou2):
    const = DriftSpec.constant_chain(2, 1, [0.3, -0.7])
    assert second_besov_control(ou2, const, 0.0, 0.3, np.array([0.0, 0.1])).total == 0.0


def test_second_control_is_linear(ou2):
    drift = desk_level2_drift(1.0)
    x = np.array([0.0, -0.2])
    v1 = second_besov_control(ou2, drift, 0.0, 0.3, x).total
    v2 = second_besov_control(ou2, drift.scaled(2.0), 0.0, 0.3, x).total
    assert abs(v2 - 2 * v1) < 1e-8


def test_exponents():
    assert first_control_exponent(1.5, 0.4, 2, 0) == pytest.approx(1.9 / 1.5 - 2.5 / 1.5)
    assert first_control_exponent(1.5, 0.4, 2, 1) == pytest.approx(1.9 / 1.5 - 2.5 / 1.5 - 1 / 1.5)
    assert second_control_exponent(1.5, 0.4, (0, 0)) == pytest.approx(0.4 / 1.5)
    assert second_control_exponent(1.5, 0.4, (1, 0)) == pytest.approx(0.4 / 1.5 - 1 / 1.5)


def test_control_series_rows(ou2):
    ser = control_series(lambda **kw: first_besov_control(ou2, l=0, **kw), [0.2, 0.4], -0.4)
    assert len(ser.rows()) == 2 and np.isfinite(ser.slope)
