import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kolmo.errors import InputError
from kolmo.gridio import decode_grid, encode_grid, format_table, read_grid, write_grid
from kolmo.spacegrid import SpaceGrid


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=5, max_side=4),
                  elements=st.floats(allow_nan=False)))
def test_roundtrip(values):
    out = decode_grid(encode_grid(values))
    assert out.shape == values.shape
    np.testing.assert_array_equal(out, values)


def test_header_layout():
    blob = encode_grid(np.zeros((3, 2)))
    assert blob[:4] == b"KSGD" and len(blob) == 32 + 6 * 8


def test_bad_inputs():
    with pytest.raises(InputError):
        decode_grid(b"XXXX" + bytes(28))
    with pytest.raises(InputError):
        encode_grid(np.zeros((1,) * 6))
    with pytest.raises(InputError):
        decode_grid(encode_grid(np.zeros(4))[:-8])


def test_file_roundtrip(tmp_path):
    v = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(read_grid(write_grid(tmp_path / "g.ksgd", v)), v)


def test_table_carries_hash_and_header():
    text = format_table(("a", "b"), [(1, 0.5)], "abc")
    assert text.splitlines() == ["# config_hash=abc", "a,b", "1,0.5"]


def test_spline_interpolation_hits_nodes():
    g = SpaceGrid.box([3.0, 2.0], (16, 12))
    v = np.random.default_rng(0).normal(size=g.points)
    np.testing.assert_allclose(g.interpolate(v, g.mesh()), v, atol=1e-12)


def test_fd4_gradient_of_periodic_mode():
    g = SpaceGrid.box([np.pi, np.pi], 64)
    m = g.mesh()
    v = np.sin(m[..., 0]) * np.cos(2 * m[..., 1])
    d1 = g.gradient_fd4(v, 0)
    np.testing.assert_allclose(d1, np.cos(m[..., 0]) * np.cos(2 * m[..., 1]), atol=1e-5)
    stacked = np.stack([v, 2 * v])
    np.testing.assert_allclose(g.gradient_fd4(stacked, 1, lead=1)[1], 2 * g.gradient_fd4(v, 1))


def test_invalid_grid():
    with pytest.raises(InputError):
        SpaceGrid((0.0,), (1.0,), (4,))
