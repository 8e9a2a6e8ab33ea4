"""Grids, periodic calculus, cutoff, interpolation, and disk round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpzlab.fields import (
    Grid,
    ScalarField,
    TimeField,
    bump_field,
    constant_field,
    cutoff_data,
    export_csv,
    fourier_mode_field,
    gradient,
    gradient_magnitude,
    load_field,
    sample_field,
    save_field,
)


def test_grid_validation():
    Grid(1, 64, 1.0)
    with pytest.raises(ValueError):
        Grid(3, 64, 1.0)
    with pytest.raises(ValueError):
        Grid(1, 48, 1.0)
    with pytest.raises(ValueError):
        Grid(1, 4, 1.0)
    with pytest.raises(ValueError):
        Grid(2, 64, -1.0)


def test_field_shape_and_finiteness_checks():
    g = Grid(1, 16, 1.0)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(8))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(16, np.nan))
    f = ScalarField(g, np.arange(16.0))
    with pytest.raises(ValueError):
        f.values[0] = 7.0  # immutable after construction


def test_gradient_of_fourier_mode_matches_analytic():
    g = Grid(1, 256, 2.0)
    f = fourier_mode_field(g, 1.0, 3)
    (df,) = gradient(f)
    x = g.coords()
    exact = -1.0 * (2 * np.pi * 3 / g.length) * np.sin(2 * np.pi * 3 * x / g.length)
    # centered differences are second order: (k dx)^2/6 relative error
    assert np.max(np.abs(df.values - exact)) < 2e-3 * np.max(np.abs(exact))


def test_gradient_2d_and_magnitude():
    g = Grid(2, 64, 1.0)
    f = fourier_mode_field(g, 2.0, [1, 2])
    dfx, dfy = gradient(f)
    xs, ys = g.mesh()
    arg = 2 * np.pi * (xs + 2 * ys)
    assert np.allclose(dfx.values, -2 * (2 * np.pi) * np.sin(arg), atol=0.15)
    assert np.allclose(dfy.values, -2 * (4 * np.pi) * np.sin(arg), atol=0.30)
    mag = gradient_magnitude(f)
    assert np.allclose(
        mag.values, np.sqrt(dfx.values**2 + dfy.values**2), atol=1e-14
    )


def test_gradient_wraps_periodically():
    g = Grid(1, 32, 1.0)
    v = np.zeros(32)
    v[0] = 1.0
    (df,) = gradient(ScalarField(g, v))
    # the spike couples the two boundary neighbours through the seam
    assert df.values[31] == pytest.approx(1.0 / (2 * g.spacing))
    assert df.values[1] == pytest.approx(-1.0 / (2 * g.spacing))


def test_cutoff_data_bounds():
    g = Grid(1, 32, 1.0)
    vals = np.linspace(-4, 4, 32)
    h0 = ScalarField(g, vals)
    for n in [1.0, 2.0, 8.0]:
        h0c, _ = cutoff_data(h0, None, n)
        assert np.max(np.abs(h0c.values)) <= n
        # third-order contact: |n tanh(x/n) - x| <= |x|^3 / (3 n^2)
        assert np.all(
            np.abs(h0c.values - vals) <= np.abs(vals) ** 3 / (3 * n * n) + 1e-12
        )
    with pytest.raises(ValueError):
        cutoff_data(h0, None, 0.0)


def test_cutoff_data_applies_to_forcing_too():
    g = Grid(1, 16, 1.0)
    tf = TimeField(g, 0.1, np.outer([1.0, -3.0], np.ones(16)))
    _, gc = cutoff_data(constant_field(g, 0.0), tf, 2.0)
    assert gc.frames.shape == (2, 16)
    assert np.max(np.abs(gc.frames)) <= 2.0


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-50, 50), n=st.floats(0.5, 20))
def test_cutoff_contract_pointwise(x, n):
    g = Grid(1, 8, 1.0)
    out, _ = cutoff_data(constant_field(g, x), None, n)
    y = float(out.values[0])
    assert abs(y) <= n and abs(y - x) <= abs(x) ** 3 / (3 * n * n) + 1e-9


def test_sample_field_linear_exactness():
    g = Grid(1, 16, 2.0)
    # field linear between nodes: interpolation is exact at midpoints
    v = np.sin(2 * np.pi * g.coords() / g.length)
    got = sample_field(g, v, np.array([[0.0625]]))  # halfway between cells 0 and 1
    assert got[0] == pytest.approx(0.5 * (v[0] + v[1]), abs=1e-14)
    # periodic wrap: beyond the last cell interpolates toward cell 0
    got = sample_field(g, v, np.array([[2.0 - 0.0625]]))
    assert got[0] == pytest.approx(0.5 * (v[15] + v[0]), abs=1e-14)


def test_sample_field_2d_corners():
    g = Grid(2, 8, 1.0)
    v = np.arange(64.0).reshape(8, 8)
    pos = np.array([[g.spacing * 2, g.spacing * 5]])
    assert sample_field(g, v, pos)[0] == pytest.approx(v[2, 5])
    mid = np.array([[g.spacing * 2.5, g.spacing * 5.5]])
    expect = 0.25 * (v[2, 5] + v[3, 5] + v[2, 6] + v[3, 6])
    assert sample_field(g, v, mid)[0] == pytest.approx(expect)


def test_timefield_frame_lookup():
    g = Grid(1, 8, 1.0)
    tf = TimeField(g, 0.25, np.zeros((5, 8)))
    assert np.allclose(tf.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert tf.index_at(0.62) == 2
    with pytest.raises(ValueError):
        tf.index_at(2.0)


def test_save_load_roundtrip(tmp_path):
    g = Grid(2, 16, 3.0)
    rng = np.random.default_rng(5)
    f = ScalarField(g, rng.normal(size=(16, 16)))
    p = tmp_path / "field.f64"
    save_field(p, f, seed=5)
    back = load_field(p)
    assert isinstance(back, ScalarField)
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid == g

    tf = TimeField(g, 0.5, rng.normal(size=(3, 16, 16)))
    p2 = tmp_path / "traj.f64"
    save_field(p2, tf, seed=5)
    back2 = load_field(p2)
    assert isinstance(back2, TimeField)
    assert back2.dt == 0.5
    np.testing.assert_array_equal(back2.frames, tf.frames)


def test_save_writes_little_endian_row_major(tmp_path):
    g = Grid(1, 8, 1.0)
    f = ScalarField(g, np.arange(8.0))
    p = tmp_path / "f.f64"
    save_field(p, f)
    raw = np.frombuffer(p.read_bytes(), dtype="<f8")
    np.testing.assert_array_equal(raw, np.arange(8.0))
    meta = (tmp_path / "f.f64.json").read_text()
    for key in ('"dim"', '"n"', '"length"', '"dt"', '"frame_count"', '"seed"'):
        assert key in meta


def test_export_csv(tmp_path):
    g = Grid(1, 8, 1.0)
    tf = TimeField(g, 0.5, np.arange(16.0).reshape(2, 8))
    p = tmp_path / "out.csv"
    export_csv(p, tf)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "t,x,value"
    assert lines[1] == "0.0,0.0,0.0"
    assert len(lines) == 1 + 16

    f2 = bump_field(Grid(2, 8, 1.0), 1.0, 0.2)
    p2 = tmp_path / "bump.csv"
    export_csv(p2, f2)
    assert p2.read_text().splitlines()[0] == "x,y,value"


def test_bump_field_center_and_decay():
    g = Grid(1, 64, 2.0)
    f = bump_field(g, 3.0, 0.1)
    assert f.values[32] == pytest.approx(3.0)
    assert f.values[0] < 1e-8
