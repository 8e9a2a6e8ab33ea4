"""Smoothed forcing: determinism, variance oracle, correlation structure."""

import numpy as np
import pytest

from kpzlab.fields import Grid
from kpzlab.noise import NoiseSpec, gen_noise, smoothing_kernel, white_frame


def test_spec_validation():
    NoiseSpec(0.1, 0.1, 1.0, 7)
    with pytest.raises(ValueError):
        NoiseSpec(-0.1, 0.1, 1.0, 7)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, 0.1, -1.0, 7)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, 0.1, 1.0, -3)
    g = Grid(1, 64, 1.0)
    with pytest.raises(ValueError):
        gen_noise(NoiseSpec(0.5 * g.spacing, 1.0, 1.0, 0), g, 4, 0.1)
    with pytest.raises(ValueError):
        gen_noise(NoiseSpec(0.1, 0.05, 1.0, 0), g, 4, 0.1)


def test_deterministic_and_seed_sensitive():
    g = Grid(1, 64, 1.0)
    spec = NoiseSpec(0.08, 0.2, 1.5, 42)
    a = gen_noise(spec, g, 6, 0.1)
    b = gen_noise(spec, g, 6, 0.1)
    np.testing.assert_array_equal(a.frames, b.frames)
    c = gen_noise(NoiseSpec(0.08, 0.2, 1.5, 43), g, 6, 0.1)
    assert not np.array_equal(a.frames, c.frames)


def test_frame_prefix_stability():
    # frame k is a pure function of (seed, k): extending the horizon
    # does not change earlier frames
    g = Grid(1, 32, 1.0)
    spec = NoiseSpec(0.1, 0.3, 1.0, 11)
    short = gen_noise(spec, g, 4, 0.1)
    long = gen_noise(spec, g, 9, 0.1)
    np.testing.assert_array_equal(short.frames, long.frames[:4])


def test_white_frame_site_purity():
    # site values come off one counter stream in index order
    a = white_frame(3, 5, (64,))
    b = white_frame(3, 5, (128,))
    np.testing.assert_array_equal(a, b[:64])


def test_amplitude_scales_linearly():
    g = Grid(1, 64, 1.0)
    one = gen_noise(NoiseSpec(0.1, 0.2, 1.0, 9), g, 3, 0.1)
    three = gen_noise(NoiseSpec(0.1, 0.2, 3.0, 9), g, 3, 0.1)
    np.testing.assert_allclose(three.frames, 3.0 * one.frames, rtol=1e-13)


def test_variance_matches_kernel_sum_oracle():
    # Var eta = D * dx^d * sum(G_m^2), G the discretely normalized kernel
    g = Grid(1, 128, 1.0)
    amp = 1.3
    spec = NoiseSpec(0.04, 0.05, amp, 123)
    kern = smoothing_kernel(g, spec.ell_x)
    predicted = amp**2 * g.spacing * np.sum(kern**2)
    tf = gen_noise(spec, g, 3000, 0.05)
    empirical = float(np.var(tf.frames))
    assert empirical == pytest.approx(predicted, rel=0.05)


def test_variance_oracle_2d():
    g = Grid(2, 32, 1.0)
    amp = 0.7
    spec = NoiseSpec(0.09, 0.1, amp, 77)
    kern = smoothing_kernel(g, spec.ell_x)
    predicted = amp**2 * g.spacing**2 * np.sum(kern**2)
    tf = gen_noise(spec, g, 800, 0.1)
    assert float(np.var(tf.frames)) == pytest.approx(predicted, rel=0.05)


def test_time_correlation_decay():
    # lag-1 autocorrelation is exp(-dt/ell_t) within 10%
    g = Grid(1, 64, 1.0)
    dt, ell_t = 0.1, 0.25
    tf = gen_noise(NoiseSpec(0.06, ell_t, 1.0, 5), g, 4000, dt)
    x = tf.frames - tf.frames.mean()
    lag1 = float(np.mean(x[1:] * x[:-1]) / np.mean(x * x))
    assert lag1 == pytest.approx(np.exp(-dt / ell_t), rel=0.10)


def test_spatial_spectrum_decays_like_kernel():
    # averaged periodogram tracks |K_hat|^2: log-log regression slope near 1
    g = Grid(1, 256, 1.0)
    spec = NoiseSpec(0.03, 0.1, 1.0, 31)
    tf = gen_noise(spec, g, 600, 0.1)
    pgram = np.mean(np.abs(np.fft.rfft(tf.frames, axis=-1)) ** 2, axis=0)
    khat2 = np.abs(np.fft.rfft(smoothing_kernel(g, spec.ell_x))) ** 2
    # band where the kernel has decayed between ~1x and ~1e-3x
    ref = khat2 / khat2[0]
    band = (ref < 0.8) & (ref > 1e-3)
    slope = np.polyfit(np.log(khat2[band]), np.log(pgram[band]), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.10)


def test_stationarity_from_first_frame():
    # early frames have the same variance as late ones (no burn-in ramp)
    g = Grid(1, 128, 1.0)
    tf = gen_noise(NoiseSpec(0.05, 0.5, 1.0, 200), g, 2000, 0.1)
    v_head = float(np.var(tf.frames[:100]))
    v_tail = float(np.var(tf.frames[-100:]))
    assert v_head == pytest.approx(v_tail, rel=0.2)
