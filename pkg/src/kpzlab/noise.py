"""Regularized space-time forcing fields.

White noise is drawn per frame from counter-based Philox streams (the value
at frame k, site i is a pure function of (seed, k, i) through the inverse
normal CDF), convolved with a Gaussian kernel of width ell_x, then smoothed
in time by a stationary AR(1) recursion with memory ell_t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .fields import Grid, TimeField

__all__ = ["NoiseSpec", "gen_noise", "smoothing_kernel", "white_frame"]

_NOISE_STREAM = 0x6E6F6973  # tag so other samplers never collide with noise draws


@dataclass(frozen=True)
class NoiseSpec:
    """Correlation lengths, amplitude sqrt(D), and master seed."""

    ell_x: float
    ell_t: float
    amplitude: float
    seed: int

    def __post_init__(self):
        if not self.ell_x > 0 or not self.ell_t > 0:
            raise ValueError("correlation lengths must be > 0")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


def white_frame(seed: int, frame: int, shape) -> np.ndarray:
    """Standard normals for one frame; site i is the i-th inverse-CDF draw."""
    bg = np.random.Philox(
        key=np.uint64(seed), counter=[0, 0, np.uint64(frame), np.uint64(_NOISE_STREAM)]
    )
    u = np.random.Generator(bg).random(int(np.prod(shape)))
    return ndtri(np.maximum(u, 2.0**-64)).reshape(shape)


def smoothing_kernel(grid: Grid, ell_x: float) -> np.ndarray:
    """Gaussian spatial kernel, discretely normalized: sum * dx^d = 1."""
    r = grid.radial_distance()
    g = np.exp(-(r * r) / (2.0 * ell_x * ell_x))
    return g / (g.sum() * grid.spacing**grid.dim)


def gen_noise(spec: NoiseSpec, grid: Grid, n_frames: int, dt: float) -> TimeField:
    """Smoothed noise frames at spacing dt, stationary from the first frame."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if spec.ell_x < 2.0 * grid.spacing:
        raise ValueError(
            f"ell_x = {spec.ell_x} under-resolved: need >= 2 dx = {2 * grid.spacing}"
        )
    if spec.ell_t < dt:
        raise ValueError(f"ell_t = {spec.ell_t} must be >= dt = {dt}")

    kern_hat = np.fft.rfftn(smoothing_kernel(grid, spec.ell_x)) * grid.spacing**grid.dim
    site_std = grid.spacing ** (-grid.dim / 2.0)

    axes = tuple(range(grid.dim))

    def smooth(w):
        return np.fft.irfftn(np.fft.rfftn(w, axes=axes) * kern_hat, s=grid.shape, axes=axes)

    rho = float(np.exp(-dt / spec.ell_t))
    mix = np.sqrt(1.0 - rho * rho)
    frames = np.empty((n_frames,) + grid.shape)
    z = smooth(site_std * white_frame(spec.seed, 0, grid.shape))
    frames[0] = z
    for k in range(1, n_frames):
        w = smooth(site_std * white_frame(spec.seed, k, grid.shape))
        z = rho * z + mix * w
        frames[k] = z
    return TimeField(grid, dt, spec.amplitude * frames)
