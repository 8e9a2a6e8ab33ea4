"""Periodic grids, scalar and space-time fields, and their disk formats.

Fields live on the torus [0, L)^d sampled at N^d cells, d in {1, 2}, N a
power of two.  Values are immutable after construction.  The disk format is
raw little-endian float64, row-major, frames concatenated, with a JSON
sidecar carrying the geometry.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "TimeField",
    "gradient",
    "gradient_magnitude",
    "cutoff_data",
    "sample_field",
    "constant_field",
    "bump_field",
    "fourier_mode_field",
    "save_field",
    "load_field",
    "export_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: dim in {1, 2}, n a power of two >= 8."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"box length must be > 0, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def coords(self) -> np.ndarray:
        """Cell coordinates along one axis."""
        return np.arange(self.n) * self.spacing

    def mesh(self):
        """Coordinate arrays of shape `shape`, one per axis."""
        c = self.coords()
        return np.meshgrid(*([c] * self.dim), indexing="ij")

    def min_image(self, delta):
        """Periodic minimal-image displacement."""
        delta = np.asarray(delta, dtype=float)
        return delta - self.length * np.round(delta / self.length)

    def radial_distance(self):
        """Minimal-image distance from the origin cell, shape `shape`."""
        axis = np.minimum(self.coords(), self.length - self.coords())
        if self.dim == 1:
            return axis
        dx, dy = np.meshgrid(axis, axis, indexing="ij")
        return np.sqrt(dx * dx + dy * dy)

    def wavenumbers_sq(self) -> np.ndarray:
        """|k|^2 for the FFT layout, shape `shape`."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        if self.dim == 1:
            return k * k
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return kx * kx + ky * ky


def _check_values(grid: Grid, values: np.ndarray, name: str):
    if values.shape[-grid.dim :] != grid.shape:
        raise ValueError(
            f"{name} shape {values.shape} does not match grid shape {grid.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        _check_values(self.grid, v, "field values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class TimeField:
    """Frames at times 0, dt, 2 dt, ..., all on one grid."""

    grid: Grid
    dt: float
    frames: np.ndarray

    def __post_init__(self):
        f = np.array(self.frames, dtype=float)
        if f.ndim != self.grid.dim + 1 or f.shape[0] < 1:
            raise ValueError(f"frames must be (n_frames, grid...), got {f.shape}")
        _check_values(self.grid, f, "frames")
        if not self.dt > 0:
            raise ValueError(f"frame spacing dt must be > 0, got {self.dt}")
        f.setflags(write=False)
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.dt

    def frame(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.frames[i])

    def index_at(self, t: float) -> int:
        """Nearest-frame index for time t (t within the covered range)."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.n_frames - 1 or t < -1e-9 or t > self.times[-1] + self.dt:
            raise ValueError(f"time {t} outside covered range [0, {self.times[-1]}]")
        return min(i, self.n_frames - 1)


def _grad_values(grid: Grid, v: np.ndarray):
    """Centered periodic differences along each axis (trailing grid axes)."""
    two_dx = 2.0 * grid.spacing
    off = v.ndim - grid.dim
    return tuple(
        (np.roll(v, -1, axis=off + a) - np.roll(v, 1, axis=off + a)) / two_dx
        for a in range(grid.dim)
    )


def gradient(field: ScalarField):
    """Gradient components as ScalarFields, centered periodic differences."""
    return tuple(ScalarField(field.grid, g) for g in _grad_values(field.grid, field.values))


def gradient_magnitude(field: ScalarField) -> ScalarField:
    comps = _grad_values(field.grid, field.values)
    return ScalarField(field.grid, np.sqrt(sum(c * c for c in comps)))


def cutoff_data(h0: ScalarField, g, level: float):
    """Smooth clip x -> level*tanh(x/level) of the data pair (g may be None)."""
    if not level > 0:
        raise ValueError(f"cutoff level must be > 0, got {level}")
    clip = lambda v: level * np.tanh(v / level)
    h0c = ScalarField(h0.grid, clip(h0.values))
    if g is None:
        return h0c, None
    return h0c, TimeField(g.grid, g.dt, clip(g.frames))


def sample_field(grid: Grid, values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Periodic (bi)linear interpolation of grid values at positions (m, d)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    x = pos / grid.spacing
    i0 = np.floor(x).astype(np.int64)
    f = x - i0
    i0 %= grid.n
    i1 = (i0 + 1) % grid.n
    if grid.dim == 1:
        return (1 - f[:, 0]) * values[i0[:, 0]] + f[:, 0] * values[i1[:, 0]]
    fx, fy = f[:, 0], f[:, 1]
    v00 = values[i0[:, 0], i0[:, 1]]
    v10 = values[i1[:, 0], i0[:, 1]]
    v01 = values[i0[:, 0], i1[:, 1]]
    v11 = values[i1[:, 0], i1[:, 1]]
    return (
        (1 - fx) * (1 - fy) * v00
        + fx * (1 - fy) * v10
        + (1 - fx) * fy * v01
        + fx * fy * v11
    )


def constant_field(grid: Grid, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def bump_field(grid: Grid, amplitude: float, width: float, center=None) -> ScalarField:
    """Gaussian bump exp(-r^2 / (2 width^2)) at the box center by default."""
    if center is None:
        center = [grid.length / 2.0] * grid.dim
    center = np.asarray(center, dtype=float)
    mesh = grid.mesh()
    r2 = sum(grid.min_image(m - c) ** 2 for m, c in zip(mesh, center))
    return ScalarField(grid, amplitude * np.exp(-r2 / (2.0 * width**2)))


def fourier_mode_field(grid: Grid, amplitude: float, mode, phase: float = 0.0) -> ScalarField:
    """amplitude * cos(2 pi mode.x / L + phase), mode an integer (d-)vector."""
    mode = np.atleast_1d(np.asarray(mode, dtype=float))
    mesh = grid.mesh()
    arg = sum(2.0 * np.pi * m * x / grid.length for m, x in zip(mode, mesh))
    return ScalarField(grid, amplitude * np.cos(arg + phase))


def save_field(path, field, seed=None):
    """Write raw float64 (little-endian, row-major) plus a JSON sidecar."""
    path = Path(path)
    if isinstance(field, ScalarField):
        grid, frames, dt = field.grid, field.values[None, ...], None
    elif isinstance(field, TimeField):
        grid, frames, dt = field.grid, field.frames, field.dt
    else:
        raise TypeError(f"cannot save {type(field).__name__}")
    path.write_bytes(np.ascontiguousarray(frames, dtype="<f8").tobytes())
    meta = {
        "dim": grid.dim,
        "n": grid.n,
        "length": grid.length,
        "dt": dt,
        "frame_count": int(frames.shape[0]),
        "seed": seed,
        "dtype": "float64",
        "byte_order": "little",
        "layout": "row-major",
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, indent=1, sort_keys=True) + "\n"
    )


def load_field(path):
    """Read a field written by save_field; TimeField when dt is present."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = Grid(meta["dim"], meta["n"], meta["length"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    frames = raw.reshape((meta["frame_count"],) + grid.shape)
    if meta["dt"] is None:
        if meta["frame_count"] != 1:
            raise ValueError("static field file with multiple frames")
        return ScalarField(grid, frames[0])
    return TimeField(grid, meta["dt"], frames)


def export_csv(path, field):
    """Tabulate a field: columns x[, y][, t], value. Floats via repr."""
    if isinstance(field, ScalarField):
        tf = TimeField(field.grid, 1.0, field.values[None, ...])
        times = [None]
    else:
        tf = field
        times = tf.times
    grid = tf.grid
    cols = ["x", "value"] if grid.dim == 1 else ["x", "y", "value"]
    if times[0] is not None:
        cols = ["t"] + cols
    xs = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, t in enumerate(times):
            frame = tf.frames[k]
            if grid.dim == 1:
                for i in range(grid.n):
                    row = [repr(float(xs[i])), repr(float(frame[i]))]
                    w.writerow(([repr(float(t))] if t is not None else []) + row)
            else:
                for i in range(grid.n):
                    for jj in range(grid.n):
                        row = [
                            repr(float(xs[i])),
                            repr(float(xs[jj])),
                            repr(float(frame[i, jj])),
                        ]
                        w.writerow(([repr(float(t))] if t is not None else []) + row)
