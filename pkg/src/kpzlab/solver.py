"""Spectral solver for h_t = Lap h - eps h + lam V(grad h) + g on the torus.

Exponential time differencing in Fourier space: the linear flow is applied
exactly each step and the frozen source (nonlinearity + forcing) enters
through the phi1 weight, so piecewise-constant-in-time forcing integrates
exactly and the nonlinearity is first order.  The slope entering V uses
centered periodic differences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import Grid, ScalarField, TimeField, _grad_values
from .rates import DepositionRate

__all__ = [
    "CutoffParams",
    "SolveResult",
    "ComparisonReport",
    "BlowUpError",
    "CflViolationError",
    "solve_kpz",
    "solve_linear",
    "cole_hopf_solve",
    "comparison_check",
    "heat_semigroup",
]

CFL_SAFETY = 0.25


class BlowUpError(RuntimeError):
    """Solution left the finite range: reports the offending step."""

    def __init__(self, step: int, sup: float):
        self.step, self.sup = step, sup
        super().__init__(f"solution blew up at step {step} (sup |h| = {sup:g})")


class CflViolationError(RuntimeError):
    def __init__(self, step: int, dt: float, dt_max: float):
        self.step, self.dt, self.dt_max = step, dt, dt_max
        super().__init__(
            f"advective CFL violated at step {step}: dt = {dt:g} > {dt_max:g}"
        )


@dataclass(frozen=True)
class CutoffParams:
    """Cutoff scale j (None means eps = 0), coupling, horizon, frame step."""

    j: Optional[int]
    lam: float
    horizon: float
    dt: float

    def __post_init__(self):
        if self.j is not None and (int(self.j) != self.j or self.j < 0):
            raise ValueError(f"cutoff scale j must be a nonnegative integer, got {self.j}")
        if not self.lam > 0:
            raise ValueError(f"coupling lambda must be > 0, got {self.lam}")
        if not self.horizon > 0 or not self.dt > 0:
            raise ValueError("horizon and dt must be > 0")
        n = round(self.horizon / self.dt)
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(
                f"horizon {self.horizon} is not an integer number of steps of {self.dt}"
            )

    @property
    def eps(self) -> float:
        return 0.0 if self.j is None else 2.0 ** (-self.j)

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)


@dataclass(frozen=True)
class SolveResult:
    """Trajectory with per-frame gradients and scheme diagnostics.

    grad has shape (n_frames, dim, grid...).  envelope_upper/lower are the
    discrete decay-plus-forcing envelopes; margins report how far inside
    them the solution sits (negative = violation).
    """

    params: CutoffParams
    rate: Optional[DepositionRate]
    h: TimeField
    grad: np.ndarray
    g: Optional[TimeField]
    sup_h: np.ndarray
    sup_grad: np.ndarray
    cfl_margin: np.ndarray
    envelope_upper: np.ndarray
    envelope_lower: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.h.grid

    @property
    def upper_margin(self) -> np.ndarray:
        return self.envelope_upper - self.h.frames.max(axis=tuple(range(1, self.h.frames.ndim)))

    @property
    def lower_margin(self) -> np.ndarray:
        return self.h.frames.min(axis=tuple(range(1, self.h.frames.ndim))) - self.envelope_lower

    def grad_frame(self, i: int) -> np.ndarray:
        """Gradient components at frame i, shape (dim, grid...)."""
        return self.grad[i]

    def diagnostics_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["t", "sup_h", "sup_grad", "cfl_margin", "upper_margin", "lower_margin"]
            )
            um, lm = self.upper_margin, self.lower_margin
            for i, t in enumerate(self.h.times):
                w.writerow(
                    [
                        repr(float(t)),
                        repr(float(self.sup_h[i])),
                        repr(float(self.sup_grad[i])),
                        repr(float(self.cfl_margin[i])),
                        repr(float(um[i])),
                        repr(float(lm[i])),
                    ]
                )


def _phi1(z: np.ndarray) -> np.ndarray:
    """(1 - e^{-z})/z, stable near 0."""
    out = np.empty_like(z)
    small = np.abs(z) < 1e-8
    zs = z[~small]
    out[~small] = -np.expm1(-zs) / zs
    out[small] = 1.0 - z[small] / 2.0
    return out


def _forcing_index(g: TimeField, t: float) -> int:
    """Left-endpoint frame index for piecewise-constant forcing."""
    return min(int(np.floor(t / g.dt + 1e-9)), g.n_frames - 1)


def _check_forcing(g: Optional[TimeField], grid: Grid, params: CutoffParams):
    if g is None:
        return
    if g.grid != grid:
        raise ValueError("forcing grid does not match the initial condition grid")
    if g.n_frames * g.dt < params.horizon * (1 - 1e-9):
        raise ValueError(
            f"forcing covers [0, {g.n_frames * g.dt:g}) but the horizon is {params.horizon:g}"
        )


def _integrate(
    h0: ScalarField,
    g: Optional[TimeField],
    params: CutoffParams,
    rate: Optional[DepositionRate],
    enforce_cfl: bool = True,
) -> SolveResult:
    grid = h0.grid
    _check_forcing(g, grid, params)
    n_steps, dt, eps, lam = params.n_steps, params.dt, params.eps, params.lam
    axes = tuple(range(grid.dim))

    z = (grid.wavenumbers_sq() + eps) * dt
    decay = np.exp(-z)
    weight = dt * _phi1(z)
    # k = 0 factors drive the sup-norm envelopes
    e0, w0 = float(np.exp(-eps * dt)), float(dt * _phi1(np.array([eps * dt]))[0])

    shape = (n_steps + 1,) + grid.shape
    frames = np.empty(shape)
    grads = np.empty((n_steps + 1, grid.dim) + grid.shape)
    sup_h = np.empty(n_steps + 1)
    sup_grad = np.empty(n_steps + 1)
    cfl_margin = np.full(n_steps + 1, np.inf)
    env_u = np.empty(n_steps + 1)
    env_l = np.empty(n_steps + 1)

    h = np.array(h0.values, dtype=float)
    h_hat = np.fft.rfftn(h, axes=axes)
    decay_hat = decay[..., : h_hat.shape[-1]]
    weight_hat = weight[..., : h_hat.shape[-1]]

    env_u[0] = float(np.max(h))
    env_l[0] = float(np.min(h))

    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps + 1):
            gr = _grad_values(grid, h)
            frames[n] = h
            for a in range(grid.dim):
                grads[n, a] = gr[a]
            mag = np.sqrt(sum(c * c for c in gr))
            sup_h[n] = float(np.max(np.abs(h)))
            sup_grad[n] = float(np.max(mag))
            if not np.isfinite(sup_h[n]):
                raise BlowUpError(n, sup_h[n])
            if n == n_steps:
                break

            source = np.zeros(grid.shape)
            if rate is not None:
                slope_max = float(np.max(rate.slope(mag)))
                if slope_max > 0:
                    dt_max = CFL_SAFETY * grid.spacing / (lam * slope_max)
                    cfl_margin[n] = dt_max / dt
                    if enforce_cfl and dt > dt_max:
                        raise CflViolationError(n, dt, dt_max)
                source += lam * rate.value(mag)
            sup_g = 0.0
            if g is not None:
                gframe = g.frames[_forcing_index(g, n * dt)]
                source += gframe
                sup_g = float(np.max(np.abs(gframe)))

            h_hat = decay_hat * h_hat + weight_hat * np.fft.rfftn(source, axes=axes)
            h = np.fft.irfftn(h_hat, s=grid.shape, axes=axes)
            env_u[n + 1] = e0 * env_u[n] + w0 * sup_g
            env_l[n + 1] = e0 * env_l[n] - w0 * sup_g

    return SolveResult(
        params=params,
        rate=rate,
        h=TimeField(grid, dt, frames),
        grad=grads,
        g=g,
        sup_h=sup_h,
        sup_grad=sup_grad,
        cfl_margin=cfl_margin,
        envelope_upper=env_u,
        envelope_lower=env_l,
    )


def solve_kpz(
    h0: ScalarField,
    g: Optional[TimeField],
    rate: DepositionRate,
    params: CutoffParams,
    enforce_cfl: bool = True,
) -> SolveResult:
    """March the full nonlinear equation over [0, horizon]."""
    return _integrate(h0, g, params, rate, enforce_cfl)


def solve_linear(h0: ScalarField, g: Optional[TimeField], params: CutoffParams) -> SolveResult:
    """lam V term dropped; exact per step for piecewise-constant forcing."""
    return _integrate(h0, g, params, None)


def heat_semigroup(grid: Grid, values: np.ndarray, tau: float) -> np.ndarray:
    """e^{tau Lap} by the exact spectral multiplier (tau >= 0)."""
    if tau < 0:
        raise ValueError("heat time must be >= 0")
    axes = tuple(range(grid.dim))
    mult = np.exp(-grid.wavenumbers_sq() * tau)
    hat = np.fft.rfftn(values, axes=axes) * mult[..., : grid.n // 2 + 1]
    return np.fft.irfftn(hat, s=grid.shape, axes=axes)


def _quadratic_coefficient(rate: DepositionRate) -> float:
    """a with V(y) = a y^2, or raise if the rate is not quadratic."""
    ys = np.linspace(0.25, 3.0, 12)
    ratios = rate.value(ys) / ys**2
    a = float(np.mean(ratios))
    if np.max(np.abs(rate.value(ys) - a * ys**2)) > 1e-10 * max(1.0, a * 9.0):
        raise ValueError(
            f"exact linearization needs V(y) = a y^2; rate {rate.kind!r} is not quadratic"
        )
    return a


def cole_hopf_solve(
    h0: ScalarField,
    g: Optional[TimeField],
    lam: float,
    params: CutoffParams,
    rate: Optional[DepositionRate] = None,
) -> SolveResult:
    """Exact solution via w = e^{mu h} when V(y) = a y^2, eps = 0, g = 0.

    With the default rate convention V(y) = |y|^2 (a = 1) this is
    h(t) = lam^{-1} ln(e^{t Lap} e^{lam h0}).
    """
    if params.j is not None:
        raise ValueError("exact linearization requires eps = 0 (j = None)")
    if abs(lam - params.lam) > 1e-12 * max(1.0, abs(lam)):
        raise ValueError("lambda argument disagrees with params.lam")
    if g is not None and float(np.max(np.abs(g.frames))) != 0.0:
        raise ValueError("exact linearization requires zero forcing")
    a = 1.0 if rate is None else _quadratic_coefficient(rate)
    mu = lam * a

    grid = h0.grid
    n_steps = params.n_steps
    shift = float(np.max(h0.values))
    w0 = np.exp(mu * (h0.values - shift))

    frames = np.empty((n_steps + 1,) + grid.shape)
    grads = np.empty((n_steps + 1, grid.dim) + grid.shape)
    sup_h = np.empty(n_steps + 1)
    sup_grad = np.empty(n_steps + 1)
    for n in range(n_steps + 1):
        w = heat_semigroup(grid, w0, n * params.dt)
        h = shift + np.log(np.maximum(w, 1e-300)) / mu
        frames[n] = h
        gr = _grad_values(grid, h)
        for ax in range(grid.dim):
            grads[n, ax] = gr[ax]
        sup_h[n] = float(np.max(np.abs(h)))
        sup_grad[n] = float(np.max(np.sqrt(sum(c * c for c in gr))))

    env_u = np.full(n_steps + 1, float(np.max(h0.values)))
    env_l = np.full(n_steps + 1, float(np.min(h0.values)))
    return SolveResult(
        params=params,
        rate=rate,
        h=TimeField(grid, params.dt, frames),
        grad=grads,
        g=None,
        sup_h=sup_h,
        sup_grad=sup_grad,
        cfl_margin=np.full(n_steps + 1, np.inf),
        envelope_upper=env_u,
        envelope_lower=env_l,
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Worst-case pointwise gap for the ordering lo <= hi + tol."""

    passed: bool
    worst_gap: float
    frame: int
    tol: float


def comparison_check(lo, hi, tol: float = 1e-8) -> ComparisonReport:
    """Check lo <= hi + tol over every frame and grid point."""
    lo_f = lo.h.frames if isinstance(lo, SolveResult) else lo.frames
    hi_f = hi.h.frames if isinstance(hi, SolveResult) else hi.frames
    if lo_f.shape != hi_f.shape:
        raise ValueError("trajectories have different shapes")
    gap = lo_f - hi_f
    worst = float(np.max(gap))
    frame = int(np.unravel_index(np.argmax(gap), gap.shape)[0])
    return ComparisonReport(passed=bool(worst <= tol), worst_gap=worst, frame=frame, tol=tol)
