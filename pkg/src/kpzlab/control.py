"""Controlled-diffusion representation of the growth equation.

Paths follow dX_s = alpha_s ds + dB_s where B has generator Lap (per-step
increments sqrt(2 dt) xi), so that the zero-control cost reproduces the
linear solver value and the feedback control lam grad V(grad h_{t-s}(X_s))
attains the nonlinear one.  Gaussian increments are counter-based per path,
making every per-path cost a pure function of (seed, path index) and the
ensemble statistics independent of chunking or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import Grid, ScalarField, TimeField, sample_field
from .rates import DepositionRate, conjugate, optimal_feedback
from .solver import CutoffParams, SolveResult

__all__ = [
    "InfeasibleControlError",
    "ZeroStrategy",
    "ConstantStrategy",
    "OpenLoopStrategy",
    "FeedbackStrategy",
    "PathEnsemble",
    "McEstimate",
    "TailReport",
    "TermBoundsReport",
    "simulate_paths",
    "cost_functional",
    "value_from_feedback",
    "tail_probability",
    "term_bounds_check",
]

_SDE_STREAM = 0x70617468
# fixed path-chunk size so ensemble statistics never depend on worker count
_CHUNK = 2048


class InfeasibleControlError(RuntimeError):
    """A realized control fell outside the domain of the conjugate cost."""

    def __init__(self, path: int, step: int):
        self.path = path
        self.step = step
        super().__init__(
            f"conjugate cost is infinite along path {path} at step {step}"
        )


class ZeroStrategy:
    kind = "zero"

    def controls(self, s: float, x: np.ndarray, horizon: float) -> np.ndarray:
        return np.zeros_like(x)


@dataclass(frozen=True)
class ConstantStrategy:
    vector: tuple

    kind = "constant"

    def controls(self, s: float, x: np.ndarray, horizon: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.vector, dtype=float), x.shape)


@dataclass(frozen=True)
class OpenLoopStrategy:
    """Deterministic time-dependent control t -> vector."""

    fn: Callable[[float], Sequence[float]]

    kind = "open_loop"

    def controls(self, s: float, x: np.ndarray, horizon: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.fn(s), dtype=float), x.shape)


class FeedbackStrategy:
    """Value-attaining drift lam grad V(grad h_{t-s}(x)).

    Reads the solved trajectory's gradient with nearest-frame time lookup at
    the reversed time t - s and bilinear space interpolation.
    """

    kind = "feedback"

    def __init__(self, solution: SolveResult, rate: DepositionRate):
        self.solution = solution
        self.rate = rate

    def controls(self, s: float, x: np.ndarray, horizon: float) -> np.ndarray:
        sol = self.solution
        i = sol.h.index_at(horizon - s)
        grads = np.stack(
            [sample_field(sol.grid, sol.grad[i, d], x) for d in range(sol.grid.dim)],
            axis=-1,
        )
        return optimal_feedback(self.rate, sol.params.lam, -grads)


@dataclass(frozen=True)
class PathEnsemble:
    """Euler-Maruyama paths (unwrapped) with their realized controls."""

    start: tuple
    dt: float
    horizon: float
    seed: int
    kind: str
    positions: np.ndarray  # (n_paths, n_steps + 1, d)
    controls: np.ndarray  # (n_paths, n_steps, d)

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    @property
    def n_steps(self) -> int:
        return self.controls.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int
    dt: float

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError(f"need at least 100 paths, got {self.n_paths}")


def _steps_of(horizon: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ValueError(f"horizon {horizon} is not a whole number of steps {dt}")
    return n


def _check_strategy(strategy, horizon: float):
    if strategy.kind == "feedback" and horizon > strategy.solution.params.horizon + 1e-9:
        raise ValueError(
            f"feedback lookup outside trajectory: horizon {horizon} > "
            f"{strategy.solution.params.horizon}"
        )


def _simulate_chunk(strategy, start, horizon, dt, seed, lo, hi):
    n_steps = _steps_of(horizon, dt)
    d = len(start)
    m = hi - lo
    xi = np.empty((m, n_steps, d))
    for i, p in enumerate(range(lo, hi)):
        gen = np.random.Generator(
            np.random.Philox(counter=[0, 0, p, _SDE_STREAM], key=seed)
        )
        xi[i] = gen.standard_normal((n_steps, d))
    pos = np.empty((m, n_steps + 1, d))
    ctrl = np.empty((m, n_steps, d))
    x = np.tile(np.asarray(start, dtype=float), (m, 1))
    pos[:, 0] = x
    scale = math.sqrt(2.0 * dt)
    for k in range(n_steps):
        a = strategy.controls(k * dt, x, horizon)
        ctrl[:, k] = a
        x = x + a * dt + scale * xi[:, k]
        pos[:, k + 1] = x
    return pos, ctrl


def simulate_paths(strategy, start, horizon: float, dt: float, n_paths: int, seed: int) -> PathEnsemble:
    """Euler-Maruyama ensemble X_{k+1} = X_k + alpha dt + sqrt(2 dt) xi."""
    start = tuple(float(c) for c in np.atleast_1d(start))
    n_steps = _steps_of(horizon, dt)
    if n_paths < 1:
        raise ValueError("need at least one path")
    if seed < 0 or int(seed) != seed:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    _check_strategy(strategy, horizon)
    positions = np.empty((n_paths, n_steps + 1, len(start)))
    controls = np.empty((n_paths, n_steps, len(start)))
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        pos, ctrl = _simulate_chunk(strategy, start, horizon, dt, seed, lo, hi)
        positions[lo:hi] = pos
        controls[lo:hi] = ctrl
    return PathEnsemble(start, dt, horizon, int(seed), strategy.kind, positions, controls)


def _discount_weights(eps: float, dt: float, n: int) -> np.ndarray:
    """Exact integral of e^{-eps s} over each step [k dt, (k+1) dt]."""
    if eps == 0:
        return np.full(n, dt)
    ks = np.arange(n)
    return np.exp(-eps * ks * dt) * (-np.expm1(-eps * dt)) / eps


def _chunk_costs(pos, ctrl, lo, g, h0, rate, params, horizon):
    """Per-path cost pieces for one chunk; raises on infeasible controls."""
    m, n_steps = ctrl.shape[0], ctrl.shape[1]
    eps, lam = params.eps, params.lam
    dt = horizon / n_steps
    conj = conjugate(rate)
    mag = np.linalg.norm(ctrl, axis=2)
    vtil = lam * conj.value(mag / lam)
    if not np.all(np.isfinite(vtil)):
        bad = np.argwhere(~np.isfinite(vtil))[0]
        raise InfeasibleControlError(lo + int(bad[0]), int(bad[1]))
    w = _discount_weights(eps, dt, n_steps)
    run_v = vtil @ w
    g_signed = np.zeros(m)
    g_abs = np.zeros(m)
    if g is not None:
        for k in range(n_steps):
            i = g.index_at(horizon - k * dt)
            vals = sample_field(g.grid, g.frames[i], pos[:, k])
            g_signed += w[k] * vals
            g_abs += w[k] * np.abs(vals)
    disc = math.exp(-eps * horizon)
    h0_vals = disc * sample_field(h0.grid, h0.values, pos[:, n_steps])
    return {
        "cost": -run_v + g_signed + h0_vals,
        "vtilde": run_v,
        "g_signed": g_signed,
        "g_abs": g_abs,
        "h0_signed": h0_vals,
        "h0_abs": np.abs(h0_vals),
    }


def _estimate(values: np.ndarray, seed: int, dt: float) -> McEstimate:
    n = len(values)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n))
    return McEstimate(float(np.mean(values)), stderr, n, seed, dt)


def cost_functional(paths: PathEnsemble, g: Optional[TimeField], h0: ScalarField, rate: DepositionRate, params: CutoffParams) -> McEstimate:
    """Discounted running reward plus terminal payoff, averaged over paths.

    Per path: sum_k W_k (-lam Vconj(alpha_k/lam) + g(t - s_k, X_k)) +
    e^{-eps t} h0(X_t), with W_k the exact per-step discount integral.
    """
    pieces = _chunk_costs(
        paths.positions, paths.controls, 0, g, h0, rate, params, paths.horizon
    )
    return _estimate(pieces["cost"], paths.seed, paths.dt)


def _streamed_pieces(strategy, start, horizon, dt, n_paths, seed, g, h0, rate, params, keys):
    _check_strategy(strategy, horizon)
    out = {k: np.empty(n_paths) for k in keys}
    endpoints = np.empty((n_paths, len(start)))
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        pos, ctrl = _simulate_chunk(strategy, start, horizon, dt, seed, lo, hi)
        pieces = _chunk_costs(pos, ctrl, lo, g, h0, rate, params, horizon)
        for k in keys:
            out[k][lo:hi] = pieces[k]
        endpoints[lo:hi] = pos[:, -1]
    return out, endpoints


def _check_solution(solution: SolveResult, rate: DepositionRate, params: CutoffParams):
    if params != solution.params:
        raise ValueError("parameters do not match the solved trajectory")
    if (rate.kind, rate.beta) != (solution.rate.kind, solution.rate.beta):
        raise ValueError("rate does not match the solved trajectory")


def value_from_feedback(solution: SolveResult, x, rate: DepositionRate, params: CutoffParams, n_paths: int, seed: int, dt: Optional[float] = None) -> McEstimate:
    """Monte Carlo value of the feedback control; contract: mean ~ h(t, x)."""
    _check_solution(solution, rate, params)
    dt = params.dt if dt is None else dt
    start = tuple(float(c) for c in np.atleast_1d(x))
    strategy = FeedbackStrategy(solution, rate)
    h0 = solution.h.frame(0)
    pieces, _ = _streamed_pieces(
        strategy, start, params.horizon, dt, n_paths, seed,
        solution.g, h0, rate, params, ("cost",),
    )
    return _estimate(pieces["cost"], seed, dt)


@dataclass(frozen=True)
class TailReport:
    radii: tuple
    p_hat: tuple
    stderr: tuple
    n_paths: int
    slope: float


def tail_probability(solution: SolveResult, x, rate: DepositionRate, params: CutoffParams, radii, n_paths: int, seed: int, dt: Optional[float] = None) -> TailReport:
    """Empirical endpoint tail P[|X_t - x| >= L] of the feedback-controlled
    path, with the log-log slope across radii where the estimate is positive.
    """
    _check_solution(solution, rate, params)
    grid = solution.grid
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    if radii[0] <= 0 or radii[-1] > grid.length / 2.0:
        raise ValueError(
            f"radii must lie in (0, L/2] = (0, {grid.length / 2.0}]"
        )
    dt = params.dt if dt is None else dt
    start = tuple(float(c) for c in np.atleast_1d(x))
    strategy = FeedbackStrategy(solution, rate)
    _, endpoints = _streamed_pieces(
        strategy, start, params.horizon, dt, n_paths, seed,
        None, solution.h.frame(0), rate, params, (),
    )
    disp = grid.min_image(endpoints - np.asarray(start))
    dist = np.linalg.norm(disp, axis=1)
    p_hat, stderr = [], []
    for L in radii:
        p = float(np.mean(dist >= L))
        p_hat.append(p)
        stderr.append(math.sqrt(p * (1.0 - p) / n_paths))
    pos = [(L, p) for L, p in zip(radii, p_hat) if p > 0]
    if len(pos) >= 2:
        ls, ps = np.log([q[0] for q in pos]), np.log([q[1] for q in pos])
        slope = float(np.polyfit(ls, ps, 1)[0])
    else:
        slope = float("nan")
    return TailReport(tuple(radii), tuple(p_hat), tuple(stderr), n_paths, slope)


@dataclass(frozen=True)
class TermBoundsReport:
    """The three cost pieces along the optimal path, plus the identity check.

    g_term     E int e^{-eps s} |g(t-s, X_s)| ds
    h0_term    E e^{-eps t} |h0(X_t)|
    conj_term  E int e^{-eps s} lam Vconj(alpha*/lam) ds  (>= 0)
    The signed combination -conj + g + h0 reconstructs h(t, x).
    """

    g_term: McEstimate
    h0_term: McEstimate
    conj_term: McEstimate
    conj_min: float
    h_value: float
    identity_gap: float
    identity_stderr: float
    rhs_g: Optional[float] = None
    rhs_h0: Optional[float] = None
    rhs_conj: Optional[float] = None


def _term_bounds_rhs(solution, pair, x):
    """Pointwise right-hand sides bounding the three cost pieces."""
    from .norms import w_norm, w_time_norm

    params = solution.params
    if params.j is None:
        raise ValueError("norm-based bounds need a finite cutoff scale j")
    beta = solution.rate.beta
    lam_p = params.lam ** (1.0 / (beta - 1.0))
    t, j = params.horizon, params.j
    grid = solution.grid
    pos = np.atleast_2d(np.asarray(x, dtype=float))
    disc = math.exp(-params.eps * t)
    h0 = solution.h.frame(0)

    def data_term(scale):
        wn = w_norm(ScalarField(grid, scale * lam_p * h0.values), pair.plus, j)
        return disc * float(pair.compose_up(sample_field(grid, wn.values, pos))[0])

    def forcing_term(scale):
        if solution.g is None:
            return 0.0
        scaled = TimeField(grid, solution.g.dt, scale * lam_p * solution.g.frames)
        wt = w_time_norm(scaled, pair, t, j, tilde=True)
        return float(pair.compose_up(sample_field(grid, wt.values, pos))[0])

    pref = params.lam ** (-1.0 / (beta - 1.0))
    return (
        pref * (data_term(1.0) + forcing_term(2.0)),
        pref * (data_term(2.0) + forcing_term(1.0)),
        pref * (data_term(2.0) + forcing_term(2.0)),
    )


def term_bounds_check(solution: SolveResult, x, rate: DepositionRate, params: CutoffParams, n_paths: int, seed: int, pair=None, dt: Optional[float] = None) -> TermBoundsReport:
    """Estimates the three expectations along the optimal path and checks the
    exact decomposition h(t,x) = -conj + g_signed + h0_signed.
    """
    _check_solution(solution, rate, params)
    dt = params.dt if dt is None else dt
    start = tuple(float(c) for c in np.atleast_1d(x))
    strategy = FeedbackStrategy(solution, rate)
    h0 = solution.h.frame(0)
    keys = ("cost", "vtilde", "g_signed", "g_abs", "h0_signed", "h0_abs")
    pieces, _ = _streamed_pieces(
        strategy, start, params.horizon, dt, n_paths, seed,
        solution.g, h0, rate, params, keys,
    )
    conj_min = float(np.min(pieces["vtilde"]))
    if conj_min < -1e-12:
        raise RuntimeError(f"negative conjugate cost {conj_min} along a path")
    h_val = float(
        sample_field(solution.grid, solution.h.frames[-1], np.atleast_2d(start))[0]
    )
    recon = _estimate(pieces["cost"], seed, dt)
    rhs = _term_bounds_rhs(solution, pair, start) if pair is not None else (None, None, None)
    return TermBoundsReport(
        g_term=_estimate(pieces["g_abs"], seed, dt),
        h0_term=_estimate(pieces["h0_abs"], seed, dt),
        conj_term=_estimate(pieces["vtilde"], seed, dt),
        conj_min=conj_min,
        h_value=h_val,
        identity_gap=abs(recon.mean - h_val),
        identity_stderr=recon.stderr,
        rhs_g=rhs[0],
        rhs_h0=rhs[1],
        rhs_conj=rhs[2],
    )
