"""Heat-semigroup maximal operators and the quasi-norm toolkit built on them.

The star operator f^*(x) maximizes heat averages e^{tau Lap}|f|(x) over a
geometric tau grid (plus the tau -> 0 term |f(x)|).  The sharp operator
maximizes plain ball averages; it serves as the reference (oracle) maximal
function.  H^P quasi-norms conjugate the star operator by a convex profile
P; W norms combine them with local suprema of the field and its gradient.
All operators return a value at every grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter1d

from .fields import Grid, ScalarField, TimeField, gradient_magnitude
from .solver import heat_semigroup

__all__ = [
    "QuasiNormProfile",
    "ProfilePair",
    "StarConfig",
    "exponential_profile",
    "polynomial_profile",
    "profile_from_spec",
    "exponential_pair",
    "polynomial_pair",
    "star",
    "sharp",
    "locsup",
    "locsup_time",
    "hP_norm",
    "hP_time_norm",
    "w_norm",
    "w_time_norm",
    "phi_beta_kernel",
    "kernel_domination_check",
    "truncated_tail_check",
    "growth_condition_check",
    "KernelDominationReport",
    "TruncatedTailReport",
    "GrowthReport",
    "DEFAULT_EXP_C",
]

# default regularity-loss factor for exponential profile pairs
DEFAULT_EXP_C = 0.5

_TINY = 1e-300


@dataclass(frozen=True)
class QuasiNormProfile:
    """Convex increasing profile P on [0, inf): exp(a z) or z^degree."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "exp":
            if not self.param > 0:
                raise ValueError(f"exponential profile needs a > 0, got {self.param}")
        elif self.kind == "poly":
            if not self.param >= 1:
                raise ValueError(f"polynomial profile needs degree >= 1, got {self.param}")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def apply(self, z):
        z = np.asarray(z, dtype=float)
        return np.exp(self.param * z) if self.kind == "exp" else z**self.param

    def invert(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "exp":
            return np.log(np.maximum(u, _TINY)) / self.param
        return np.maximum(u, 0.0) ** (1.0 / self.param)


def exponential_profile(a: float) -> QuasiNormProfile:
    return QuasiNormProfile("exp", float(a))


def polynomial_profile(degree: float) -> QuasiNormProfile:
    return QuasiNormProfile("poly", float(degree))


def profile_from_spec(text: str) -> QuasiNormProfile:
    """Parse "exp:a=0.5" or "poly:d=2"."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    arg = arg.strip()
    for prefix in ("a=", "d="):
        if arg.startswith(prefix):
            arg = arg[2:]
    if not arg:
        raise ValueError(f"profile {text!r} needs a parameter")
    if name == "exp":
        return exponential_profile(float(arg))
    if name == "poly":
        return polynomial_profile(float(arg))
    raise ValueError(f"unknown profile {text!r}")


@dataclass(frozen=True)
class ProfilePair:
    """Ordered pair P_- <= P_+ of same-kind profiles plus the tilde exponent d'.

    compose_up = P_-^{-1} o P_+ and compose_down = P_+^{-1} o P_- are closed
    forms (a ratio rescaling for exp, a power for poly), so no overflow is
    possible in the compositions.
    """

    minus: QuasiNormProfile
    plus: QuasiNormProfile
    d_prime: float

    def __post_init__(self):
        if self.minus.kind != self.plus.kind:
            raise ValueError("profile pair must share a kind")
        if self.minus.param > self.plus.param:
            raise ValueError("pair must be ordered: P_- <= P_+")
        if self.d_prime < 0:
            raise ValueError(f"d' must be >= 0, got {self.d_prime}")

    @property
    def kind(self) -> str:
        return self.minus.kind

    def compose_up(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "exp":
            return z * (self.plus.param / self.minus.param)
        return np.maximum(z, 0.0) ** (self.plus.param / self.minus.param)

    def compose_down(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "exp":
            return z * (self.minus.param / self.plus.param)
        return np.maximum(z, 0.0) ** (self.minus.param / self.plus.param)


def exponential_pair(lam: float, beta: float, dim: int, c: float = DEFAULT_EXP_C) -> ProfilePair:
    """P_+ = exp(lam^{1/(beta-1)} z), P_- with the loss factor c; d' = dim."""
    if not 0 < c <= 1:
        raise ValueError(f"loss factor c must lie in (0, 1], got {c}")
    a = lam ** (1.0 / (beta - 1.0))
    return ProfilePair(exponential_profile(c * a), exponential_profile(a), float(dim))


def polynomial_pair(d_minus: float, d_plus: float, beta: float, dim: int) -> ProfilePair:
    """P_± = z^{d_±}; d' = 2 (d_+ - d_-) / (d_- (beta - 1))."""
    d_prime = 2.0 * (d_plus - d_minus) / (d_minus * (beta - 1.0))
    return ProfilePair(polynomial_profile(d_minus), polynomial_profile(d_plus), d_prime)


@dataclass(frozen=True)
class StarConfig:
    """Geometric heat-time grid tau_min * ratio^k, k = 0..k_tau."""

    tau_min: float
    k_tau: int
    ratio: float = 2.0

    def __post_init__(self):
        if not self.tau_min > 0:
            raise ValueError("tau_min must be > 0")
        if self.k_tau < 0 or int(self.k_tau) != self.k_tau:
            raise ValueError("k_tau must be a nonnegative integer")
        if not self.ratio > 1:
            raise ValueError("grid ratio must be > 1")

    @property
    def taus(self) -> np.ndarray:
        return self.tau_min * self.ratio ** np.arange(self.k_tau + 1)

    @classmethod
    def for_grid(cls, grid: Grid, k_tau: int = 16, ratio: float = 2.0) -> "StarConfig":
        """tau from dx^2 up to at most (L/4)^2."""
        tau_min = grid.spacing**2
        tau_max = (grid.length / 4.0) ** 2
        k_cap = int(math.floor(math.log(tau_max / tau_min, ratio) + 1e-9))
        return cls(tau_min, min(k_tau, max(k_cap, 0)), ratio)


def _check_star_cfg(grid: Grid, cfg: StarConfig):
    if cfg.tau_min < grid.spacing**2 * (1 - 1e-12):
        raise ValueError(
            f"tau_min = {cfg.tau_min:g} under-resolves the grid (dx^2 = {grid.spacing ** 2:g})"
        )
    tau_max = float(cfg.taus[-1])
    if tau_max > (grid.length / 4.0) ** 2 * (1 + 1e-12):
        raise ValueError(
            f"largest tau = {tau_max:g} exceeds the box constraint (L/4)^2 = {(grid.length / 4) ** 2:g}"
        )


def star(field: ScalarField, cfg: Optional[StarConfig] = None) -> ScalarField:
    """f^*(x) = max over the tau grid (and tau -> 0) of e^{tau Lap}|f|(x)."""
    grid = field.grid
    if cfg is None:
        cfg = StarConfig.for_grid(grid)
    _check_star_cfg(grid, cfg)
    af = np.abs(field.values)
    best = af.copy()
    axes = tuple(range(grid.dim))
    hat = np.fft.rfftn(af, axes=axes)
    k2 = grid.wavenumbers_sq()[..., : grid.n // 2 + 1]
    for tau in cfg.taus:
        smoothed = np.fft.irfftn(hat * np.exp(-k2 * tau), s=grid.shape, axes=axes)
        np.maximum(best, smoothed, out=best)
    return ScalarField(grid, best)


def _ball_offsets(grid: Grid, radius: float):
    """Integer offsets within the closed ball of the given physical radius."""
    m = int(math.floor(radius / grid.spacing + 1e-9))
    if grid.dim == 1:
        return [(s,) for s in range(-m, m + 1)]
    out = []
    for sx in range(-m, m + 1):
        rem = radius**2 - (sx * grid.spacing) ** 2
        if rem < 0:
            continue
        my = int(math.floor(math.sqrt(rem) / grid.spacing + 1e-9))
        out.extend((sx, sy) for sy in range(-my, my + 1))
    return out


def sharp(field: ScalarField) -> ScalarField:
    """f#(x) = sup over dyadic radii (dx .. L/4) of ball averages of |f|.

    Direct summation; the reference maximal operator.
    """
    grid = field.grid
    af = np.abs(field.values)
    best = af.copy()  # r -> 0 term
    r = grid.spacing
    while r <= grid.length / 4.0 + 1e-12:
        acc = np.zeros_like(af)
        offs = _ball_offsets(grid, r)
        for off in offs:
            acc += np.roll(af, shift=off, axis=tuple(range(grid.dim)))
        np.maximum(best, acc / len(offs), out=best)
        r *= 2.0
    return ScalarField(grid, best)


def _locsup_values(grid: Grid, values: np.ndarray, j: int) -> np.ndarray:
    """Moving ball maximum of |values| with radius 2^{j/2} (trailing axes)."""
    radius = 2.0 ** (j / 2.0)
    m = int(math.floor(radius / grid.spacing + 1e-9))
    if m < 1:
        raise ValueError(
            f"locsup radius 2^(j/2) = {radius:g} under-resolves the grid (dx = {grid.spacing:g})"
        )
    av = np.abs(values)
    ax0 = av.ndim - grid.dim
    if grid.dim == 1:
        return maximum_filter1d(av, size=2 * m + 1, axis=ax0, mode="wrap")
    best = None
    for sx in range(-m, m + 1):
        rem = radius**2 - (sx * grid.spacing) ** 2
        if rem < 0:
            continue
        my = int(math.floor(math.sqrt(rem) / grid.spacing + 1e-9))
        row = np.roll(av, -sx, axis=ax0)
        row = maximum_filter1d(row, size=2 * my + 1, axis=ax0 + 1, mode="wrap")
        best = row if best is None else np.maximum(best, row)
    return best


def locsup(field: ScalarField, j: int) -> ScalarField:
    """locsup^j f(x) = sup of |f| over the ball B(x, 2^{j/2})."""
    return ScalarField(field.grid, _locsup_values(field.grid, field.values, j))


def locsup_time(g: TimeField, j: int) -> TimeField:
    """Space-time local supremum: radius 2^{j/2} in space, 2^j in time."""
    t_rad = 2.0**j
    mt = int(math.floor(t_rad / g.dt + 1e-9))
    if mt < 1:
        raise ValueError(
            f"locsup time radius 2^j = {t_rad:g} under-resolves the frame spacing {g.dt:g}"
        )
    sm = _locsup_values(g.grid, g.frames, j)
    # time window is clipped to the covered range; edge padding gives the same max
    out = maximum_filter1d(sm, size=2 * mt + 1, axis=0, mode="nearest")
    return TimeField(g.grid, g.dt, out)


def hP_norm(field: ScalarField, profile: QuasiNormProfile, cfg: Optional[StarConfig] = None) -> ScalarField:
    """|||f|||_{H^P}(x) = P^{-1}((P(|f|))^*(x)).

    The exponential case is computed in the log domain relative to max |f|,
    so no overflow occurs regardless of a * sup|f|.
    """
    grid = field.grid
    af = np.abs(field.values)
    if profile.kind == "exp":
        a = profile.param
        shift = float(af.max())
        zed = np.exp(np.maximum(a * (af - shift), -700.0))
        st = star(ScalarField(grid, zed), cfg)
        return ScalarField(grid, shift + np.log(np.maximum(st.values, _TINY)) / a)
    st = star(ScalarField(grid, profile.apply(af)), cfg)
    return ScalarField(grid, profile.invert(st.values))


def _gauss5(fn, lo: float, hi: float) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(5)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return float(half * np.sum(weights * fn(mid + half * nodes)))


def _interval_weights(eps: float, dt: float, n: int, tilde: bool, d_prime: float) -> np.ndarray:
    """W_k = integral over [k dt, (k+1) dt] of e^{-eps s} (tilde: x (1+eps s)^{d'/2})."""
    ks = np.arange(n)
    if not tilde:
        if eps == 0:
            return np.full(n, dt)
        return np.exp(-eps * ks * dt) * (-np.expm1(-eps * dt)) / eps
    fn = lambda s: np.exp(-eps * s) * (1.0 + eps * s) ** (d_prime / 2.0)
    return np.array([_gauss5(fn, k * dt, (k + 1) * dt) for k in ks])


def hP_time_norm(
    g: TimeField,
    pair: ProfilePair,
    t: float,
    j: int,
    cfg: Optional[StarConfig] = None,
    tilde: bool = False,
) -> ScalarField:
    """Time-integrated quasi-norm of the forcing over [0, t].

    2^{-j} P_+^{-1} o P_- ( sum_k W_k P_-^{-1} o P_+ (|||2^j g(t - s_k)|||_{H^{P_+}}(x)) )
    with s_k the frame times below t (left endpoints) and W_k the exact
    (tilde: Gauss-quadrature) integral of the discount weight over each step.
    """
    if int(j) != j or j < 0:
        raise ValueError(f"time norms need an integer cutoff scale j >= 0, got {j}")
    eps = 2.0 ** (-j)
    n = round(t / g.dt)
    if n < 1 or abs(n * g.dt - t) > 1e-9 * max(t, 1.0):
        raise ValueError(f"t = {t} is not a whole number of frame steps {g.dt}")
    if n > g.n_frames - 1:
        raise ValueError(f"forcing covers [0, {g.times[-1]:g}] < t = {t}")
    weights = _interval_weights(eps, g.dt, n, tilde, pair.d_prime)
    total = np.zeros(g.grid.shape)
    scale = 2.0**j
    for k in range(n):
        frame = ScalarField(g.grid, scale * g.frames[n - k])
        v = hP_norm(frame, pair.plus, cfg)
        total += weights[k] * pair.compose_up(v.values)
    return ScalarField(g.grid, 2.0 ** (-j) * pair.compose_down(total))


def w_norm(h0: ScalarField, profile: QuasiNormProfile, j: int, cfg: Optional[StarConfig] = None) -> ScalarField:
    """max of |||locsup^j h0|||_{H^P} and |||2^{j/2} locsup^j |grad h0| |||_{H^P}."""
    a = hP_norm(locsup(h0, j), profile, cfg)
    gmag = gradient_magnitude(h0)
    b = hP_norm(
        ScalarField(h0.grid, 2.0 ** (j / 2.0) * _locsup_values(h0.grid, gmag.values, j)),
        profile,
        cfg,
    )
    return ScalarField(h0.grid, np.maximum(a.values, b.values))


def w_time_norm(
    g: TimeField,
    pair: ProfilePair,
    t: float,
    j: int,
    cfg: Optional[StarConfig] = None,
    tilde: bool = True,
) -> ScalarField:
    """Time version of the W norm, built on space-time local suprema of g."""
    ls = locsup_time(g, j)
    a = hP_time_norm(ls, pair, t, j, cfg, tilde)
    gm = np.empty_like(g.frames)
    for i in range(g.n_frames):
        gm[i] = gradient_magnitude(g.frame(i)).values
    ls_grad = locsup_time(TimeField(g.grid, g.dt, gm), j)
    scaled = TimeField(g.grid, g.dt, 2.0 ** (j / 2.0) * ls_grad.frames)
    b = hP_time_norm(scaled, pair, t, j, cfg, tilde)
    return ScalarField(g.grid, np.maximum(a.values, b.values))


def phi_beta_kernel(t: float, beta: float, grid: Grid) -> ScalarField:
    """Generalized heat kernel exp(-(r^beta/t)^{1/(beta-1)}) / t^{d/beta},
    discretely normalized (sum * dx^d = 1), centered at the origin cell.
    """
    if not t > 0:
        raise ValueError("kernel time must be > 0")
    if not beta >= 2:
        raise ValueError(f"kernel exponent beta must be >= 2, got {beta}")
    width = t ** (1.0 / beta)
    if width < 2.0 * grid.spacing:
        raise ValueError(
            f"kernel width t^(1/beta) = {width:g} under-resolves the grid (dx = {grid.spacing:g})"
        )
    half = grid.length / 2.0
    if (half**beta / t) ** (1.0 / (beta - 1.0)) < math.log(1e8):
        raise ValueError(
            f"kernel tail is not box-resolved: needs (L/2)^beta / t >= ln(1e8)^(beta-1)"
        )
    r = grid.radial_distance()
    raw = np.exp(-((r**beta) / t) ** (1.0 / (beta - 1.0))) / t ** (grid.dim / beta)
    return ScalarField(grid, raw / (raw.sum() * grid.spacing**grid.dim))


def _radial_nonincreasing(grid: Grid, values: np.ndarray) -> bool:
    r = grid.radial_distance().ravel()
    v = values.ravel()
    order = np.argsort(r, kind="stable")
    tol = 1e-12 * max(float(np.max(np.abs(v))), 1.0)
    return bool(np.all(np.diff(v[order]) <= tol))


@dataclass(frozen=True)
class KernelDominationReport:
    max_ratio: float
    mean_ratio: float


def _convolve(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    axes = tuple(range(grid.dim))
    out = np.fft.irfftn(
        np.fft.rfftn(a, axes=axes) * np.fft.rfftn(b, axes=axes), s=grid.shape, axes=axes
    )
    return out * grid.spacing**grid.dim


def kernel_domination_check(field: ScalarField, kernel: ScalarField) -> KernelDominationReport:
    """Ratio of the kernel average of |f| to the reference maximal function f#.

    The kernel must be radially nonincreasing and normalized; the continuum
    bound has constant 1.
    """
    grid = field.grid
    if kernel.grid != grid:
        raise ValueError("kernel and field live on different grids")
    if not _radial_nonincreasing(grid, kernel.values):
        raise ValueError("kernel must be a nonincreasing function of the radius")
    mass = float(kernel.values.sum() * grid.spacing**grid.dim)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"kernel is not normalized: mass = {mass:g}")
    conv = _convolve(grid, np.abs(field.values), kernel.values)
    ref = sharp(field).values
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ref > 0, conv / ref, 0.0)
    return KernelDominationReport(float(np.max(ratio)), float(np.mean(ratio)))


@dataclass(frozen=True)
class TruncatedTailReport:
    max_ratio: float
    envelope: float
    sup_tail: float


def truncated_tail_check(field: ScalarField, beta: float, t: float, trunc: float) -> TruncatedTailReport:
    """Tail mass of the generalized kernel against the decay envelope.

    Compares int_{|y| > A} Phi_t^beta(y) |f(x-y)| dy with
    f#(x) * exp(-(A^beta/t)^{1/(beta-1)} / 2) for A = trunc.
    """
    grid = field.grid
    if trunc < 3.0 * t ** (1.0 / beta):
        raise ValueError("truncation radius must satisfy A >= 3 t^(1/beta)")
    if trunc >= grid.length / 2.0:
        raise ValueError("truncation radius must stay inside the box (A < L/2)")
    kern = phi_beta_kernel(t, beta, grid)
    masked = np.where(grid.radial_distance() > trunc, kern.values, 0.0)
    tail = _convolve(grid, np.abs(field.values), masked)
    env = math.exp(-0.5 * (trunc**beta / t) ** (1.0 / (beta - 1.0)))
    ref = sharp(field).values * env
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ref > 0, tail / ref, 0.0)
    return TruncatedTailReport(float(np.max(ratio)), env, float(np.max(tail)))


@dataclass(frozen=True)
class GrowthReport:
    """sup over far cells of sup_cell |f| / (dist^d * (locsup^j f)^*(0))."""

    constant: float
    n_cells: int
    reference: float


def growth_condition_check(field: ScalarField, j: int, cfg: Optional[StarConfig] = None) -> GrowthReport:
    grid = field.grid
    side = 2.0 ** (j / 2.0)
    m = max(1, int(round(side / grid.spacing)))
    ref = float(star(locsup(field, j), cfg).values[(0,) * grid.dim])
    rad = grid.radial_distance()
    af = np.abs(field.values)
    blocks = np.arange(grid.n) // m
    n_blocks = int(blocks[-1]) + 1
    best = 0.0
    count = 0
    for bx in range(n_blocks):
        selx = blocks == bx
        if grid.dim == 1:
            cells = [(selx, None)]
        else:
            cells = [(selx, blocks == by) for by in range(n_blocks)]
        for sx, sy in cells:
            mask = sx if sy is None else np.outer(sx, sy)
            dist = float(np.min(rad[mask])) / side
            if dist < 1.0:
                continue
            count += 1
            val = float(np.max(af[mask])) / (dist**grid.dim * max(ref, _TINY))
            best = max(best, val)
    return GrowthReport(best, count, ref)
