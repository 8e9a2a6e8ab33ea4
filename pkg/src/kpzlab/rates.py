"""Deposition rates V and their convex (Legendre) duality machinery.

A deposition rate is an isotropic function of the slope: V acts on the
magnitude y = |grad h| >= 0.  Rates are stored radially, which enforces
isotropy structurally.  The conjugate V~(p) = sup_y (p*y - V(y)) may be
+inf outside a bounded domain; +inf is represented by float('inf') and
arithmetic with it saturates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "DepositionRate",
    "ConvexConjugate",
    "AssumptionReport",
    "quadratic_rate",
    "kpz_sqrt_rate",
    "power_rate",
    "tabulated_rate",
    "custom_rate",
    "rate_from_spec",
    "regularize",
    "conjugate",
    "scaled_conjugate",
    "conjugate_lower_bound",
    "optimal_feedback",
    "check_assumptions",
]

# slope beyond this at huge y is treated as unbounded (conjugate finite everywhere)
_SLOPE_CAP = 1e6
_OVERFLOW = 1e15


@dataclass(frozen=True)
class DepositionRate:
    """Isotropic deposition rate y -> V(y), stored radially.

    kind    readable tag ("quadratic", "kpz_sqrt", "power", ...)
    beta    growth exponent at infinity (>= 2)
    """

    kind: str
    beta: float
    _value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _slope: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        if not (self.beta >= 2.0):
            raise ValueError(f"growth exponent beta must be >= 2, got {self.beta}")

    def value(self, y):
        """V at slope magnitude |y| (scalar or array)."""
        y = np.abs(np.asarray(y, dtype=float))
        return self._value(y)

    def slope(self, y):
        """Radial derivative V'(|y|) (scalar or array)."""
        y = np.abs(np.asarray(y, dtype=float))
        return self._slope(y)

    def __call__(self, y):
        return self.value(y)

    def grad(self, v):
        """Vector gradient of V at slope vector(s) v, shape (..., d).

        Isotropy gives grad V(v) = V'(|v|) v/|v|, zero where v = 0.
        """
        v = np.asarray(v, dtype=float)
        mag = np.sqrt(np.sum(v * v, axis=-1))
        out = np.zeros_like(v)
        nz = mag > 0
        if np.any(nz):
            coef = np.zeros_like(mag)
            coef[nz] = self._slope(mag[nz]) / mag[nz]
            out = coef[..., None] * v
        return out


def quadratic_rate() -> DepositionRate:
    """V(y) = y^2/2, self-conjugate."""
    return DepositionRate("quadratic", 2.0, lambda y: 0.5 * y * y, lambda y: y)


def kpz_sqrt_rate() -> DepositionRate:
    """V(y) = sqrt(1+y^2) - 1; conjugate finite only on |p| <= 1."""
    return DepositionRate(
        "kpz_sqrt",
        2.0,
        lambda y: np.sqrt(1.0 + y * y) - 1.0,
        lambda y: y / np.sqrt(1.0 + y * y),
    )


def power_rate(beta: float) -> DepositionRate:
    """V(y) = y^beta / beta for beta >= 2."""
    if not (beta >= 2.0):
        raise ValueError(f"power rate requires beta >= 2, got {beta}")
    return DepositionRate(
        f"power:{beta:g}",
        float(beta),
        lambda y: y**beta / beta,
        lambda y: y ** (beta - 1.0),
    )


def tabulated_rate(ys, vs, beta: float = 2.0) -> DepositionRate:
    """Rate from a value table, linear interpolation, linear tail extrapolation."""
    ys = np.asarray(ys, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if ys.ndim != 1 or ys.shape != vs.shape or len(ys) < 2:
        raise ValueError("tabulated rate needs matching 1-d tables with >= 2 points")
    if ys[0] != 0.0:
        raise ValueError("table must start at y = 0")
    if np.any(np.diff(ys) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    slopes = np.diff(vs) / np.diff(ys)
    tail = slopes[-1]

    def val(y):
        out = np.interp(y, ys, vs)
        far = y > ys[-1]
        return np.where(far, vs[-1] + tail * (y - ys[-1]), out)

    def slp(y):
        idx = np.clip(np.searchsorted(ys, y, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    return DepositionRate("tabulated", float(beta), val, slp)


def custom_rate(f, df=None, beta: float = 2.0, kind: str = "custom") -> DepositionRate:
    """Rate from a callable; derivative by central differences if not given."""
    fv = lambda y: np.asarray(f(y), dtype=float)
    if df is None:
        h = 1e-6

        def dfv(y):
            return (fv(y + h) - fv(np.maximum(y - h, 0.0))) / (
                h + np.minimum(y, h)
            )

        dnum = dfv
    else:
        dnum = lambda y: np.asarray(df(y), dtype=float)
    return DepositionRate(kind, float(beta), fv, dnum)


def rate_from_spec(text: str) -> DepositionRate:
    """Parse a rate config string: "quadratic", "kpz_sqrt", "power:beta=3"."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "quadratic":
        return quadratic_rate()
    if name == "kpz_sqrt":
        return kpz_sqrt_rate()
    if name == "power":
        arg = arg.strip()
        if arg.startswith("beta="):
            arg = arg[5:]
        if not arg:
            raise ValueError("power rate needs an exponent, e.g. power:beta=3")
        return power_rate(float(arg))
    raise ValueError(f"unknown rate {text!r}")


def regularize(rate: DepositionRate, eps_reg: float) -> DepositionRate:
    """V_eps(y) = V(y) + eps_reg*y^2, making degenerate rates uniformly convex."""
    if eps_reg < 0:
        raise ValueError("regularization strength must be >= 0")
    return DepositionRate(
        f"{rate.kind}+{eps_reg:g}y^2",
        rate.beta,
        lambda y: rate._value(y) + eps_reg * y * y,
        lambda y: rate._slope(y) + 2.0 * eps_reg * y,
    )


@dataclass(frozen=True)
class ConvexConjugate:
    """V~(p) = sup_y (p*y - V(y)), radial in |p|.

    domain_radius is sup{|p| : V~(p) < inf}; values beyond it are +inf.
    """

    rate: DepositionRate
    domain_radius: float
    _closed: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )

    def value(self, p):
        p = np.abs(np.asarray(p, dtype=float))
        scalar = p.ndim == 0
        p = np.atleast_1d(p)
        if self._closed is not None:
            out = self._closed(p)
        else:
            flat = p.reshape(-1)
            out = np.array(
                [_conjugate_numeric(self.rate, float(q)) for q in flat]
            ).reshape(p.shape)
        out = np.where(p > self.domain_radius * (1 + 1e-12) + 1e-300, np.inf, out)
        return float(out.reshape(-1)[0]) if scalar else out

    def __call__(self, p):
        return self.value(p)


def _conjugate_numeric(rate: DepositionRate, p: float, y_max: float = 8.0) -> float:
    if p == 0.0:
        return 0.0  # V >= 0 with V(0) = 0
    y_max = max(y_max, 2.0 * p)
    best = 0.0
    for _ in range(40):
        ys = np.linspace(0.0, y_max, 4097)
        vals = p * ys - rate.value(ys)
        k = int(np.argmax(vals))
        if vals[k] > _OVERFLOW:
            return math.inf
        if k < len(ys) - 2:
            lo, hi = ys[max(k - 1, 0)], ys[k + 1]
            res = minimize_scalar(
                lambda y: rate.value(y) - p * y, bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12 * max(1.0, hi)},
            )
            return float(max(-res.fun, vals[k]))
        # sup sits at the right edge: expand unless the residual slope has died
        gain = vals[k] - best
        best = max(best, vals[k])
        if p - rate.slope(y_max) <= 1e-12 and gain <= 1e-10 * max(1.0, abs(best)):
            return float(best)
        y_max *= 4.0
    return math.inf


_QUAD_FAMILY = re.compile(r"quadratic((?:\+[0-9.]+(?:[eE][+-]?[0-9]+)?y\^2)+)")
_QUAD_COEFF = re.compile(r"\+([0-9.]+(?:[eE][+-]?[0-9]+)?)y\^2")


def conjugate(rate: DepositionRate) -> ConvexConjugate:
    """Legendre transform of a rate, with closed forms for the builtins."""
    if rate.kind == "quadratic":
        return ConvexConjugate(rate, math.inf, lambda p: 0.5 * p * p)
    quad = _QUAD_FAMILY.fullmatch(rate.kind)
    if quad:
        # stacked regularizations keep the family: V = a*y^2 has conjugate p^2/(4a)
        a = 0.5 + sum(float(c) for c in _QUAD_COEFF.findall(quad.group(1)))
        return ConvexConjugate(rate, math.inf, lambda p: p * p / (4.0 * a))
    if rate.kind == "kpz_sqrt":
        return ConvexConjugate(
            rate,
            1.0,
            lambda p: np.where(p <= 1.0, 1.0 - np.sqrt(np.maximum(1.0 - p * p, 0.0)), np.inf),
        )
    if rate.kind.startswith("power:"):
        bc = rate.beta / (rate.beta - 1.0)
        return ConvexConjugate(rate, math.inf, lambda p: p**bc / bc)
    # generic: domain radius is the limiting slope of V
    with np.errstate(over="ignore"):
        s_inf = float(rate.slope(1e9))
    radius = math.inf if s_inf > _SLOPE_CAP else s_inf
    return ConvexConjugate(rate, radius)


def scaled_conjugate(rate: DepositionRate, lam: float, p):
    """Conjugate of lam*V: (lam V)~(p) = lam * V~(p/lam)."""
    if lam <= 0:
        raise ValueError(f"coupling lambda must be > 0, got {lam}")
    return lam * conjugate(rate).value(np.asarray(p, dtype=float) / lam)


def conjugate_lower_bound(p, beta: float):
    """Universal bound V~(p) >= min(|p|^2, |p|^(beta/(beta-1)))/2 for admissible rates."""
    p = np.abs(np.asarray(p, dtype=float))
    return 0.5 * np.minimum(p**2.0, p ** (beta / (beta - 1.0)))


def optimal_feedback(rate: DepositionRate, lam: float, grad_h):
    """Optimal control lam * grad V(-grad h); zero where the slope vanishes."""
    if lam <= 0:
        raise ValueError(f"coupling lambda must be > 0, got {lam}")
    return lam * rate.grad(-np.asarray(grad_h, dtype=float))


@dataclass(frozen=True)
class AssumptionReport:
    """Clause-by-clause admissibility report for a rate.

    smooth     twice differentiable on the test grid (finite-difference proxy)
    isotropic  gradient is radial (structural, verified on sample directions)
    convex     slope nondecreasing on the test grid
    growth     V(0)=0, V'(0)=0 and 0 <= V(y) <= max(y^2, y^beta)/2
    violations first offending grid point per failed clause
    """

    smooth: bool
    isotropic: bool
    convex: bool
    growth: bool
    violations: dict

    @property
    def passed(self) -> bool:
        return self.smooth and self.isotropic and self.convex and self.growth


def check_assumptions(rate: DepositionRate, test_grid=None) -> AssumptionReport:
    """Diagnose the admissibility clauses on a grid; never raises on failure."""
    ys = (
        np.linspace(0.0, 8.0, 2049)
        if test_grid is None
        else np.asarray(test_grid, dtype=float)
    )
    violations: dict = {}
    vals = rate.value(ys)
    slopes = rate.slope(ys)
    scale = max(1.0, float(np.max(np.abs(vals))))

    # (1) C^2 proxy: second differences consistent across two stencil widths
    h = max((ys[-1] - ys[0]) / 256.0, 1e-4)
    interior = ys[(ys > 2 * h) & (ys < ys[-1] - 2 * h)]
    smooth = True
    if len(interior):
        d2a = (rate.value(interior + h) - 2 * rate.value(interior) + rate.value(interior - h)) / h**2
        hh = h / 2
        d2b = (rate.value(interior + hh) - 2 * rate.value(interior) + rate.value(interior - hh)) / hh**2
        mism = np.abs(d2b - d2a)
        tol = 0.1 * max(1.0, float(np.max(np.abs(d2a)))) + 1e-6
        bad = mism > tol
        if np.any(bad):
            smooth = False
            violations["smooth"] = float(interior[np.argmax(bad)])

    # (2) isotropy: grad at +/-v is odd and parallel to v
    isotropic = True
    for v in ([1.0, 0.0], [0.6, -0.8], [3.0]):
        v = np.array(v)
        gp, gm = rate.grad(v), rate.grad(-v)
        cross = gp + gm
        radial = gp - (gp @ v) / (v @ v) * v
        if np.max(np.abs(cross)) > 1e-10 or np.max(np.abs(radial)) > 1e-10:
            isotropic = False
            violations["isotropic"] = tuple(v)
            break

    # (3) convexity: slope nondecreasing
    dslope = np.diff(slopes)
    convex = bool(np.all(dslope >= -1e-10 * max(1.0, float(np.max(np.abs(slopes))))))
    if not convex:
        violations["convex"] = float(ys[int(np.argmin(dslope))])

    # (4) normalization and growth envelope
    growth = True
    if abs(float(rate.value(0.0))) > 1e-12 or abs(float(rate.slope(0.0))) > 1e-12:
        growth = False
        violations["growth"] = 0.0
    else:
        bound = np.maximum(ys**2, ys**rate.beta) / 2.0
        bad = (vals > bound * (1 + 1e-9) + 1e-12) | (vals < -1e-12 * scale)
        if np.any(bad):
            growth = False
            violations["growth"] = float(ys[int(np.argmax(bad))])

    return AssumptionReport(smooth, isotropic, convex, growth, violations)
