"""Closed-form reference solutions for quadratic data under a constant rate.

For u0 = -x^2 and R = 1 the unconstrained value is u1(x,t) = t - x^2/(1+4t).
Truncating it at the threshold gives the naive candidate; the genuinely
state-constrained value replaces excursions below threshold by runs along the
threshold boundary, which closes to a three-branch piecewise formula.  The
same objects are also provided for general constant-rate problems through an
interval-wise golden-section search, so the two routes can cross-check each
other at random points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_U_FLOOR, Grid, ProfileSpec, ValidationError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def u1_quadratic_unit_rate(x: float, t: float) -> float:
    """Unconstrained value t - x^2/(1+4t) for u0 = -x^2, R = 1."""
    if t <= 0:
        raise ValidationError("closed forms require t > 0")
    return t - x * x / (1.0 + 4.0 * t)


def tilde_u(x: float, t: float, u_m: float, sentinel: float = DEFAULT_U_FLOOR) -> float:
    """Truncation of the unconstrained value at the threshold:
    t - x^2/(1+4t) where that is >= u_m, extinct (sentinel) otherwise."""
    if u_m >= 0:
        raise ValidationError("u_m must be negative")
    v = u1_quadratic_unit_rate(x, t)
    return v if v >= u_m else sentinel


def breve_u(x: float, t: float, u_m: float, sentinel: float = DEFAULT_U_FLOOR) -> float:
    """State-constrained value for u0 = -x^2, R = 1, threshold u_m < 0.

    Branch selection:
      1. if -x^2/(1+4t)^2 >= u_m and t - x^2/(1+4t) >= u_m:
             t - x^2/(1+4t)
      2. if x > 0, -x^2/(1+4t)^2 <= u_m, t >= (x - sqrt(-u_m))^2/(4t):
             t - (x - sqrt(-u_m))^2/(4t) + u_m
      3. mirror of 2 for x < 0 (with + sqrt(-u_m))
      else extinct (sentinel).
    x = 0 always satisfies the first branch test.
    """
    if u_m >= 0:
        raise ValidationError("u_m must be negative")
    if t <= 0:
        raise ValidationError("closed forms require t > 0")
    s = 1.0 + 4.0 * t
    root = math.sqrt(-u_m)
    if -x * x / (s * s) >= u_m and t - x * x / s >= u_m:
        return t - x * x / s
    if x > 0 and -x * x / (s * s) <= u_m and t >= (x - root) ** 2 / (4.0 * t):
        return t - (x - root) ** 2 / (4.0 * t) + u_m
    if x < 0 and -x * x / (s * s) <= u_m and t >= (x + root) ** 2 / (4.0 * t):
        return t - (x + root) ** 2 / (4.0 * t) + u_m
    return sentinel


def w_eta(x: float, t: float, eta: float, u_m: float,
          sentinel: float = DEFAULT_U_FLOOR) -> float:
    """Family member: the unconstrained value where it stays >= eta, else extinct.

    Defined for eta >= u_m; eta = u_m reproduces tilde_u.
    """
    if u_m >= 0:
        raise ValidationError("u_m must be negative")
    if eta < u_m:
        raise ValidationError("w_eta requires eta >= u_m")
    v = u1_quadratic_unit_rate(x, t)
    return v if v >= eta else sentinel


@dataclass(frozen=True)
class ConstRateProblem:
    """Constant rate R, initial profile u0, threshold u_m; supports the
    interval-wise evaluation of the iterated constant-rate values."""

    R: float
    u0: ProfileSpec
    u_m: float
    search_pad: float = 25.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.R):
            raise ValidationError("R must be finite")
        if self.u_m >= 0:
            raise ValidationError("u_m must be negative")

    def _window(self) -> tuple[float, float]:
        return (-self.search_pad, self.search_pad)


def _golden_max_scalar(f, a, b, iters: int = 90) -> tuple[float, float]:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    y = 0.5 * (a + b)
    return y, f(y)


def _sup_over_intervals(p: ConstRateProblem, intervals, x: float, t: float,
                        closed: bool) -> float:
    """sup of phi(y) = -(x-y)^2/(4t) + R t + u0(y) over a union of intervals."""

    def phi(y: float) -> float:
        return -(x - y) ** 2 / (4.0 * t) + p.R * t + float(p.u0(y))

    best = -math.inf
    for (a, b) in intervals:
        if not (b > a or (closed and b == a)):
            continue
        _, v = _golden_max_scalar(phi, a, b)
        best = max(best, v)
        if closed:
            best = max(best, phi(a), phi(b))
        else:
            # open interval: the sup may sit at the boundary without being
            # attained; its value is still the limit, so evaluate there too
            best = max(best, phi(a), phi(b))
    return best


def const_rate_U_delta(p: ConstRateProblem, delta: float, x: float, t: float,
                       sentinel: float = DEFAULT_U_FLOOR) -> float:
    """Level-delta iterated value: sup of the Hopf-Lax integrand over
    I_delta = {u0 > u_m - delta}, kept when it exceeds u_m - delta."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if t <= 0:
        raise ValidationError("closed forms require t > 0")
    lo, hi = p._window()
    intervals = p.u0.support_intervals(p.u_m - delta, lo, hi)
    best = _sup_over_intervals(p, intervals, x, t, closed=False)
    return best if best > p.u_m - delta else sentinel


def const_rate_U(p: ConstRateProblem, x: float, t: float,
                 sentinel: float = DEFAULT_U_FLOOR) -> float:
    """delta -> 0 limit: sup over the closure of O = {u0 > u_m}, kept when >= u_m."""
    if t <= 0:
        raise ValidationError("closed forms require t > 0")
    lo, hi = p._window()
    intervals = p.u0.support_intervals(p.u_m, lo, hi)
    best = _sup_over_intervals(p, intervals, x, t, closed=True)
    return best if best >= p.u_m else sentinel


def sample_closed_form(fn, grid: Grid, u_m: float,
                       sentinel: float = DEFAULT_U_FLOOR) -> np.ndarray:
    """Evaluate one of the (x, t) closed forms on a grid; the t = 0 row is the
    initial data -x^2 truncated at the same level as the form's membership rule.
    The truncation allows 1e-12 of slack: grid nodes never land exactly on the
    set boundary, and the closed-membership forms must keep their boundary
    starting points (the pinned-trajectory feet) in the t = 0 slice."""
    xs = grid.nodes()
    ts = grid.times()
    out = np.empty((grid.nt + 1, grid.nx))
    row0 = -xs * xs
    out[0] = np.where(row0 >= u_m - 1e-12, row0, sentinel)
    for k in range(1, grid.nt + 1):
        for i in range(grid.nx):
            out[k, i] = fn(float(xs[i]), float(ts[k]))
    return out
