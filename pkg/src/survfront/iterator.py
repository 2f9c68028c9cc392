"""Iterative state-constrained value construction over shrinking survival regions.

Starting from the unconstrained value u_1 = u1 and the region
Omega_1 = {u1 > u_m - delta}, each pass recomputes the value by dynamic
programming over polylines whose nodes, and snapped segment midpoints, stay
inside the current region:

    u_{i+1}(x, t+dt) = max_y { u_{i+1}(y, t) - |x-y|^2/(4 dt) } + R(x) dt,

then shrinks the region to Omega_{i+1} = {u_{i+1} > u_m - delta} ∩ Omega_i.
Unreached nodes are extinct (sentinel), so components of the region that do
not touch t = 0 starve automatically.  The fixpoint in the region mask is the
delta-level value U^delta; delta-descending runs, sandwich bounds, and the
reachability-delay machinery (rho, hbar, the shifted-data comparison) build on
top of it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

from .core import (
    DEFAULT_U_FLOOR,
    Grid,
    ProblemSpec,
    ScalarField,
    SchemeError,
    SpaceTimeField,
    SpaceTimeMask,
    ValidationError,
    sample_profile,
)
from .hj_solver import region_above, solve_u1


@dataclass
class IterationState:
    """One iterate: value field u_i, reachable set C_i, survival region Omega_i."""

    index: int
    delta: float
    u: SpaceTimeField
    reachable: SpaceTimeMask
    omega: SpaceTimeMask
    mu: float
    u_m: float

    def validate(self) -> None:
        if self.index < 1:
            raise ValidationError("iteration index starts at 1")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if self.mu < 0:
            raise ValidationError("mu must be nonnegative")
        if np.any(self.omega.flags & ~self.reachable.flags):
            raise ValidationError("omega must sit inside the reachable set")


def init_iteration(u1: SpaceTimeField, delta: float, u_m: float, mu: float) -> IterationState:
    """First iterate: u_1 = u1, everything reachable, Omega_1 = {u1 > u_m - delta}."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if mu < 0:
        raise ValidationError("mu must be nonnegative")
    if u_m >= 0:
        raise ValidationError("u_m must be negative")
    grid = u1.grid
    all_true = SpaceTimeMask(grid, np.ones((grid.nt + 1, grid.nx), dtype=bool))
    return IterationState(
        index=1, delta=delta, u=u1, reachable=all_true,
        omega=region_above(u1, u_m - delta), mu=mu, u_m=u_m,
    )


def _midpoint_index(nx: int) -> np.ndarray:
    # segment midpoint (x_i + x_j)/2 snapped to a node; exact half-cell ties
    # break toward the arrival node so left and right hops stay mirror images
    i = np.arange(nx)
    arrival, source = i[:, None], i[None, :]
    return (arrival + source + (arrival > source)) // 2


def constrained_value_step(
    state: IterationState,
    u0: ScalarField,
    R,
    grid: Grid,
) -> IterationState:
    """One masked DP pass over state.omega, producing iterate i+1.

    Row 0 of the new value is u0 on omega's t=0 nodes, sentinel elsewhere.  A
    one-step transition (y, t_k) -> (x, t_{k+1}) is admissible when both
    endpoints and the snapped segment midpoint lie in state.omega; sentinel
    sources never compete.  Ties pick the smallest source index.  The midpoint
    sits exactly between the two rows, so its time snaps to the arrival row
    (and half-cell space ties snap toward the arrival node); anything else
    tests the segment against the thin t=0 slice and strangles trajectories
    leaving the initial support at legal speeds.
    """
    if grid != state.u.grid:
        raise ValidationError("grid mismatch between state and step")
    floor = state.u.u_floor
    nx, nt, dt = grid.nx, grid.nt, grid.dt
    x = grid.nodes()
    om = state.omega.flags
    rv = R.values if isinstance(R, ScalarField) else np.full(nx, float(R))
    rate_dt = rv * dt

    P = (x[:, None] - x[None, :]) ** 2 / (4.0 * dt)
    mid = _midpoint_index(nx)

    new = np.full((nt + 1, nx), floor)
    offs = np.zeros((nt, nx), dtype=np.int64)
    new[0] = np.where(om[0] & (u0.values > floor), u0.values, floor)
    for k in range(nt):
        prev = new[k]
        src_ok = om[k] & (prev > floor)
        if not np.any(src_ok):
            continue
        mid_ok = om[k + 1][mid]
        allowed = src_ok[None, :] & mid_ok & om[k + 1][:, None]
        M = np.where(allowed, prev[None, :] - P, -np.inf)
        j_star = np.argmax(M, axis=1)
        best = M[np.arange(nx), j_star]
        fin = best > -np.inf
        row = np.where(fin, best + rate_dt, floor)
        row = np.where(row > floor, row, floor)
        new[k + 1] = row
        offs[k] = np.where(fin, j_star - np.arange(nx), 0)

    field = SpaceTimeField(
        grid, new, floor, argmax_kind="step", argmax=offs, rate_values=rv,
    )
    omega_new = SpaceTimeMask(grid, (new > state.u_m - state.delta) & om)
    reachable_new = SpaceTimeMask(grid, new > floor)
    return IterationState(
        index=state.index + 1, delta=state.delta, u=field,
        reachable=reachable_new, omega=omega_new, mu=state.mu, u_m=state.u_m,
    )


@dataclass
class FixpointResult:
    u: SpaceTimeField
    omega: SpaceTimeMask
    iterations: int
    converged: bool


def _shifted_u0(problem: ProblemSpec, grid: Grid, mu: float):
    """Sampled data u0 - mu together with an analytic evaluator when one exists."""
    u0f = sample_profile(problem.u0, grid, problem.u_floor)
    fn = problem.u0.analytic_callable()
    if mu > 0:
        u0f = u0f.shifted(-mu)
        if fn is not None:
            base = fn
            fn = lambda y: base(y) - mu
    return u0f, fn


def iterate_fixpoint(
    problem: ProblemSpec,
    grid: Grid,
    delta: float,
    mu: float,
    max_iter: int = 8,
) -> FixpointResult:
    """Run constrained passes until the region mask stops changing.

    mu > 0 runs the whole construction on the shifted data u0 - mu.
    Non-convergence within max_iter is reported in the flag, not raised.
    """
    if max_iter < 2:
        raise ValidationError("max_iter must allow at least one comparison")
    u0f, u0_fn = _shifted_u0(problem, grid, mu)
    u1 = solve_u1(problem, grid, u0_field=u0f, u0_fn=u0_fn)
    state = init_iteration(u1, delta, problem.u_m, mu)
    rate = sample_profile(problem.rate, grid, problem.u_floor)
    while state.index < max_iter:
        new = constrained_value_step(state, u0f, rate, grid)
        if new.omega == state.omega:
            return FixpointResult(new.u, new.omega, new.index, True)
        state = new
    return FixpointResult(state.u, state.omega, state.index, False)


def iteration_chain(
    problem: ProblemSpec,
    grid: Grid,
    delta: float,
    mu: float,
    i_max: int,
) -> list[IterationState]:
    """States 1..i_max of the construction; once the mask fixes, later entries
    repeat the fixed state (the iteration is stationary from there on)."""
    if i_max < 1:
        raise ValidationError("i_max must be >= 1")
    u0f, u0_fn = _shifted_u0(problem, grid, mu)
    u1 = solve_u1(problem, grid, u0_field=u0f, u0_fn=u0_fn)
    states = [init_iteration(u1, delta, problem.u_m, mu)]
    rate = sample_profile(problem.rate, grid, problem.u_floor)
    fixed = False
    while len(states) < i_max:
        if fixed:
            states.append(states[-1])
            continue
        new = constrained_value_step(states[-1], u0f, rate, grid)
        fixed = new.omega == states[-1].omega
        states.append(new)
    return states


@dataclass
class MonotonicityReport:
    max_violation: float
    richardson_gap: float
    per_delta: list


@dataclass
class UResult:
    U: SpaceTimeField
    Omega: SpaceTimeMask
    report: MonotonicityReport
    converged: bool


def _directional_gap(smaller: SpaceTimeField, larger: SpaceTimeField) -> float:
    """sup of (smaller - larger): how far the smaller-delta field pokes above."""
    floor = larger.u_floor
    fa = larger.values > floor
    fb = smaller.values > floor
    if np.any(fb & ~fa):
        return math.inf
    both = fa & fb
    if not np.any(both):
        return 0.0
    return float(np.max(smaller.values[both] - larger.values[both]))


def compute_U(
    problem: ProblemSpec,
    grid: Grid,
    deltas,
    mu: float,
    max_iter: int = 8,
) -> UResult:
    """delta-descending fixpoint runs; U is the smallest-delta result.

    The iterates must not increase as delta shrinks: a rise beyond 3*dx is a
    scheme bug and raises SchemeError.  The report carries the worst
    directional gap and the sup-gap between the two smallest-delta runs.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) == 0:
        raise ValidationError("deltas must be non-empty")
    if any(d <= 0 for d in deltas):
        raise ValidationError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValidationError("deltas must be strictly descending")
    runs = []
    for d in deltas:
        res = iterate_fixpoint(problem, grid, d, mu, max_iter=max_iter)
        runs.append((d, res))
    worst = 0.0
    for (da, ra), (db, rb) in zip(runs, runs[1:]):
        worst = max(worst, _directional_gap(rb.u, ra.u))
    if worst > 3.0 * grid.dx:
        raise SchemeError(
            f"delta-monotonicity violated by {worst:.6g} > {3.0 * grid.dx:.6g}"
        )
    if len(runs) >= 2:
        a, b = runs[-2][1].u, runs[-1][1].u
        both = (a.values > a.u_floor) & (b.values > b.u_floor)
        rich = float(np.max(np.abs(a.values[both] - b.values[both]))) if np.any(both) else 0.0
    else:
        rich = 0.0
    omega = runs[0][1].omega
    for _, r in runs[1:]:
        omega = omega & r.omega
    report = MonotonicityReport(
        max_violation=worst, richardson_gap=rich,
        per_delta=[(d, r.iterations, r.converged) for d, r in runs],
    )
    return UResult(
        U=runs[-1][1].u, Omega=omega, report=report,
        converged=all(r.converged for _, r in runs),
    )


@dataclass
class SandwichResult:
    lower: SpaceTimeField
    upper: SpaceTimeField
    mask: SpaceTimeMask
    upper_report: MonotonicityReport
    lower_report: MonotonicityReport


def sandwich_bounds(
    problem: ProblemSpec,
    grid: Grid,
    mu: float,
    deltas,
    max_iter: int = 8,
) -> SandwichResult:
    """Two-sided pinching: upper = U[u0], lower = U[u0 - mu] + mu on its region.

    Requires mu > 2 * max(deltas) so the shifted-chain margins survive the
    delta slack.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or mu <= 2.0 * max(deltas):
        raise ValidationError("sandwich_bounds requires mu > 2*delta for every delta")
    up = compute_U(problem, grid, deltas, 0.0, max_iter=max_iter)
    lo = compute_U(problem, grid, deltas, mu, max_iter=max_iter)
    floor = lo.U.u_floor
    lower_vals = np.where(
        lo.Omega.flags & (lo.U.values > floor), lo.U.values + mu, floor
    )
    lower = SpaceTimeField(grid, lower_vals, floor)
    return SandwichResult(
        lower=lower, upper=up.U, mask=lo.Omega,
        upper_report=up.report, lower_report=lo.report,
    )


def estimate_rho(u0: ScalarField, delta: float, mu: float, u_m: float) -> float:
    """Smallest grid-quantized rho such that every node with u0 > u_m - delta
    sees a value above u_m - delta + mu within distance rho.  Returns inf when
    no rho up to the domain width works (e.g. a plateau exactly at threshold).
    """
    if not (mu > delta > 0.0):
        raise ValidationError("estimate_rho requires mu > delta > 0")
    vals = u0.values
    need = vals > u_m - delta
    if not np.any(need):
        return 0.0
    target = u_m - delta + mu
    for m in range(u0.grid.nx):
        wmax = maximum_filter1d(vals, size=2 * m + 1, mode="nearest")
        if np.all(wmax[need] > target):
            return m * u0.grid.dx
    return math.inf


def hbar(mu: float, a: float, rho: float) -> float:
    """Delay bound mu/(2a) + sqrt(mu^2/a^2 + rho^2/a)/2 for rate lower bound a > 0."""
    if a <= 0:
        raise ValidationError("hbar requires a positive rate lower bound")
    if mu <= 0:
        raise ValidationError("hbar requires mu > 0")
    if rho < 0:
        raise ValidationError("hbar requires rho >= 0")
    return mu / (2.0 * a) + 0.5 * math.sqrt(mu * mu / (a * a) + rho * rho / a)


@dataclass
class DelayReport:
    holds: bool
    worst_gap: float
    h_used: float
    shift_rows: int
    per_iteration: list


def check_delay(
    problem: ProblemSpec,
    grid: Grid,
    delta: float,
    mu: float,
    h: float,
    i_max: int,
) -> DelayReport:
    """Test u_i[u0](x, t) <= u_i[u0 - mu](x, t + h) across iterations i <= i_max.

    h is snapped up to the next dt multiple (with a warning when not exact).
    Sentinel on the left never violates; finite left against extinct right is
    an infinite gap.  holds means worst gap <= 3*dx.
    """
    if not (mu > delta > 0):
        raise ValidationError("check_delay requires mu > delta > 0")
    if h < 0:
        raise ValidationError("check_delay requires h >= 0")
    dt = grid.dt
    shift = int(math.ceil(h / dt - 1e-9))
    if shift * dt < h - 1e-12:
        shift += 1
    if abs(shift * dt - h) > 1e-12 and h > 0:
        warnings.warn(f"h = {h} snapped up to {shift * dt}", stacklevel=2)
    if shift > grid.nt:
        raise ValidationError("t_final too small to fit any shifted comparison")
    chain_a = iteration_chain(problem, grid, delta, 0.0, i_max)
    chain_b = iteration_chain(problem, grid, delta, mu, i_max)
    floor = problem.u_floor
    per = []
    worst = -math.inf
    for sa, sb in zip(chain_a, chain_b):
        ua = sa.u.values[: grid.nt + 1 - shift]
        ub = sb.u.values[shift:]
        gap = np.where(ua <= floor, -np.inf, np.where(ub <= floor, np.inf, ua - ub))
        g = float(np.max(gap)) if gap.size else -math.inf
        per.append(g)
        worst = max(worst, g)
    return DelayReport(
        holds=bool(worst <= 3.0 * grid.dx),
        worst_gap=worst,
        h_used=shift * dt,
        shift_rows=shift,
        per_iteration=per,
    )


def dp_supersolution_residual(
    values: np.ndarray,
    R,
    omega: SpaceTimeMask,
    grid: Grid,
    u_floor: float = DEFAULT_U_FLOOR,
) -> float:
    """Worst excess of one masked DP step over a candidate supersolution.

    residual <= 0 (up to scheme slack) certifies the candidate dominates every
    admissible one-step update on omega.  Diagnostic companion to the
    comparison machinery.
    """
    nx, nt, dt = grid.nx, grid.nt, grid.dt
    x = grid.nodes()
    rv = R.values if isinstance(R, ScalarField) else np.full(nx, float(R))
    P = (x[:, None] - x[None, :]) ** 2 / (4.0 * dt)
    mid = _midpoint_index(nx)
    om = omega.flags
    worst = -math.inf
    for k in range(nt):
        prev = values[k]
        src_ok = om[k] & (prev > u_floor)
        if not np.any(src_ok):
            continue
        allowed = src_ok[None, :] & om[k + 1][mid] & om[k + 1][:, None]
        M = np.where(allowed, prev[None, :] - P, -np.inf)
        best = M.max(axis=1) + rv * dt
        tgt_ok = om[k + 1] & (values[k + 1] > u_floor) & np.isfinite(best)
        if np.any(tgt_ok):
            worst = max(worst, float(np.max(best[tgt_ok] - values[k + 1][tgt_ok])))
    return worst
