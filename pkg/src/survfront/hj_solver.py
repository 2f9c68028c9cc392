"""Limit-equation solvers: Hopf-Lax evaluation, Lax-Oleinik stepping, the
obstacle construction, survival-region extraction, and optimal-trajectory
backtracking with a state-constraint audit.

The unconstrained value is
    u1(x,t) = sup_y { -|x-y|^2/(4t) + int_0^t R + u0(y) },
realized by straight-line trajectories for constant R and by dynamic
programming over grid polylines otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

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

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class Trajectory:
    """Polyline (x, t) samples with strictly increasing t and the accumulated value."""

    samples: list
    value: float

    def __post_init__(self) -> None:
        if len(self.samples) == 0:
            raise ValidationError("trajectory needs at least one sample")
        ts = [t for _, t in self.samples]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValidationError("trajectory times must be strictly increasing")


@dataclass
class AuditReport:
    admissible: bool
    first_violation: tuple | None
    checked: int


def _golden_max(f, a, b, iters: int = 70):
    """Vectorized golden-section maximization of f on brackets [a, b].

    a, b may be arrays.  Returns (y, f(y)) at the final bracket center; caller
    should still compare against endpoint/node candidates.
    """
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + _INVPHI * (b - a))
        c_new = np.where(left, b - _INVPHI * (b - a), d)
        c, d = c_new, d_new
        fc = f(c)
        fd = f(d)
    y = 0.5 * (a + b)
    return y, f(y)


def hopf_lax_constant_R(
    u0: ScalarField,
    R: float,
    grid: Grid,
    u0_fn=None,
) -> SpaceTimeField:
    """Evaluate the Hopf-Lax formula with constant rate R at every node.

    The maximum is taken over grid nodes; when an analytic evaluator u0_fn is
    supplied, one golden-section refinement around the discrete argmax sharpens
    both the value and the stored maximizer position.  The returned field
    carries "initial"-kind optimizer records (y0, u00) for backtracking.
    """
    if not math.isfinite(R):
        raise ValidationError("rate must be finite")
    x = grid.nodes()
    vals0 = u0.values
    floor = u0.u_floor
    live0 = vals0 > floor
    nx, nt = grid.nx, grid.nt
    out = np.empty((nt + 1, nx))
    y0 = np.empty((nt + 1, nx))
    u00 = np.empty((nt + 1, nx))
    out[0] = vals0
    y0[0] = x
    u00[0] = vals0
    if not np.any(live0):
        out[1:] = floor
        y0[1:] = x[None, :]
        u00[1:] = floor
        return SpaceTimeField(grid, out, floor, argmax_kind="initial", y0=y0, u00=u00,
                              rate_const=float(R))

    diff2 = (x[:, None] - x[None, :]) ** 2
    base0 = np.where(live0, vals0, -np.inf)
    for k in range(1, nt + 1):
        t = grid.times()[k]
        cand = base0[None, :] - diff2 / (4.0 * t)
        j_star = np.argmax(cand, axis=1)
        best = cand[np.arange(nx), j_star]
        ys = x[j_star]
        us = vals0[j_star]
        if u0_fn is not None:
            lo = x[np.maximum(j_star - 1, 0)]
            hi = x[np.minimum(j_star + 1, nx - 1)]

            def phi(y, t=t, xi=x):
                return np.asarray(u0_fn(y), dtype=float) - (xi - y) ** 2 / (4.0 * t)

            y_ref, f_ref = _golden_max(phi, lo, hi)
            improved = f_ref > best
            ys = np.where(improved, y_ref, ys)
            us = np.where(improved, np.asarray(u0_fn(y_ref), dtype=float), us)
            best = np.where(improved, f_ref, best)
        row = best + R * t
        dead = ~np.isfinite(row) | (row <= floor)
        out[k] = np.where(dead, floor, row)
        y0[k] = ys
        u00[k] = us
    return SpaceTimeField(grid, out, floor, argmax_kind="initial", y0=y0, u00=u00,
                          rate_const=float(R))


def lax_oleinik_step(u: ScalarField, R, dt: float, radius: float,
                     refine: bool = True) -> ScalarField:
    """One dynamic-programming step
        u'(x) = max_{|y-x| <= radius} { u(y) - |x-y|^2/(4 dt) } + R(x) dt.
    R may be a scalar or a ScalarField (evaluated at the arrival node).

    With refine=False the max runs over grid nodes only (the exact node-DP
    used by the enumeration oracles and backtracking).  With refine=True the
    max additionally scans the piecewise-linear reconstruction of u between
    live node pairs; within a cell of slope s the objective is concave with
    interior optimum y = x + 2 s dt worth u_j + s (x - y_j) + s^2 dt, so the
    continuous maximum is exact per cell.  Without this the node quantization
    error ~ T dx^2/(16 dt^2) does not vanish under proportional (dx, dt)
    refinement.  Sentinel competitors never win; a node maximizer pinned at
    the search-radius edge (full window available) raises SchemeError.
    """
    if dt <= 0:
        raise ValidationError("lax_oleinik_step requires dt > 0")
    if radius <= 0:
        raise ValidationError("lax_oleinik_step requires radius > 0")
    grid = u.grid
    dx = grid.dx
    nx = grid.nx
    floor = u.u_floor
    vals = u.values
    live = vals > floor
    m = max(1, int(math.ceil(radius / dx - 1e-12)))
    m = min(m, nx - 1)

    best = np.full(nx, -np.inf)
    bestoff = np.zeros(nx, dtype=np.int64)
    for o in range(-m, m + 1):
        pen = (o * dx) ** 2 / (4.0 * dt)
        lo = max(0, -o)
        hi = min(nx, nx - o)
        cand = np.full(nx, -np.inf)
        seg = vals[lo + o: hi + o]
        ok = live[lo + o: hi + o]
        cand[lo:hi] = np.where(ok, seg - pen, -np.inf)
        upd = cand > best
        best[upd] = cand[upd]
        bestoff[upd] = o

    finite = best > -np.inf
    # a winner pinned at the radius edge (full window available there) means
    # the radius was too small to contain the true maximizer
    idx = np.arange(nx)
    full_left = idx - m >= 0
    full_right = idx + m < nx
    pinned = finite & (((bestoff == -m) & full_left) | ((bestoff == m) & full_right))
    if m >= 1 and np.any(pinned):
        i = int(np.flatnonzero(pinned)[0])
        raise SchemeError(
            f"maximizer at search boundary (node {i}, offset {int(bestoff[i])}): radius too small"
        )

    off_out = bestoff.astype(float) if refine else bestoff
    if refine and nx >= 2:
        s = (vals[1:] - vals[:-1]) / dx
        cell_ok = live[1:] & live[:-1]
        drift = (2.0 * dt) * s
        gain = vals[:-1] + s * s * dt
        ref_best = np.full(nx, -np.inf)
        ref_off = np.zeros(nx)
        # target i draws on the cell starting at node i + c; x_i - y_{i+c} = -c dx
        for c in range(-(m + 1), m + 2):
            lo = max(0, -c)
            hi = min(nx, nx - 1 - c)
            if lo >= hi:
                continue
            jj = slice(lo + c, hi + c)
            ypos = drift[jj] - c * dx
            ok = cell_ok[jj] & (ypos > 0.0) & (ypos < dx)
            val = np.where(ok, gain[jj] - s[jj] * (c * dx), -np.inf)
            cur = ref_best[lo:hi]
            take = val > cur
            cur[take] = val[take]
            ref_off[lo:hi][take] = drift[jj][take] / dx
        upd = ref_best > best
        best = np.where(upd, ref_best, best)
        off_out = np.where(upd, ref_off, off_out)
        finite = best > -np.inf

    rv = R.values if isinstance(R, ScalarField) else np.full(nx, float(R))
    new = np.where(finite, best + rv * dt, floor)
    new = np.where(new > floor, new, floor)
    out = ScalarField(grid, new, floor)
    out.argmax_offset = np.where(finite, off_out, 0)
    return out


def solve_u1(
    problem: ProblemSpec,
    grid: Grid,
    u0_field: ScalarField | None = None,
    u0_fn=None,
    force_stepping: bool = False,
    refine: bool = True,
) -> SpaceTimeField:
    """Unconstrained first-order value u1 on the grid.

    Constant rates route through the Hopf-Lax evaluation (golden-section
    refinement when an analytic u0 evaluator is available; pass u0_fn to keep
    it for transformed data fields).  Variable rates and force_stepping=True
    use Lax-Oleinik stepping with per-step search radius 4*dt*(1 + Lip
    estimate).  Stepping runs carry "step" records (integer predecessor
    offsets, exact node-DP arithmetic) when refine=False; refined runs carry
    "step_refined" records whose real-valued offsets cannot anchor the exact
    backtracking identity.
    """
    floor = problem.u_floor
    u0f = u0_field if u0_field is not None else sample_profile(problem.u0, grid, floor)
    if u0f.u_floor != floor:
        u0f = ScalarField(grid, u0f.values, floor)
    if problem.rate.is_constant and not force_stepping:
        fn = u0_fn
        if fn is None and u0_field is None:
            fn = problem.u0.analytic_callable()
        return hopf_lax_constant_R(u0f, problem.rate.constant_value, grid, u0_fn=fn)

    rate_vals = sample_profile(problem.rate, grid, floor)
    nt, nx = grid.nt, grid.nx
    out = np.empty((nt + 1, nx))
    offs = np.zeros((nt, nx), dtype=float if refine else np.int64)
    out[0] = u0f.values
    cur = u0f
    for k in range(nt):
        radius = 4.0 * grid.dt * (1.0 + cur.lipschitz())
        cur = lax_oleinik_step(cur, rate_vals, grid.dt, radius, refine=refine)
        offs[k] = cur.argmax_offset
        out[k + 1] = cur.values
    return SpaceTimeField(
        grid, out, floor,
        argmax_kind="step_refined" if refine else "step", argmax=offs,
        rate_values=rate_vals.values,
        rate_const=problem.rate.constant_value if problem.rate.is_constant else None,
    )


def solve_obstacle(
    problem: ProblemSpec,
    grid: Grid,
    A: float,
    tol: float | None = None,
) -> SpaceTimeField:
    """Obstacle value v = max(u1, -A), computed twice and cross-checked.

    Route one is the direct pointwise maximum over solve_u1.  Route two steps
    the projected scheme: gradient DP, then the rate applied only where the
    state sits strictly above the obstacle, then projection from below,
        v <- max(-A, DPstep(v) + R dt 1{DPstep(v) > -A}).
    The rate indicator is the limit of the exponential-scale weight
    n/(n + e^{-A/eps}): the growth term switches off on the obstacle plateau.
    For R <= 0 it changes nothing (the projection absorbs the difference); for
    R > 0 it is what keeps the plateau at -A instead of growing at rate R.
    The two routes must agree within tol (default 3*dx) or SchemeError is
    raised.  Returns the projected-scheme field with the measured
    disagreement in aux["obstacle_gap"].
    """
    if not (math.isfinite(A) and A > 0):
        raise ValidationError("obstacle height A must be positive")
    floor = problem.u_floor
    if -A <= floor:
        raise ValidationError("obstacle level -A must sit above u_floor")
    u1 = solve_u1(problem, grid)
    direct = np.maximum(u1.values, -A)

    rate_vals = sample_profile(problem.rate, grid, floor)
    nt, nx = grid.nt, grid.nx
    proj = np.empty((nt + 1, nx))
    u0f = sample_profile(problem.u0, grid, floor)
    cur = ScalarField(grid, np.maximum(u0f.values, -A), floor)
    proj[0] = cur.values
    for k in range(nt):
        radius = 4.0 * grid.dt * (1.0 + cur.lipschitz())
        stepped = lax_oleinik_step(cur, 0.0, grid.dt, radius)
        w = stepped.values
        w = np.where(w > -A, w + rate_vals.values * grid.dt, w)
        cur = ScalarField(grid, np.maximum(w, -A), floor)
        proj[k + 1] = cur.values
    gap = float(np.max(np.abs(proj - direct)))
    limit = 3.0 * grid.dx if tol is None else tol
    if gap > limit:
        raise SchemeError(
            f"obstacle projected scheme deviates from max(u1, -A) by {gap:.6g} > {limit:.6g}"
        )
    return SpaceTimeField(grid, proj, floor, aux={"obstacle_gap": gap})


def region_above(u: SpaceTimeField, level: float) -> SpaceTimeMask:
    """Strict superlevel node set {u > level}; the sentinel is never above."""
    flags = (u.values > level) & u.finite()
    return SpaceTimeMask(u.grid, flags)


def backtrack_trajectory(u: SpaceTimeField, x: float, t: float) -> Trajectory:
    """Optimal trajectory from (x, t) down to t = 0, read off optimizer records.

    For "initial" records this is the straight line to the stored t=0
    maximizer, sampled at grid times; for "step" records it follows the
    per-step predecessor chain.  The re-accumulated value must match the field
    value within 1e-9 * nt.
    """
    if u.argmax_kind is None:
        raise ValidationError("field carries no optimizer records to backtrack")
    if u.argmax_kind == "step_refined":
        raise ValidationError(
            "refined stepping runs cannot be backtracked exactly; rerun with refine=False"
        )
    grid = u.grid
    k = grid.t_index(t)
    i = grid.x_index(x)
    floor = u.u_floor
    if u.values[k, i] <= floor:
        raise ValidationError("cannot backtrack from an extinct node")
    dt = grid.dt
    nodes = grid.nodes()
    xi = nodes[i]
    if k == 0:
        return Trajectory([(float(xi), 0.0)], float(u.values[0, i]))

    if u.argmax_kind == "initial":
        if u.y0 is None or u.u00 is None or u.rate_const is None:
            raise ValidationError("incomplete optimizer records on field")
        ystar = float(u.y0[k, i])
        tk = float(grid.times()[k])
        samples = []
        acc = float(u.u00[k, i])
        for j in range(k + 1):
            tj = grid.times()[j]
            samples.append((float(ystar + (xi - ystar) * (tj / tk)), float(tj)))
        for j in range(1, k + 1):
            dxseg = samples[j][0] - samples[j - 1][0]
            acc -= dxseg * dxseg / (4.0 * dt)
            acc += u.rate_const * dt
    else:
        if u.argmax is None:
            raise ValidationError("incomplete optimizer records on field")
        rv = u.rate_values
        if rv is None:
            if u.rate_const is None:
                raise ValidationError("incomplete optimizer records on field")
            rv = np.full(grid.nx, u.rate_const)
        chain = [i]
        for s in range(k - 1, -1, -1):
            chain.append(chain[-1] + int(u.argmax[s, chain[-1]]))
        chain.reverse()
        samples = [(float(nodes[j]), float(grid.times()[s])) for s, j in enumerate(chain)]
        acc = float(u.values[0, chain[0]])
        for s in range(1, k + 1):
            off = chain[s - 1] - chain[s]
            acc -= (off * grid.dx) ** 2 / (4.0 * dt)
            acc += float(rv[chain[s]]) * dt

    target = float(u.values[k, i])
    if abs(acc - target) > 1e-9 * max(grid.nt, 1):
        raise SchemeError(
            f"trajectory value {acc:.12g} disagrees with field value {target:.12g}"
        )
    return Trajectory(samples, acc)


def state_constraint_audit(traj: Trajectory, mask: SpaceTimeMask) -> AuditReport:
    """Check that a trajectory stays inside a node mask.

    Every sample and every consecutive-pair midpoint is snapped to the nearest
    node and looked up in the mask; the first failure is reported as that
    node's coordinates.  Exact half-cell ties snap toward the direction of
    travel (the later row in time; the motion side in space), mirroring the
    DP admissibility convention, so legal frontier-hugging trajectories are
    not tested against the slice they are just leaving.
    """
    grid = mask.grid
    pts = []
    for idx, (xs, ts) in enumerate(traj.samples):
        if idx > 0:
            xp, tp = traj.samples[idx - 1]
            pts.append(((xp + xs) / 2.0, (tp + ts) / 2.0, xs - xp))
        pts.append((xs, ts, 0.0 if idx + 1 == len(traj.samples)
                    else traj.samples[idx + 1][0] - xs))

    def snap(x, t, direction):
        px = (x - grid.x_min) / grid.dx
        fx = math.floor(px)
        i = int(math.floor(px + 0.5))
        if abs(px - (fx + 0.5)) < 1e-9:
            i = int(fx) if direction < 0 else int(fx) + 1
        pt = t / grid.dt
        ft = math.floor(pt)
        k = int(math.floor(pt + 0.5))
        if abs(pt - (ft + 0.5)) < 1e-9:
            k = int(ft) + 1
        if i < 0 or i >= grid.nx or k < 0 or k > grid.nt:
            raise ValidationError(f"trajectory point ({x}, {t}) leaves the grid")
        if abs(x - (grid.x_min + i * grid.dx)) > 0.5 * grid.dx + 1e-9:
            raise ValidationError(f"trajectory point ({x}, {t}) is off-grid in x")
        return i, k

    checked = 0
    for (xs, ts, direction) in pts:
        i, k = snap(xs, ts, direction)
        checked += 1
        if not mask.flags[k, i]:
            return AuditReport(False, (float(grid.nodes()[i]), float(grid.times()[k])), checked)
    return AuditReport(True, None, checked)
