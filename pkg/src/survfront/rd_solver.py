"""Scaled viscous solver in Hopf-Cole variables, plus a direct density solver.

The working equation for u = eps*ln(n) is

    u_t - eps*u_xx - |u_x|^2 = R(x) - E(u),

where the singular survival term E(u) is exp((1-gamma)(u_m - u)/eps) in the
threshold-preserving form and exp((gamma*u_m - (1-gamma)u)/eps) in the literal
power form; both are integrated exactly per cell per step.  One time step
splits gradient -> diffusion -> rate -> reaction.  Cells at or below u_floor
are extinct and absorbing: they skip every substep and never re-ignite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    DEFAULT_U_FLOOR,
    Grid,
    ProblemSpec,
    ScalarField,
    SchemeError,
    SpaceTimeField,
    ValidationError,
    sample_profile,
    stable_logsum,
)

MAX_SUBSTEPS = 1_000_000

DIFFUSION_TREATMENTS = ("implicit_tridiagonal", "explicit")


@dataclass(frozen=True)
class SplitSchemeConfig:
    """Knobs of the splitting scheme.

    cfl_safety multiplies every stability bound; the gradient substep uses a
    local Lax-Friedrichs monotone Hamiltonian and requires
    dt * (2 max|Du|) / dx <= cfl_safety, re-estimated each step and enforced
    by integer sub-cycling.  Diffusion is an implicit tridiagonal solve by
    default; the explicit variant sub-cycles under eps*dt/dx^2 <= cfl_safety/2.
    """

    cfl_safety: float = 0.4
    diffusion_treatment: str = "implicit_tridiagonal"

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValidationError("cfl_safety must lie in (0, 1]")
        if self.diffusion_treatment not in DIFFUSION_TREATMENTS:
            raise ValidationError(f"unknown diffusion treatment '{self.diffusion_treatment}'")


def _balance_level(u_m: float, gamma: float, form: str) -> float:
    # literal_power is the same exact ODE run at balance level gamma*u_m/(1-gamma);
    # the two levels coincide bitwise at gamma = 1/2.
    if form == "threshold_preserving":
        return u_m
    if form == "literal_power":
        return gamma * u_m / (1.0 - gamma)
    raise ValidationError(f"unknown reaction_form '{form}'")


def reaction_substep(
    u: float,
    dt: float,
    eps: float,
    u_m: float,
    gamma: float = 0.5,
    form: str = "threshold_preserving",
    u_floor: float = DEFAULT_U_FLOOR,
) -> float:
    """Exact solution of u' = -E(u) over one step of length dt.

    With w = exp((1-gamma)(u - b)/eps) for the balance level b the ODE becomes
    w' = -(1-gamma)/eps, so w(dt) = w(0) - (1-gamma) dt / eps; the state is
    extinct (u_floor) once w reaches zero.  Computed in log space, so the
    far-above-threshold regime returns u unchanged to machine precision.
    """
    if dt < 0:
        raise ValidationError("reaction_substep requires dt >= 0")
    if eps <= 0:
        raise ValidationError("reaction_substep requires eps > 0")
    if not (0.0 < gamma < 1.0):
        raise ValidationError("gamma must lie in (0, 1)")
    b = _balance_level(u_m, gamma, form)
    if u <= u_floor:
        return u_floor
    c = (1.0 - gamma) * dt / eps
    s = (1.0 - gamma) * (u - b) / eps
    try:
        q = c * math.exp(-s)
    except OverflowError:
        return u_floor
    if q >= 1.0:
        return u_floor
    out = u + eps / (1.0 - gamma) * math.log1p(-q)
    return out if out > u_floor else u_floor


def _reaction_row(u, live, dt, eps, u_m, gamma, form, floor):
    b = _balance_level(u_m, gamma, form)
    c = (1.0 - gamma) * dt / eps
    s = (1.0 - gamma) * (u - b) / eps
    with np.errstate(over="ignore", under="ignore"):
        q = c * np.exp(-s)
    dead = ~np.isfinite(q) | (q >= 1.0)
    q_safe = np.where(dead, 0.0, q)
    out = np.where(dead, floor, u + eps / (1.0 - gamma) * np.log1p(-q_safe))
    out = np.where(out > floor, out, floor)
    return np.where(live, out, floor)


def _one_sided_slopes(u, live, dx):
    """Left/right difference quotients; extinct neighbors count as domain edges."""
    nx = u.size
    fwd = np.zeros(nx)
    fwd_ok = np.zeros(nx, dtype=bool)
    fwd[:-1] = (u[1:] - u[:-1]) / dx
    fwd_ok[:-1] = live[:-1] & live[1:]
    bwd = np.zeros(nx)
    bwd_ok = np.zeros(nx, dtype=bool)
    bwd[1:] = fwd[:-1]
    bwd_ok[1:] = fwd_ok[:-1]
    a = np.where(bwd_ok, bwd, np.where(fwd_ok, fwd, 0.0))
    b = np.where(fwd_ok, fwd, np.where(bwd_ok, bwd, 0.0))
    return a, b


def _gradient_substep(u, live, dt, dx, cfl_safety):
    """Advance u_t = |u_x|^2 with the local Lax-Friedrichs scheme, sub-cycled."""
    a, b = _one_sided_slopes(u, live, dx)
    alpha_max = 2.0 * float(np.max(np.abs(np.concatenate([a[live], b[live]])), initial=0.0))
    # 10% headroom: slopes are non-increasing under convex-H dynamics, but the
    # rate/reaction substeps may have steepened the profile slightly
    nsub = max(1, int(math.ceil(dt * alpha_max * 1.1 / (cfl_safety * dx))))
    if nsub > MAX_SUBSTEPS:
        raise SchemeError(f"gradient sub-cycling exploded ({nsub} substeps)")
    dts = dt / nsub
    for _ in range(nsub):
        m = 0.5 * (a + b)
        alpha = 2.0 * np.maximum(np.abs(a), np.abs(b))
        upd = u + dts * (m * m + 0.5 * alpha * (b - a))
        u = np.where(live, upd, u)
        a, b = _one_sided_slopes(u, live, dx)
    return u, nsub


def _live_runs(live):
    idx = np.flatnonzero(live)
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[cuts + 1]))
    ends = np.concatenate((idx[cuts], [idx[-1]]))
    return list(zip(starts, ends))


def _implicit_diffusion(u, live, nu, dx):
    """(I - nu d_xx) u_new = u on each contiguous live run, zero-flux run ends."""
    r = nu / (dx * dx)
    out = u.copy()
    for s, e in _live_runs(live):
        n = e - s + 1
        if n == 1:
            continue
        ab = np.zeros((3, n))
        ab[0, 1:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[1, 0] = 1.0 + r
        ab[1, -1] = 1.0 + r
        ab[2, :-1] = -r
        out[s:e + 1] = solve_banded((1, 1), ab, u[s:e + 1],
                                    overwrite_ab=True, check_finite=False)
    return out


def _explicit_diffusion(u, live, nu, dx, cfl_safety):
    r_total = nu / (dx * dx)
    nsub = max(1, int(math.ceil(r_total / (0.5 * cfl_safety))))
    if nsub > MAX_SUBSTEPS:
        raise SchemeError(f"diffusion sub-cycling exploded ({nsub} substeps)")
    r = r_total / nsub
    for _ in range(nsub):
        left = np.empty_like(u)
        right = np.empty_like(u)
        left[1:] = np.where(live[:-1], u[:-1], u[1:])
        left[0] = u[0]
        right[:-1] = np.where(live[1:], u[1:], u[:-1])
        right[-1] = u[-1]
        u = np.where(live, u + r * (left - 2.0 * u + right), u)
    return u, nsub


def solve_viscous_hj(
    problem: ProblemSpec,
    grid: Grid,
    scheme: SplitSchemeConfig | None = None,
    include_reaction: bool = True,
) -> SpaceTimeField:
    """March the scaled equation in Hopf-Cole variables over the grid.

    Splitting per step: gradient (LLF, sub-cycled) -> diffusion -> rate ->
    exact reaction.  Extinct cells are absorbing.  Diagnostics land in
    aux: per-step gradient substep counts and extinct-cell counts.
    """
    scheme = scheme or SplitSchemeConfig()
    floor = problem.u_floor
    eps = problem.epsilon
    dt, dx = grid.dt, grid.dx
    u0f = sample_profile(problem.u0, grid, floor)
    rate = sample_profile(problem.rate, grid, floor).values

    u = u0f.values.copy()
    live = u > floor
    u = np.where(live, u, floor)
    out = np.empty((grid.nt + 1, grid.nx))
    out[0] = u
    subcycles = []
    extinct_counts = [int(np.count_nonzero(~live))]
    for k in range(grid.nt):
        if np.any(live):
            u, nsub = _gradient_substep(u, live, dt, dx, scheme.cfl_safety)
            if scheme.diffusion_treatment == "implicit_tridiagonal":
                u = _implicit_diffusion(u, live, eps * dt, dx)
            else:
                u, _ = _explicit_diffusion(u, live, eps * dt, dx, scheme.cfl_safety)
            u = np.where(live, u + dt * rate, u)
            if include_reaction:
                u = _reaction_row(u, live, dt, eps, problem.u_m, problem.gamma,
                                  problem.reaction_form, floor)
                live = u > floor
        else:
            nsub = 0
        u = np.where(live, u, floor)
        out[k + 1] = u
        subcycles.append(nsub)
        extinct_counts.append(int(np.count_nonzero(~live)))
    return SpaceTimeField(
        grid, out, floor,
        aux={"gradient_subcycles": subcycles, "extinct_per_step": extinct_counts},
    )


def solve_simplified(
    problem: ProblemSpec,
    grid: Grid,
    scheme: SplitSchemeConfig | None = None,
) -> SpaceTimeField:
    """Same march without the survival term: u_t - eps u_xx - |u_x|^2 = R.

    The output never reads u_m, gamma, or reaction_form, so it is bitwise
    independent of them.
    """
    return solve_viscous_hj(problem, grid, scheme=scheme, include_reaction=False)


def aux_field_vA(u_eps: SpaceTimeField, A: float, eps: float,
                 u_m: float | None = None) -> SpaceTimeField:
    """Shifted observable v = eps*ln(n + exp(-A/eps)) = logsum(u, -A).

    Finite everywhere (extinct nodes map to -A); monotone in u.  Warns when a
    supplied u_m puts A outside the meaningful band 0 < A < -u_m.
    """
    if eps <= 0:
        raise ValidationError("aux_field_vA requires eps > 0")
    if u_m is not None and not (0.0 < A < -u_m):
        warnings.warn(f"A = {A} outside (0, {-u_m}); v_A loses its pinning meaning",
                      stacklevel=2)
    vals = stable_logsum(u_eps.values, np.full_like(u_eps.values, -A), eps)
    return SpaceTimeField(u_eps.grid, vals, u_eps.u_floor)


def solve_density(
    problem: ProblemSpec,
    grid: Grid,
    scheme: SplitSchemeConfig | None = None,
) -> SpaceTimeField:
    """Direct density march n_t - eps n_xx = n R / eps - sqrt-sink, for cross-checks.

    Explicit conservative diffusion with reflecting edges, implicit-in-n linear
    rate, and the exact per-cell sink sqrt(n)(dt) = max(0, sqrt(n) -
    dt*exp(u_m/(2 eps))/(2 eps)).  Only trustworthy for eps not too small; the
    initial data exp(u0/eps) must be representable.
    """
    scheme = scheme or SplitSchemeConfig()
    eps = problem.epsilon
    dt, dx = grid.dt, grid.dx
    u0_vals = problem.u0(grid.nodes())
    u0_max = float(np.max(u0_vals))
    if u0_max / eps <= math.log(np.finfo(float).tiny):
        raise ValidationError(
            "initial density exp(u0/eps) underflows everywhere; increase eps"
        )
    rate = problem.rate(grid.nodes())
    n = np.exp(u0_vals / eps)
    out = np.empty((grid.nt + 1, grid.nx))
    out[0] = n
    alln = np.ones(grid.nx, dtype=bool)
    # implicit rate substep must keep 1 - dt R / eps well away from zero
    max_pos_rate = float(np.max(rate, initial=0.0))
    nrate = max(1, int(math.ceil(2.0 * dt * max(max_pos_rate, 0.0) / eps)))
    sink_drop = dt * math.exp(problem.u_m / (2.0 * eps)) / (2.0 * eps)
    for k in range(grid.nt):
        n, _ = _explicit_diffusion(n, alln, eps * dt, dx, scheme.cfl_safety)
        for _ in range(nrate):
            n = n / (1.0 - (dt / nrate) * rate / eps)
        s = np.sqrt(np.maximum(n, 0.0))
        s = np.maximum(0.0, s - sink_drop)
        n = s * s
        out[k + 1] = n
    return SpaceTimeField(grid, out, problem.u_floor)
