"""Numerical laboratory for survival fronts in scaled reaction-diffusion models.

The package works in the log-density variable u (Hopf-Cole scale): an
epsilon-viscous Hamilton-Jacobi solver with an exact square-root survival
threshold, the first-order eikonal/obstacle limits, an iterative
state-constrained value construction over shrinking survival regions, the
closed-form references for the constant-rate quadratic benchmark, and a CLI
that turns configs into CSV/JSON artifacts (plus optional figures).
"""

from .core import (
    DEFAULT_U_FLOOR,
    ConfigError,
    Grid,
    ProblemSpec,
    ProfileSpec,
    RateSpec,
    ScalarField,
    SchemeError,
    SpaceTimeField,
    SpaceTimeMask,
    ValidationError,
    build_grid,
    hopf_cole,
    hopf_cole_inverse,
    load_config,
    sample_profile,
    stable_logsum,
)
from .closed_forms import (
    ConstRateProblem,
    breve_u,
    const_rate_U,
    const_rate_U_delta,
    sample_closed_form,
    tilde_u,
    u1_quadratic_unit_rate,
    w_eta,
)
from .hj_solver import (
    AuditReport,
    Trajectory,
    backtrack_trajectory,
    hopf_lax_constant_R,
    lax_oleinik_step,
    region_above,
    solve_obstacle,
    solve_u1,
    state_constraint_audit,
)
from .iterator import (
    DelayReport,
    FixpointResult,
    IterationState,
    SandwichResult,
    UResult,
    check_delay,
    compute_U,
    constrained_value_step,
    estimate_rho,
    hbar,
    init_iteration,
    iterate_fixpoint,
    iteration_chain,
    sandwich_bounds,
)
from .rd_solver import (
    SplitSchemeConfig,
    aux_field_vA,
    reaction_substep,
    solve_density,
    solve_simplified,
    solve_viscous_hj,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_U_FLOOR",
    "ConfigError",
    "Grid",
    "ProblemSpec",
    "ProfileSpec",
    "RateSpec",
    "ScalarField",
    "SchemeError",
    "SpaceTimeField",
    "SpaceTimeMask",
    "ValidationError",
    "build_grid",
    "hopf_cole",
    "hopf_cole_inverse",
    "load_config",
    "sample_profile",
    "stable_logsum",
    "ConstRateProblem",
    "breve_u",
    "const_rate_U",
    "const_rate_U_delta",
    "sample_closed_form",
    "tilde_u",
    "u1_quadratic_unit_rate",
    "w_eta",
    "AuditReport",
    "Trajectory",
    "backtrack_trajectory",
    "hopf_lax_constant_R",
    "lax_oleinik_step",
    "region_above",
    "solve_obstacle",
    "solve_u1",
    "state_constraint_audit",
    "DelayReport",
    "FixpointResult",
    "IterationState",
    "SandwichResult",
    "UResult",
    "check_delay",
    "compute_U",
    "constrained_value_step",
    "estimate_rho",
    "hbar",
    "init_iteration",
    "iterate_fixpoint",
    "iteration_chain",
    "sandwich_bounds",
    "SplitSchemeConfig",
    "aux_field_vA",
    "reaction_substep",
    "solve_density",
    "solve_simplified",
    "solve_viscous_hj",
    "__version__",
]
