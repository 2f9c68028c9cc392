"""Grids, nodal fields, problem data, and exponential-scale utilities.

Everything downstream works in the log-density variable u.  A finite sentinel
``u_floor`` (default -50) stands in for -infinity: any value <= u_floor means
"extinct here" and is absorbing.  Fields are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

DEFAULT_U_FLOOR = -50.0

REACTION_FORMS = ("threshold_preserving", "literal_power")

PROFILE_KINDS = ("constant", "quadratic", "sinusoidal", "table")


class ConfigError(ValueError):
    """A configuration document is malformed or incomplete."""


class ValidationError(ValueError):
    """Problem data violates a declared precondition."""


class SchemeError(RuntimeError):
    """A numerical-scheme assertion failed; indicates a scheme bug, not a math outcome."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [x_min, x_max] x [0, t_final], one space dimension.

    nx is the number of space nodes (dx = (x_max - x_min)/(nx - 1)), nt the
    number of time steps (dt = t_final/nt), so there are nt + 1 time rows.
    """

    x_min: float
    x_max: float
    nx: int
    t_final: float
    nt: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValidationError("grid endpoints must be finite")
        if not self.x_min < self.x_max:
            raise ValidationError("grid requires x_min < x_max")
        if int(self.nx) != self.nx or self.nx < 3:
            raise ValidationError("grid requires nx >= 3 space nodes")
        if not (math.isfinite(self.t_final) and self.t_final > 0):
            raise ValidationError("grid requires t_final > 0")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValidationError("grid requires nt >= 1 time steps")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.t_final / self.nt

    def nodes(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.nx)
        x.setflags(write=False)
        return x

    def times(self) -> np.ndarray:
        t = np.linspace(0.0, self.t_final, self.nt + 1)
        t.setflags(write=False)
        return t

    def x_index(self, x: float) -> int:
        """Nearest node index for x; the point must lie within half a cell of it."""
        i = int(math.floor((x - self.x_min) / self.dx + 0.5))
        if i < 0 or i >= self.nx or abs(x - (self.x_min + i * self.dx)) > 0.5 * self.dx + 1e-9:
            raise ValidationError(f"x = {x} is not on the grid")
        return i

    def t_index(self, t: float) -> int:
        k = int(math.floor(t / self.dt + 0.5))
        if k < 0 or k > self.nt or abs(t - k * self.dt) > 0.5 * self.dt + 1e-9:
            raise ValidationError(f"t = {t} is not on the grid")
        return k


def build_grid(x_min: float, x_max: float, nx: int, t_final: float, nt: int) -> Grid:
    """Construct a validated uniform space-time grid."""
    return Grid(x_min, x_max, nx, t_final, nt)


@dataclass(frozen=True)
class ProfileSpec:
    """A one-dimensional profile: constant, named analytic shape, or sample table.

    kinds:
      constant    -> value
      quadratic   -> -scale * (x - center)**2
      sinusoidal  -> offset + amplitude * sin(frequency * x)
      table       -> linear interpolation of (xs, ys), clamped outside
    An optional declared Lipschitz bound is checked against grid samplings.
    """

    kind: str
    value: float = 0.0
    scale: float = 1.0
    center: float = 0.0
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    xs: tuple = ()
    ys: tuple = ()
    lipschitz_bound: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS:
            raise ValidationError(f"unknown profile kind '{self.kind}'")
        if self.kind == "table":
            xs = np.asarray(self.xs, dtype=float)
            ys = np.asarray(self.ys, dtype=float)
            if xs.size == 0 or ys.size == 0:
                raise ValidationError("table profile requires non-empty samples")
            if xs.shape != ys.shape:
                raise ValidationError("table profile requires matching xs/ys lengths")
            if not np.all(np.diff(xs) > 0):
                raise ValidationError("table profile requires strictly increasing xs")
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
                raise ValidationError("table profile requires finite samples")
        else:
            for name in ("value", "scale", "center", "offset", "amplitude", "frequency"):
                if not math.isfinite(getattr(self, name)):
                    raise ValidationError(f"profile parameter '{name}' must be finite")
        if self.lipschitz_bound is not None and self.lipschitz_bound < 0:
            raise ValidationError("lipschitz_bound must be nonnegative")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValidationError("profile is not constant")
        return self.value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full_like(x, self.value)
        elif self.kind == "quadratic":
            out = -self.scale * (x - self.center) ** 2
        elif self.kind == "sinusoidal":
            out = self.offset + self.amplitude * np.sin(self.frequency * x)
        else:
            out = np.interp(x, np.asarray(self.xs, float), np.asarray(self.ys, float))
        return out

    def analytic_callable(self) -> Callable | None:
        """A smooth evaluator for refinement steps; None for tabulated data."""
        if self.kind == "table":
            return None
        return self.__call__

    def default_lipschitz(self, lo: float, hi: float) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "quadratic":
            return 2.0 * abs(self.scale) * max(abs(lo - self.center), abs(hi - self.center))
        if self.kind == "sinusoidal":
            return abs(self.amplitude * self.frequency)
        xs = np.asarray(self.xs, float)
        ys = np.asarray(self.ys, float)
        if xs.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))

    def support_intervals(self, level: float, lo: float, hi: float) -> list[tuple[float, float]]:
        """Open intervals of {x in [lo, hi]: profile(x) > level}."""
        if self.kind == "constant":
            return [(lo, hi)] if self.value > level else []
        if self.kind == "quadratic":
            # -s(x-c)^2 > level  <=>  (x-c)^2 < -level/s
            if self.scale <= 0:
                raise ValidationError("quadratic support needs scale > 0")
            if level >= 0:
                return []
            r = math.sqrt(-level / self.scale)
            a, b = max(lo, self.center - r), min(hi, self.center + r)
            return [(a, b)] if a < b else []
        # generic scan: dense sampling with linear crossing refinement
        if self.kind == "table":
            xs = np.asarray(self.xs, float)
            pts = np.union1d(xs, np.linspace(lo, hi, 2049))
            pts = pts[(pts >= lo) & (pts <= hi)]
        else:
            pts = np.linspace(lo, hi, 4097)
        vals = self(pts) - level
        out: list[tuple[float, float]] = []
        start = None
        for j in range(pts.size):
            above = vals[j] > 0
            if above and start is None:
                if j == 0:
                    start = pts[0]
                else:
                    f0, f1 = vals[j - 1], vals[j]
                    start = pts[j - 1] + (pts[j] - pts[j - 1]) * (-f0) / (f1 - f0)
            elif not above and start is not None:
                f0, f1 = vals[j - 1], vals[j]
                end = pts[j - 1] + (pts[j] - pts[j - 1]) * (-f0) / (f1 - f0)
                out.append((start, end))
                start = None
        if start is not None:
            out.append((start, pts[-1]))
        return out


# The rate R(x) is specified exactly like an initial profile.
RateSpec = ProfileSpec


@dataclass(frozen=True)
class ProblemSpec:
    """Data for one run: growth rate R(x), initial log-density u0, threshold u_m.

    gamma is the reaction exponent in (0,1); reaction_form selects between the
    threshold-preserving generalization exp((1-gamma)(u_m-u)/eps) and the
    literal power form exp((gamma*u_m-(1-gamma)u)/eps).  They coincide at
    gamma = 1/2.  epsilon is the scaling parameter, u_floor the extinction
    sentinel (must sit well below u_m).
    """

    rate: ProfileSpec
    u0: ProfileSpec
    u_m: float
    epsilon: float
    gamma: float = 0.5
    reaction_form: str = "threshold_preserving"
    u_floor: float = DEFAULT_U_FLOOR

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u_m) and self.u_m < 0):
            raise ValidationError("u_m must be finite and negative")
        if not (0.0 < self.gamma < 1.0):
            raise ValidationError("gamma must lie in (0, 1)")
        if self.reaction_form not in REACTION_FORMS:
            raise ValidationError(f"unknown reaction_form '{self.reaction_form}'")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValidationError("epsilon must be positive")
        if not self.u_floor < self.u_m - 10.0:
            raise ValidationError("u_floor must sit below u_m - 10")


def validate_on_grid(problem: ProblemSpec, grid: Grid) -> None:
    """Check declared Lipschitz bounds of rate and u0 against their grid samplings."""
    for name, spec in (("rate", problem.rate), ("u0", problem.u0)):
        if spec.lipschitz_bound is None:
            continue
        vals = spec(grid.nodes())
        worst = float(np.max(np.abs(np.diff(vals)))) / grid.dx if grid.nx > 1 else 0.0
        if worst > spec.lipschitz_bound + 1e-9:
            raise ValidationError(
                f"{name} sampling has grid Lipschitz constant {worst:.6g} "
                f"exceeding declared bound {spec.lipschitz_bound:.6g}"
            )


class ScalarField:
    """Nodal values over a grid's space nodes at one time; <= u_floor means extinct."""

    def __init__(self, grid: Grid, values, u_floor: float = DEFAULT_U_FLOOR):
        v = np.array(values, dtype=float)
        if v.shape != (grid.nx,):
            raise ValidationError(f"scalar field needs shape ({grid.nx},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("scalar field values must be finite (use the sentinel)")
        v.setflags(write=False)
        self.grid = grid
        self.values = v
        self.u_floor = float(u_floor)

    def extinct(self) -> np.ndarray:
        return self.values <= self.u_floor

    def finite(self) -> np.ndarray:
        return self.values > self.u_floor

    def lipschitz(self) -> float:
        """Max one-sided slope over adjacent live node pairs."""
        live = self.finite()
        pair = live[1:] & live[:-1]
        if not np.any(pair):
            return 0.0
        d = np.abs(np.diff(self.values))[pair]
        return float(np.max(d)) / self.grid.dx

    def shifted(self, delta: float) -> "ScalarField":
        """Shift live values by delta; extinct nodes stay pinned at the sentinel."""
        v = np.where(self.finite(), self.values + delta, self.u_floor)
        v = np.where(v > self.u_floor, v, self.u_floor)
        return ScalarField(self.grid, v, self.u_floor)


class SpaceTimeField:
    """Values on the full (nt+1, nx) node lattice, immutable, with sentinel semantics.

    Solvers may attach optimizer records for trajectory backtracking:
    argmax_kind "initial" stores, per node, the t=0 maximizer position y0 and
    its data value u00 (straight-line trajectories); "step" stores per-step
    winning offsets or predecessor indices.  aux carries solver diagnostics.
    """

    def __init__(
        self,
        grid: Grid,
        values,
        u_floor: float = DEFAULT_U_FLOOR,
        *,
        argmax_kind: str | None = None,
        argmax=None,
        y0=None,
        u00=None,
        rate_const: float | None = None,
        rate_values=None,
        aux: dict | None = None,
    ):
        v = np.array(values, dtype=float)
        if v.shape != (grid.nt + 1, grid.nx):
            raise ValidationError(
                f"space-time field needs shape ({grid.nt + 1}, {grid.nx}), got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("space-time field values must be finite (use the sentinel)")
        v.setflags(write=False)
        self.grid = grid
        self.values = v
        self.u_floor = float(u_floor)
        if argmax_kind not in (None, "initial", "step", "step_refined"):
            raise ValidationError(f"unknown argmax kind '{argmax_kind}'")
        self.argmax_kind = argmax_kind
        self.argmax = None if argmax is None else np.asarray(argmax)
        self.y0 = None if y0 is None else np.asarray(y0, dtype=float)
        self.u00 = None if u00 is None else np.asarray(u00, dtype=float)
        self.rate_const = rate_const
        self.rate_values = None if rate_values is None else np.asarray(rate_values, dtype=float)
        self.aux = dict(aux) if aux else {}

    def row(self, k: int) -> np.ndarray:
        return self.values[k]

    def at(self, x: float, t: float) -> float:
        return float(self.values[self.grid.t_index(t), self.grid.x_index(x)])

    def scalar(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k], self.u_floor)

    def extinct(self) -> np.ndarray:
        return self.values <= self.u_floor

    def finite(self) -> np.ndarray:
        return self.values > self.u_floor


class SpaceTimeMask:
    """Boolean node set over the (nt+1, nx) lattice (e.g. a survival region)."""

    def __init__(self, grid: Grid, flags):
        f = np.array(flags, dtype=bool)
        if f.shape != (grid.nt + 1, grid.nx):
            raise ValidationError(
                f"mask needs shape ({grid.nt + 1}, {grid.nx}), got {f.shape}"
            )
        f.setflags(write=False)
        self.grid = grid
        self.flags = f

    def __and__(self, other: "SpaceTimeMask") -> "SpaceTimeMask":
        self._check(other)
        return SpaceTimeMask(self.grid, self.flags & other.flags)

    def __or__(self, other: "SpaceTimeMask") -> "SpaceTimeMask":
        self._check(other)
        return SpaceTimeMask(self.grid, self.flags | other.flags)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpaceTimeMask):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.flags, other.flags))

    def __hash__(self):
        return hash((self.grid, self.flags.tobytes()))

    def count(self) -> int:
        return int(np.count_nonzero(self.flags))

    def row(self, k: int) -> np.ndarray:
        return self.flags[k]

    def contains(self, x: float, t: float) -> bool:
        return bool(self.flags[self.grid.t_index(t), self.grid.x_index(x)])

    def _check(self, other: "SpaceTimeMask") -> None:
        if self.grid != other.grid:
            raise ValidationError("mask grids differ")


def sample_profile(spec: ProfileSpec, grid: Grid, u_floor: float = DEFAULT_U_FLOOR) -> ScalarField:
    """Evaluate a profile on the grid's space nodes."""
    vals = spec(grid.nodes())
    vals = np.where(vals > u_floor, vals, u_floor)
    return ScalarField(grid, vals, u_floor)


def hopf_cole(n: SpaceTimeField, eps: float, u_floor: float = DEFAULT_U_FLOOR) -> SpaceTimeField:
    """u = eps*ln(n).  Zero or underflowing density maps to the sentinel."""
    if eps <= 0:
        raise ValidationError("hopf_cole requires eps > 0")
    if np.any(n.values < 0):
        raise ValidationError("densities must be nonnegative")
    with np.errstate(divide="ignore"):
        u = eps * np.log(n.values)
    u = np.where(u > u_floor, u, u_floor)
    return SpaceTimeField(n.grid, u, u_floor)


def hopf_cole_inverse(u: SpaceTimeField, eps: float) -> SpaceTimeField:
    """n = exp(u/eps); extinct nodes map to density zero."""
    if eps <= 0:
        raise ValidationError("hopf_cole_inverse requires eps > 0")
    n = np.where(u.finite(), np.exp(u.values / eps), 0.0)
    return SpaceTimeField(u.grid, n, u.u_floor)


def stable_logsum(u, v, eps):
    """eps*ln(exp(u/eps) + exp(v/eps)) evaluated as max + eps*log1p(exp(-gap/eps)).

    Monotone in both arguments and bounded by max(u,v) + eps*ln 2; safe against
    overflow for arbitrarily negative inputs (including the sentinel).
    """
    if eps <= 0:
        raise ValidationError("stable_logsum requires eps > 0")
    scalar = np.isscalar(u) and np.isscalar(v)
    hi = np.maximum(u, v)
    lo = np.minimum(u, v)
    out = hi + eps * np.log1p(np.exp((lo - hi) / eps))
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# configuration documents

_GRID_KEYS = ("x_min", "x_max", "nx", "t_final", "nt")
_PROBLEM_KEYS = ("rate", "u0", "u_m", "epsilon", "gamma", "reaction_form", "u_floor")
_PROBLEM_REQUIRED = ("rate", "u0", "u_m", "epsilon")
_PROFILE_KEYS = {
    "constant": ("kind", "value", "lipschitz_bound"),
    "quadratic": ("kind", "scale", "center", "lipschitz_bound"),
    "sinusoidal": ("kind", "offset", "amplitude", "frequency", "lipschitz_bound"),
    "table": ("kind", "xs", "ys", "lipschitz_bound"),
}


def check_keys(section: dict, allowed: Iterable[str], required: Iterable[str], where: str) -> None:
    """Fail fast on unknown or missing keys, naming the offender."""
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    allowed = set(allowed)
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key '{k}' in {where}")
    for k in required:
        if k not in section:
            raise ConfigError(f"missing key '{k}' in {where}")


def parse_profile(doc: dict, where: str) -> ProfileSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{where} must be an object with a 'kind' key")
    kind = doc["kind"]
    if kind not in _PROFILE_KEYS:
        raise ConfigError(f"unknown profile kind '{kind}' in {where}")
    check_keys(doc, _PROFILE_KEYS[kind], ("kind",), where)
    kwargs = {k: v for k, v in doc.items() if k != "kind"}
    if kind == "table":
        kwargs["xs"] = tuple(float(v) for v in kwargs.get("xs", ()))
        kwargs["ys"] = tuple(float(v) for v in kwargs.get("ys", ()))
    try:
        return ProfileSpec(kind=kind, **kwargs)
    except ValidationError as exc:
        raise ConfigError(f"bad profile in {where}: {exc}") from exc


def parse_grid(doc: dict) -> Grid:
    check_keys(doc, _GRID_KEYS, _GRID_KEYS, "grid")
    try:
        return build_grid(
            float(doc["x_min"]), float(doc["x_max"]), int(doc["nx"]),
            float(doc["t_final"]), int(doc["nt"]),
        )
    except ValidationError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def parse_problem(doc: dict) -> ProblemSpec:
    check_keys(doc, _PROBLEM_KEYS, _PROBLEM_REQUIRED, "problem")
    rate = parse_profile(doc["rate"], "problem.rate")
    u0 = parse_profile(doc["u0"], "problem.u0")
    kwargs = {}
    for k in ("gamma", "reaction_form", "u_floor"):
        if k in doc:
            kwargs[k] = doc[k]
    try:
        return ProblemSpec(
            rate=rate, u0=u0, u_m=float(doc["u_m"]), epsilon=float(doc["epsilon"]), **kwargs
        )
    except ValidationError as exc:
        raise ConfigError(f"bad problem: {exc}") from exc


def load_config(path: str) -> dict:
    """Load a JSON run configuration; 'grid' and 'problem' sections are validated here."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    for key in ("grid", "problem"):
        if key not in doc:
            raise ConfigError(f"missing key '{key}' in config root")
    doc["_grid"] = parse_grid(doc["grid"])
    doc["_problem"] = parse_problem(doc["problem"])
    return doc
