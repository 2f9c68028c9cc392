"""Command-line orchestration over the solver modules.

One JSON config drives every subcommand: a "grid" section, a "problem"
section, and at most one command section named after the subcommand (the
dash in closed-form becomes an underscore).  Unknown keys fail fast with the
offending key named.  Each run writes CSV artifacts plus a manifest.json last
(its presence marks completion, its digests certify the other files); --svg
adds figures next to the CSVs.

Exit codes: 0 success, 2 config or data validation error, 3 scheme assertion
failure, 4 completed run whose iteration did not converge.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np
from scipy.ndimage import binary_dilation

from . import closed_forms, report
from .core import (
    ConfigError,
    Grid,
    ProblemSpec,
    SchemeError,
    ValidationError,
    check_keys,
    load_config,
    sample_profile,
)
from .hj_solver import (
    backtrack_trajectory,
    region_above,
    solve_obstacle,
    solve_u1,
    state_constraint_audit,
)
from .iterator import check_delay, compute_U, estimate_rho, hbar, iteration_chain
from .rd_solver import SplitSchemeConfig, aux_field_vA, solve_density, solve_simplified, solve_viscous_hj

_COMMANDS = ("simulate", "eikonal", "obstacle", "iterate", "closed-form", "compare", "delay", "audit")

_SECTION_KEYS = {
    "simulate": (("epsilons", "times", "variant", "cfl_safety", "diffusion_treatment"), ()),
    "eikonal": (("force_stepping", "times", "trajectory"), ()),
    "obstacle": (("A", "tol", "times"), ("A",)),
    "iterate": (("deltas", "mu", "max_iter"), ("deltas",)),
    "closed_form": (("points", "eta", "delta"), ()),
    "compare": (
        ("target", "epsilons", "window", "exterior_window", "A", "deltas", "mu",
         "gamma_sweep", "cfl_safety", "diffusion_treatment"),
        ("target", "epsilons", "window"),
    ),
    "delay": (("delta", "mu", "h", "i_max"), ("delta", "mu")),
    "audit": (("x", "t", "level"), ("x", "t")),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="survfront",
        description="Reaction-diffusion survival-front laboratory",
    )
    p.add_argument("command", choices=_COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default="survfront_out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="recorded in the manifest; orchestration is single-threaded")
    p.add_argument("--svg", action="store_true", help="also render figures")
    return p


def _section(doc: dict, command: str) -> dict:
    name = command.replace("-", "_")
    allowed_root = {"grid", "problem", name}
    for key in doc:
        if key.startswith("_"):
            continue
        if key not in allowed_root:
            raise ConfigError(f"unknown key '{key}' in config root for command {command}")
    sec = doc.get(name, {})
    allowed, required = _SECTION_KEYS[name]
    check_keys(sec, allowed, required, name)
    return sec


def _scheme_from(sec: dict) -> SplitSchemeConfig:
    kwargs = {}
    if "cfl_safety" in sec:
        kwargs["cfl_safety"] = float(sec["cfl_safety"])
    if "diffusion_treatment" in sec:
        kwargs["diffusion_treatment"] = str(sec["diffusion_treatment"])
    return SplitSchemeConfig(**kwargs)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(float(v))
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _solver_diag(field) -> dict:
    sub = field.aux.get("gradient_subcycles", [])
    ext = field.aux.get("extinct_per_step", [])
    return {
        "gradient_subcycles_total": int(sum(sub)),
        "gradient_subcycles_max": int(max(sub)) if sub else 0,
        "extinct_cells_final": int(ext[-1]) if ext else 0,
    }


def _cmd_simulate(sec, problem, grid, out, svg):
    variant = sec.get("variant", "full")
    if variant not in ("full", "simplified", "density"):
        raise ConfigError("simulate.variant must be full, simplified, or density")
    eps_list = [float(e) for e in sec.get("epsilons", [problem.epsilon])]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigError("simulate.epsilons must be positive")
    times = sec.get("times")
    scheme = _scheme_from(sec)
    files, diag = [], {}
    for idx, eps in enumerate(eps_list):
        prob = replace(problem, epsilon=eps)
        if variant == "full":
            field = solve_viscous_hj(prob, grid, scheme)
        elif variant == "simplified":
            field = solve_simplified(prob, grid, scheme)
        else:
            field = solve_density(prob, grid, scheme)
        tag = f"eps{idx:03d}"
        value_name = "n" if variant == "density" else "u"
        files.append(report.write_field_csv(
            os.path.join(out, f"field_{tag}.csv"), field, times, value_name=value_name))
        diag[tag] = {"epsilon": eps, **_solver_diag(field)}
        if svg:
            level = None if variant == "density" else problem.u_m
            files.append(report.render_heatmap(
                os.path.join(out, f"heatmap_{tag}.svg"), field, level,
                title=f"{variant} eps={eps:g}"))
    return files, {"variant": variant, "per_epsilon": diag}, 0


def _cmd_eikonal(sec, problem, grid, out, svg):
    # backtracking needs exact node-DP records, so trajectory requests turn
    # refinement off on the stepping path (constant-rate dispatch is unaffected)
    field = solve_u1(problem, grid,
                     force_stepping=bool(sec.get("force_stepping", False)),
                     refine="trajectory" not in sec)
    files = [report.write_field_csv(os.path.join(out, "u1.csv"), field, sec.get("times"))]
    diag = {}
    if "trajectory" in sec:
        tsec = sec["trajectory"]
        check_keys(tsec, ("x", "t"), ("x", "t"), "eikonal.trajectory")
        traj = backtrack_trajectory(field, float(tsec["x"]), float(tsec["t"]))
        files.append(report.write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj, field))
        diag["trajectory_value"] = traj.value
        if svg:
            files.append(report.render_trajectory(os.path.join(out, "trajectory.svg"), field, traj))
    if svg:
        files.append(report.render_heatmap(os.path.join(out, "u1.svg"), field, problem.u_m, title="u1"))
    return files, diag, 0


def _cmd_obstacle(sec, problem, grid, out, svg):
    A = float(sec["A"])
    tol = float(sec["tol"]) if "tol" in sec else None
    field = solve_obstacle(problem, grid, A, tol=tol)
    files = [report.write_field_csv(os.path.join(out, "obstacle.csv"), field, sec.get("times"))]
    if svg:
        files.append(report.render_heatmap(os.path.join(out, "obstacle.svg"), field, -A, title="obstacle value"))
    return files, {"obstacle_gap": field.aux.get("obstacle_gap")}, 0


def _cmd_iterate(sec, problem, grid, out, svg):
    deltas = [float(d) for d in sec["deltas"]]
    mu = float(sec.get("mu", 0.0))
    max_iter = int(sec.get("max_iter", 8))
    res = compute_U(problem, grid, deltas, mu, max_iter=max_iter)
    files = [
        report.write_field_csv(os.path.join(out, "U.csv"), res.U),
        report.write_mask_csv(os.path.join(out, "omega.csv"), res.Omega),
    ]
    chain = iteration_chain(problem, grid, min(deltas), mu, max_iter)
    states = [chain[0]]
    for s in chain[1:]:
        states.append(s)
        if s.omega == states[-2].omega:
            break
    cells = []
    for s in states:
        files.append(report.write_mask_csv(os.path.join(out, f"mask_i{s.index}.csv"), s.omega))
        cells.append(int(s.omega.count()))
    log = {
        "per_delta": [
            {"delta": d, "iterations": n, "converged": bool(c)}
            for d, n, c in res.report.per_delta
        ],
        "omega_cells_per_i": cells,
        "monotonicity": {
            "max_violation": res.report.max_violation,
            "richardson_gap": res.report.richardson_gap,
        },
    }
    files.append(report.write_json(os.path.join(out, "iteration_log.json"), _jsonable(log)))
    if svg:
        files.append(report.render_heatmap(os.path.join(out, "U.svg"), res.U, problem.u_m, title="U"))
        files.append(report.render_mask(os.path.join(out, "omega.svg"), res.Omega))
    return files, log, 0 if res.converged else 4


def _cmd_closed_form(sec, problem, grid, out, svg):
    if not problem.rate.is_constant:
        raise ConfigError("closed-form needs a constant rate")
    R = problem.rate.constant_value
    u_m = problem.u_m
    floor = problem.u_floor
    p = closed_forms.ConstRateProblem(R=R, u0=problem.u0, u_m=u_m)
    eta = float(sec["eta"]) if "eta" in sec else None
    delta = float(sec["delta"]) if "delta" in sec else None

    names = ["tilde", "breve", "U"]
    if eta is not None:
        names.append("w_eta")
    if delta is not None:
        names.append("U_delta")

    def evaluate(xx, tt):
        row = {
            "tilde": closed_forms.tilde_u(xx, tt, u_m, sentinel=floor),
            "breve": closed_forms.breve_u(xx, tt, u_m, sentinel=floor),
            "U": closed_forms.const_rate_U(p, xx, tt, sentinel=floor),
        }
        if eta is not None:
            row["w_eta"] = closed_forms.w_eta(xx, tt, eta, u_m, sentinel=floor)
        if delta is not None:
            row["U_delta"] = closed_forms.const_rate_U_delta(p, delta, xx, tt, sentinel=floor)
        return row

    files = []
    points = sec.get("points", [])
    rows = []
    for pt in points:
        xx, tt = float(pt[0]), float(pt[1])
        vals = evaluate(xx, tt)
        rows.append((xx, tt) + tuple(vals[n] for n in names))
        shown = " ".join(f"{n}={report.fmt6(vals[n], floor)}" for n in names)
        print(f"closed-form(x={xx:g}, t={tt:g}): {shown}")
    if rows:
        files.append(report.write_rows(os.path.join(out, "points.csv"), ("x", "t", *names), rows))

    x = grid.nodes()
    t_end = grid.t_final
    curves = {n: np.array([evaluate(float(xx), t_end)[n] for xx in x]) for n in names}
    samp_rows = [(xx, t_end) + tuple(curves[n][i] for n in names) for i, xx in enumerate(x)]
    files.append(report.write_rows(os.path.join(out, "samples.csv"), ("x", "t", *names), samp_rows))
    if svg:
        files.append(report.render_profiles(
            os.path.join(out, "profiles.svg"), x, curves, floor,
            title=f"closed forms at t={t_end:g}"))
    return files, {"names": names}, 0


def _window_mask(grid: Grid, w: dict, where: str) -> np.ndarray:
    check_keys(w, ("x_min", "x_max", "t_min", "t_max"),
               ("x_min", "x_max", "t_min", "t_max"), where)
    x, t = grid.nodes(), grid.times()
    mx = (x >= float(w["x_min"]) - 1e-12) & (x <= float(w["x_max"]) + 1e-12)
    mt = (t >= float(w["t_min"]) - 1e-12) & (t <= float(w["t_max"]) + 1e-12)
    m = mt[:, None] & mx[None, :]
    if not m.any():
        raise ConfigError(f"{where} contains no grid nodes")
    return m


def _assert_window_clear(field, m: np.ndarray, u_m: float) -> None:
    # comparisons are meaningless within 2 cells of the {target = u_m} level set
    dil = binary_dilation(m, structure=np.ones((3, 3), dtype=bool), iterations=2)
    above = field.values > u_m
    n_above = int(np.count_nonzero(dil & above))
    n_below = int(np.count_nonzero(dil & ~above))
    if n_above and n_below:
        raise ValidationError(
            "evaluation window comes within 2 cells of the target = u_m level set")


def _compare_target(sec, problem, grid):
    target = sec["target"]
    if target == "u1":
        return solve_u1(problem, grid), 0
    if target == "obstacle":
        if "A" not in sec:
            raise ConfigError("compare.target obstacle needs key 'A'")
        return solve_obstacle(problem, grid, float(sec["A"])), 0
    if target == "iterated_U":
        if "deltas" not in sec:
            raise ConfigError("compare.target iterated_U needs key 'deltas'")
        res = compute_U(problem, grid, [float(d) for d in sec["deltas"]],
                        float(sec.get("mu", 0.0)))
        return res.U, (0 if res.converged else 4)
    if target == "breve":
        if not problem.rate.is_constant:
            raise ConfigError("compare.target breve needs a constant rate")
        fn = lambda xx, tt: closed_forms.breve_u(xx, tt, problem.u_m, sentinel=problem.u_floor)
        return closed_forms.sample_closed_form(fn, grid, problem.u_m, sentinel=problem.u_floor), 0
    raise ConfigError("compare.target must be one of u1, obstacle, iterated_U, breve")


def _cmd_compare(sec, problem, grid, out, svg):
    eps_list = [float(e) for e in sec["epsilons"]]
    if len(eps_list) < 2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("compare.epsilons must be strictly descending with >= 2 entries")
    target, code = _compare_target(sec, problem, grid)
    win = _window_mask(grid, sec["window"], "compare.window")
    _assert_window_clear(target, win, problem.u_m)
    ext = _window_mask(grid, sec["exterior_window"], "compare.exterior_window") \
        if "exterior_window" in sec else None
    gammas = [float(g) for g in sec.get("gamma_sweep", [])]
    scheme = _scheme_from(sec)
    floor = problem.u_floor

    tgt = target.values
    tgt_fin = tgt > floor
    header = ["epsilon", "linf_gap", "monotone_vs_prev"]
    if ext is not None:
        header.append("exterior_max_u")
    if gammas:
        header.append("pairwise_gamma_gap")
    rows, gaps = [], []
    for eps in eps_list:
        prob = replace(problem, epsilon=eps)
        u_eps = solve_viscous_hj(prob, grid, scheme)
        sel = win & tgt_fin
        diff = np.abs(u_eps.values[sel] - tgt[sel])
        ext_dead = win & ~tgt_fin & (u_eps.values > floor)
        gap = float(np.max(diff)) if diff.size else 0.0
        if np.any(ext_dead):
            gap = math.inf
        gaps.append(gap)
        row = [eps, gap, "" if len(gaps) == 1 else str(int(gaps[-1] < gaps[-2]))]
        if ext is not None:
            row.append(float(np.max(u_eps.values[ext])))
        if gammas:
            fields = [solve_viscous_hj(replace(prob, gamma=g), grid, scheme) for g in gammas]
            pair = 0.0
            for i in range(len(fields)):
                for j in range(i + 1, len(fields)):
                    pair = max(pair, float(np.max(np.abs(
                        fields[i].values[win] - fields[j].values[win]))))
            row.append(pair)
        rows.append(row)
    files = [report.write_rows(os.path.join(out, "table.csv"), header, rows)]
    if svg:
        files.append(report.render_convergence(os.path.join(out, "convergence.svg"),
                                               eps_list, gaps))
    return files, {"gaps": gaps}, code


def _cmd_delay(sec, problem, grid, out, svg):
    delta = float(sec["delta"])
    mu = float(sec["mu"])
    i_max = int(sec.get("i_max", 4))
    rate_field = sample_profile(problem.rate, grid, problem.u_floor)
    a = float(np.min(rate_field.values))
    u0_field = sample_profile(problem.u0, grid, problem.u_floor)
    rho = estimate_rho(u0_field, delta, mu, problem.u_m)
    diag = {"a": a, "rho": rho}
    if "h" in sec:
        h = float(sec["h"])
    else:
        if a <= 0:
            raise ValidationError("delay without explicit h needs a positive rate lower bound")
        if not math.isfinite(rho):
            raise ValidationError("estimate_rho found no finite rho; provide h explicitly")
        diag["hbar"] = hbar(mu, a, rho)
        h = diag["hbar"]
    rep = check_delay(problem, grid, delta, mu, h, i_max)
    diag.update(holds=rep.holds, worst_gap=rep.worst_gap, h_used=rep.h_used,
                shift_rows=rep.shift_rows)
    files = [
        report.write_rows(os.path.join(out, "delay.csv"), ("iteration", "gap"),
                          [(str(i + 1), g) for i, g in enumerate(rep.per_iteration)]),
        report.write_json(os.path.join(out, "delay_report.json"),
                          _jsonable({**diag, "per_iteration": rep.per_iteration})),
    ]
    print(f"delay: holds={rep.holds} worst_gap={rep.worst_gap:g} h_used={rep.h_used:g}")
    return files, diag, 0


def _cmd_audit(sec, problem, grid, out, svg):
    x, t = float(sec["x"]), float(sec["t"])
    level = float(sec.get("level", problem.u_m))
    field = solve_u1(problem, grid, refine=False)
    traj = backtrack_trajectory(field, x, t)
    mask = region_above(field, level)
    rep = state_constraint_audit(traj, mask)
    files = [
        report.write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj, field),
        report.write_json(os.path.join(out, "audit.json"), _jsonable({
            "admissible": rep.admissible,
            "first_violation": list(rep.first_violation) if rep.first_violation else None,
            "checked": rep.checked,
        })),
    ]
    verdict = "admissible" if rep.admissible else f"violates at {rep.first_violation}"
    print(f"audit(x={x:g}, t={t:g}): {verdict}")
    if svg:
        files.append(report.render_trajectory(os.path.join(out, "trajectory.svg"), field, traj))
    return files, {"admissible": rep.admissible}, 0


_RUNNERS = {
    "simulate": _cmd_simulate,
    "eikonal": _cmd_eikonal,
    "obstacle": _cmd_obstacle,
    "iterate": _cmd_iterate,
    "closed-form": _cmd_closed_form,
    "compare": _cmd_compare,
    "delay": _cmd_delay,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        doc = load_config(args.config)
        sec = _section(doc, args.command)
        grid, problem = doc["_grid"], doc["_problem"]
        os.makedirs(args.out, exist_ok=True)
        t1 = time.perf_counter()
        files, diag, code = _RUNNERS[args.command](sec, problem, grid, args.out, args.svg)
        t2 = time.perf_counter()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except SchemeError as exc:
        print(f"scheme assertion failure: {exc}", file=sys.stderr)
        return 3
    echo = {k: v for k, v in doc.items() if not k.startswith("_")}
    manifest = report.write_manifest(
        args.out, echo, files,
        extra={
            "command": args.command,
            "threads": args.threads,
            "scheme_diagnostics": _jsonable(diag),
        },
        timings={"setup_s": t1 - t0, "run_s": t2 - t1},
    )
    print(f"wrote {manifest}")
    return code


if __name__ == "__main__":
    sys.exit(main())
