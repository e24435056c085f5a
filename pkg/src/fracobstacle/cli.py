"""Command-line front end: solve, verify, sweep, oracle-check.

Exit codes are a stable contract:
    0  success (all requested checks passed)
    2  configuration or usage error
    3  solver failure (iteration limit; a partial record is still written)
    4  verification failure (some check failed or solvers disagree)

Result documents are JSON with floats serialized to 17 significant digits;
identical config and seed produce byte-identical output except for the
timing_seconds field.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .solvers import (
    ORACLE_MAX_N,
    PenaltyParams,
    ProblemSpec,
    Solution,
    SolverError,
    SolverParams,
    brute_force_oracle,
    kkt_violation,
    make_solution,
    reduce_to_zero_forcing,
    solve_active_set,
    solve_penalty,
    solve_projected_gradient,
    solve_psor,
)
from .verify import (
    Report,
    check_bounds_cinfty,
    check_comparison_in_f,
    check_kkt,
    check_lewy_stampacchia,
    check_linfty_dependence,
    check_minty,
    check_smallest_supersolution,
    check_truncation_identities,
)

SCHEMA_VERSION = 1
ORACLE_AGREE_TOL = 1e-7
SWEEP_COLUMNS = ("axis", "value", "solver", "converged", "iterations",
                 "energy", "kkt_violation", "max_penalty_gap", "status")


# --- deterministic JSON ----------------------------------------------------

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def dumps(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, 17-significant-digit floats."""
    out = []
    _emit(obj, out)
    return "".join(out)


def _emit(obj, out: list):
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            if i:
                out.append(", ")
            out.append(json.dumps(k))
            out.append(": ")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(list(obj)):
            if i:
                out.append(", ")
            _emit(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


# --- solving ---------------------------------------------------------------

def run_single(spec: ProblemSpec, method: str, params: SolverParams,
               penalty_params: PenaltyParams | None):
    """Solve with the chosen method; returns (Solution, penalty-extras or None).

    The penalty route reduces to zero forcing first, solves the reduced
    nonnegative-obstacle problem, and reconstructs the original solution by
    adding the shift back.
    """
    if method == "psor":
        return solve_psor(spec, params), None
    if method == "pg":
        return solve_projected_gradient(spec, params), None
    if method == "activeset":
        return solve_active_set(spec, params), None
    if method == "penalty":
        pparams = penalty_params or PenaltyParams()
        reduced = reduce_to_zero_forcing(spec)
        rspec = ProblemSpec(op=spec.op, psi=reduced.psi_reduced, f=np.zeros(spec.n))
        result = solve_penalty(rspec, pparams, params)
        u_full = result.solution.u + reduced.shift
        sol = make_solution(spec, u_full, result.outer_iterations, "penalty",
                            True, params)
        extras = {
            "epsilon": result.epsilon,
            "outer_iterations": result.outer_iterations,
            "damping_used": result.damping_used,
            "max_gap": float((result.u_eps - result.solution.u).max()),
            "u_eps": result.u_eps,
        }
        return sol, extras
    raise ConfigError(f"unknown solver method {method!r}")


def _base_record(command: str, cfg: RunConfig) -> dict:
    grid = cfg.grid()
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": dict(cfg.echo),
        "grid": {"a": cfg.a, "b": cfg.b, "n": cfg.n, "h": grid.h},
        "s": cfg.s,
    }


def _solution_fields(spec: ProblemSpec, sol: Solution, extras: dict | None) -> dict:
    fields = {
        "solver_id": sol.solver_id,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "x": spec.op.grid.nodes(),
        "psi": spec.psi,
        "f": spec.f,
        "u": sol.u,
        "residual": sol.residual,
        "active_set": [int(i) for i in sol.active_set],
        "energy": spec.op.energy(sol.u, spec.f),
    }
    if extras is not None:
        fields["penalty"] = {
            "epsilon": extras["epsilon"],
            "outer_iterations": extras["outer_iterations"],
            "damping_used": extras["damping_used"],
            "max_gap": extras["max_gap"],
            "u_eps": extras["u_eps"],
        }
    else:
        fields["penalty"] = None
    return fields


def _write_json(record: dict, path: str | None, started: float):
    record["timing_seconds"] = time.perf_counter() - started
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(record))
            fh.write("\n")


def _write_solution_csv(path: str, spec: ProblemSpec, sol: Solution):
    x = spec.op.grid.nodes()
    active = np.zeros(spec.n, dtype=int)
    active[sol.active_set] = 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,psi,f,u,r,active\n")
        for i in range(spec.n):
            fh.write(",".join([
                _fmt_float(float(x[i])), _fmt_float(float(spec.psi[i])),
                _fmt_float(float(spec.f[i])), _fmt_float(float(sol.u[i])),
                _fmt_float(float(sol.residual[i])), str(active[i]),
            ]) + "\n")


# --- subcommands -----------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    started = time.perf_counter()
    spec = cfg.build_problem()
    record = _base_record("solve", cfg)
    try:
        sol, extras = run_single(spec, cfg.solver_method, cfg.solver_params,
                                 cfg.penalty_params)
    except SolverError as exc:
        best = getattr(exc, "best", None)
        sol = best if isinstance(best, Solution) else make_solution(
            spec, spec.default_start(), 0, cfg.solver_method, False, cfg.solver_params)
        record.update(_solution_fields(spec, sol, None))
        record["reports"] = []
        record["error"] = str(exc)
        _write_json(record, cfg.output_json, started)
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    record.update(_solution_fields(spec, sol, extras))
    record["reports"] = []
    _write_json(record, cfg.output_json, started)
    if cfg.output_csv:
        _write_solution_csv(cfg.output_csv, spec, sol)
    viol, _ = kkt_violation(spec, sol.u)
    print(f"solved: n={cfg.n} s={cfg.s} solver={sol.solver_id} "
          f"iterations={sol.iterations} energy={spec.op.energy(sol.u, spec.f):.9g} "
          f"kkt_violation={viol:.3e}")
    return 0


def _verify_reports(cfg: RunConfig, spec: ProblemSpec, u: np.ndarray) -> list[Report]:
    tol, samples, seed = cfg.verify_tol, cfg.verify_samples, cfg.seed
    reports = [
        check_kkt(spec, u, tol=tol),
        check_lewy_stampacchia(spec, u, tol=tol),
        check_minty(spec, u, samples=samples, tol=tol, seed=seed + 1),
        check_smallest_supersolution(spec, u, samples=samples, seed=seed + 2, tol=tol),
        check_bounds_cinfty(spec, u, tol=tol),
        check_truncation_identities(spec.op, samples=samples, seed=seed + 3),
    ]
    rng = np.random.default_rng(seed + 4)
    f2 = spec.f - np.abs(rng.normal(size=spec.n)) * 0.5 * (1.0 + float(np.abs(spec.f).max()))
    reports.append(check_comparison_in_f(spec.op, spec.psi, spec.f, f2, tol=tol,
                                         params=cfg.solver_params))
    psi2 = spec.psi + rng.normal(size=spec.n) * 0.3 * (1.0 + float(np.abs(spec.psi).max()))
    reports.append(check_linfty_dependence(spec.op, spec.f, spec.psi, psi2, tol=tol,
                                           params=cfg.solver_params))
    return reports


def _oracle_agreement_report(cfg: RunConfig, spec: ProblemSpec) -> Report:
    oracle = brute_force_oracle(spec, cfg.solver_params)
    worst, worst_k = -np.inf, 0
    for k, solver in enumerate((solve_psor, solve_projected_gradient, solve_active_set)):
        dev = float(np.abs(solver(spec, cfg.solver_params).u - oracle.u).max())
        if dev > worst:
            worst, worst_k = dev, k
    return Report(check_id="oracle_agreement", passed=worst <= ORACLE_AGREE_TOL,
                  worst_violation=worst, worst_index_or_sample=worst_k,
                  samples=3, seed=cfg.seed, tol=ORACLE_AGREE_TOL)


def cmd_verify(cfg: RunConfig, inject_corruption: bool = False) -> int:
    started = time.perf_counter()
    spec = cfg.build_problem()
    record = _base_record("verify", cfg)
    try:
        sol, extras = run_single(spec, cfg.solver_method, cfg.solver_params,
                                 cfg.penalty_params)
    except SolverError as exc:
        record["reports"] = []
        record["error"] = str(exc)
        _write_json(record, cfg.output_json, started)
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    u = sol.u.copy()
    if inject_corruption:
        u[spec.n // 2] = spec.psi[spec.n // 2] - 1.0
    reports = _verify_reports(cfg, spec, u)
    if spec.n <= 12:
        reports.append(_oracle_agreement_report(cfg, spec))
    record.update(_solution_fields(spec, sol, extras))
    record["corrupted"] = inject_corruption
    record["reports"] = [r.as_dict() for r in reports]
    _write_json(record, cfg.output_json, started)
    print(f"{'check':<26}{'result':<8}{'worst_violation':<18}{'tol':<10}")
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        if r.inconclusive:
            status = "N/A"
        print(f"{r.check_id:<26}{status:<8}{r.worst_violation:<18.6e}{r.tol:<10.1e}")
    failed = [r for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed", file=sys.stderr)
        return 4
    print("all checks passed")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep_axis is None:
        raise ConfigError("sweep requires sweep.axis and sweep.values")
    csv_path = cfg.output_csv
    if not csv_path:
        raise ConfigError("sweep requires a CSV output path (output.csv or --csv)")
    rows = []
    for value in cfg.sweep_values:
        row = {c: "" for c in SWEEP_COLUMNS}
        row["axis"], row["value"] = cfg.sweep_axis, value
        try:
            if cfg.sweep_axis == "s":
                spec = cfg.build_problem(s=float(value))
                method = cfg.solver_method
                pparams = cfg.penalty_params
            elif cfg.sweep_axis == "n":
                spec = cfg.build_problem(n=int(value))
                method = cfg.solver_method
                pparams = cfg.penalty_params
            else:  # epsilon axis always exercises the penalty route
                spec = cfg.build_problem()
                method = "penalty"
                base = cfg.penalty_params or PenaltyParams()
                pparams = PenaltyParams(epsilon=float(value),
                                        picard_damping=base.picard_damping,
                                        max_outer=base.max_outer)
            sol, extras = run_single(spec, method, cfg.solver_params, pparams)
            viol, _ = kkt_violation(spec, sol.u)
            row["solver"] = sol.solver_id
            row["converged"] = int(sol.converged)
            row["iterations"] = sol.iterations
            row["energy"] = _fmt_float(spec.op.energy(sol.u, spec.f))
            row["kkt_violation"] = _fmt_float(viol)
            if extras is not None:
                row["max_penalty_gap"] = _fmt_float(extras["max_gap"])
            row["status"] = "ok"
        except (SolverError, RuntimeError, ValueError, ConfigError) as exc:
            row["status"] = f"error: {exc}"
        rows.append(row)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for c in SWEEP_COLUMNS:
                cell = str(row[c])
                if "," in cell or '"' in cell:
                    cell = '"' + cell.replace('"', '""') + '"'
                cells.append(cell)
            fh.write(",".join(cells) + "\n")
    bad = sum(1 for row in rows if row["status"] != "ok")
    print(f"sweep over {cfg.sweep_axis}: {len(rows)} point(s), {bad} failure(s), "
          f"wrote {csv_path}")
    return 0 if bad == 0 else 3


def cmd_oracle_check(cfg: RunConfig) -> int:
    started = time.perf_counter()
    if cfg.n > ORACLE_MAX_N:
        raise ConfigError(f"oracle-check requires grid.n <= {ORACLE_MAX_N}, got {cfg.n}")
    spec = cfg.build_problem()
    record = _base_record("oracle-check", cfg)
    oracle = brute_force_oracle(spec, cfg.solver_params)
    deviations = {}
    for name, solver in (("psor", solve_psor), ("pg", solve_projected_gradient),
                         ("activeset", solve_active_set)):
        deviations[name] = float(np.abs(solver(spec, cfg.solver_params).u - oracle.u).max())
    worst = max(deviations.values())
    record.update(_solution_fields(spec, oracle, None))
    record["reports"] = []
    record["oracle_deviations"] = deviations
    record["oracle_agree_tol"] = ORACLE_AGREE_TOL
    _write_json(record, cfg.output_json, started)
    for name, dev in deviations.items():
        print(f"{name:<12} max deviation from oracle: {dev:.3e}")
    if worst > ORACLE_AGREE_TOL:
        print(f"disagreement beyond {ORACLE_AGREE_TOL:g}", file=sys.stderr)
        return 4
    print("all solvers agree with the enumeration oracle")
    return 0


# --- entry point -----------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracobstacle",
        description="Obstacle-problem solver and theorem checker for the "
                    "1-D restricted fractional Laplacian.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH",
                       help="flat key-value config file")
        p.add_argument("--out", metavar="PATH", help="JSON result path")
        p.add_argument("--seed", type=int, metavar="INT",
                       help="override the config seed")
        p.add_argument("--solver", choices=["psor", "pg", "activeset", "penalty"],
                       help="override solver.method")

    p_solve = sub.add_parser("solve", help="solve one obstacle problem")
    common(p_solve)
    p_solve.add_argument("--csv", metavar="PATH",
                         help="also write per-node CSV (x,psi,f,u,r,active)")

    p_verify = sub.add_parser("verify", help="solve and run all theorem checkers")
    common(p_verify)
    p_verify.add_argument("--inject-corruption", action="store_true",
                          help="corrupt the solution before checking (test only)")

    p_sweep = sub.add_parser("sweep", help="parameter sweep to CSV")
    common(p_sweep)
    p_sweep.add_argument("--csv", metavar="PATH", help="CSV output path")

    p_oracle = sub.add_parser("oracle-check",
                              help="compare all solvers against enumeration")
    common(p_oracle)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.solver_params = dataclasses.replace(cfg.solver_params, seed=args.seed)
            cfg.echo["seed"] = args.seed
        if args.solver is not None:
            if args.solver == "penalty" and cfg.penalty_params is None:
                cfg.penalty_params = PenaltyParams()
            cfg.solver_method = args.solver
            cfg.echo["solver.method"] = args.solver
        if args.out is not None:
            cfg.output_json = args.out
        if getattr(args, "csv", None) is not None:
            cfg.output_csv = args.csv

        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, inject_corruption=args.inject_corruption)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_oracle_check(cfg)
    except (ConfigError, ValueError) as exc:
        # ValueError here means the parsed config violates a constructor or
        # solver precondition (bad custom values, oversized dense solve, ...)
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
