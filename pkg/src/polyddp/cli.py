"""Command-line front end.

Exit codes: 0 success, 1 solver failure or validation failure, 2 input error.
Flags given on the command line take precedence over values stored in the
instance file.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path

import numpy as np

from .constraints import MINVO_TABLE_ENV, ControlPointBasis, check_feasibility
from .ipddp import SolverConfig, pipeline_three_stage, solve_fixed_time
from .lqt import lqt_kkt_residual, lqt_matrices, lqt_solve
from .objective import FIXED, JOINT
from .polyspline import PiecewiseTrajectory, continuity_residuals
from .problem import Problem
from .problem_io import (
    InstanceError,
    dumps,
    generate_random_corridor,
    generate_waypoint_instance,
    load_instance,
    load_solution,
    save_instance,
    save_solution,
)
from .results import SolveResult, Status

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
CONTINUITY_TOL = 1e-9
MARGIN_TOL = 1e-9
TRACE_COLUMNS = ("stage", "iteration", "cost", "stationarity", "violation", "min_slack", "mu", "step", "reg")
BENCH_COLUMNS = (
    "N",
    "seed",
    "status",
    "wall_ms",
    "total_initial_time",
    "total_optimized_time",
    "reduction_rate",
    "control_effort",
    "iterations",
    "ms_per_segment",
)


class InputError(Exception):
    pass


def _parse_n_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = (int(p) for p in part.split(".."))
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("expected positive integers, e.g. 2,4,8 or 2..6")
    return out


def _basis(kind: str | None) -> ControlPointBasis | None:
    if kind is None:
        return None
    try:
        return ControlPointBasis(kind)
    except (ValueError, OSError) as err:
        raise InputError(f"--basis {kind}: {err}") from None


def _apply_overrides(problem: Problem, args) -> Problem:
    basis = _basis(getattr(args, "basis", None))
    if basis is not None:
        problem = replace(problem, basis=basis)
    if getattr(args, "t_min", None) is not None:
        problem = replace(problem, t_min=args.t_min)
    return problem


def _config(args, mode: str) -> SolverConfig:
    kw = {"mode": mode}
    if getattr(args, "mu_init", None) is not None:
        kw["mu_init"] = args.mu_init
    if getattr(args, "tol", None) is not None:
        kw["opt_tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iterations"] = args.max_iter
    if getattr(args, "t_min", None) is not None:
        kw["t_min"] = args.t_min
    try:
        return SolverConfig(**kw)
    except ValueError as err:
        raise InputError(str(err)) from None


def _load(path) -> Problem:
    try:
        return load_instance(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except InstanceError as err:
        raise InputError(f"{path}: {err}") from None


def validation_report(traj: PiecewiseTrajectory, problem: Problem, samples: int = 1000) -> dict:
    """Continuity, start-state and constraint margins of a trajectory against an instance."""
    s = problem.shape
    if (traj.shape.n, traj.shape.d, traj.shape.N) != (s.n, s.d, s.N):
        raise InputError(f"solution shape {traj.shape} does not match instance shape {s}")
    cont = continuity_residuals(traj)
    x0 = problem.x0.reshape(s.m, s.d)
    start = max(float(np.abs(traj.segment_eval(0, 0.0, i) - x0[i]).max()) for i in range(s.m))
    feas = check_feasibility(traj, problem.corridor, problem.bounds, problem.basis, samples=samples)
    issues = []
    if cont.size and cont.max() > CONTINUITY_TOL:
        k, i = np.unravel_index(int(np.argmax(cont)), cont.shape)
        issues.append(f"continuity: order {i} mismatch {cont[k, i]:.3e} between segments {k} and {k + 1}")
    if start > CONTINUITY_TOL:
        issues.append(f"start state mismatch {start:.3e}")
    if feas.control_point > MARGIN_TOL:
        issues.append(f"control-point margin {feas.control_point:.3e} in segment {feas.worst_segment}")
    if feas.sampled > MARGIN_TOL:
        issues.append(f"sampled margin {feas.sampled:.3e} in segment {feas.worst_segment}")
    return {
        "clean": not issues,
        "issues": issues,
        "continuity_max": float(cont.max()) if cont.size else 0.0,
        "continuity_by_order": cont.max(axis=0).tolist() if cont.size else [0.0] * s.m,
        "start_state_residual": start,
        "control_point_margin": float(feas.control_point) if np.isfinite(feas.control_point) else None,
        "sampled_margin": float(feas.sampled) if np.isfinite(feas.sampled) else None,
        "control_point_by_kind": feas.control_point_by_kind,
        "sampled_by_kind": feas.sampled_by_kind,
        "samples_per_segment": samples,
    }


def _write_trace(result: SolveResult, path: Path) -> None:
    stages = result.stages or [("solve", result.status, result.trace)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_COLUMNS)
        for entry in stages:
            name, trace = entry[0], entry[2] if len(entry) > 2 else None
            if trace is None:
                continue
            for j, row in enumerate(trace.rows()):
                w.writerow([name, j + 1] + [f"{row[c]:.10g}" for c in TRACE_COLUMNS[2:]])


def _status_doc(result: SolveResult, wall: float, mode: str) -> dict:
    stages = [{"stage": e[0], "status": Status(e[1]).value} for e in result.stages]
    failed = next((s["stage"] for s in stages if s["status"] != Status.CONVERGED.value), None)
    return {
        "mode": mode,
        "status": result.status.value,
        "failed_stage": failed,
        "message": result.message,
        "iterations": int(result.iterations),
        "stages": stages,
        "wall_seconds": wall,
    }


def run_mode(problem: Problem, mode: str, config: SolverConfig) -> SolveResult:
    if mode == "joint":
        return pipeline_three_stage(problem, config)
    if mode == "fixed-time":
        if problem.times is None:
            raise InputError("fixed-time mode needs 'times' in the instance")
        return solve_fixed_time(problem, config)
    if mode == "lqt":
        return _lqt(problem)
    raise InputError(f"unknown mode {mode!r}")


def _lqt(problem: Problem) -> SolveResult:
    if problem.times is None:
        raise InputError("the tracking mode needs 'times' in the instance")
    if problem.has_constraints:
        print("note: the tracking mode ignores corridor and derivative bounds", file=sys.stderr)
        problem = replace(problem, corridor=None, bounds=None)
    try:
        return lqt_solve(problem)
    except ValueError as err:
        raise InputError(str(err)) from None


def cmd_generate(args) -> int:
    problem = _apply_overrides(_load(args.instance), args)
    mode = args.mode
    config = _config(args, JOINT if mode == "joint" else FIXED)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = run_mode(problem, mode, config)
    wall = time.perf_counter() - t0
    status = _status_doc(result, wall, mode)
    _write_trace(result, out / "trace.csv")
    solution = out / "solution.json"
    if not result.converged or result.trajectory is None:
        if solution.exists():
            solution.unlink()
        (out / "status.json").write_text(dumps(status))
        print(f"{mode}: {result.status.value} ({status['failed_stage'] or 'solve'}) {result.message}".rstrip())
        return EXIT_FAIL
    final = replace(problem, times=result.durations)
    report = validation_report(result.trajectory, final, args.samples)
    status["validator_clean"] = report["clean"]
    save_solution(result.trajectory, solution, result.status.value, result.cost_breakdown)
    (out / "report.json").write_text(dumps(report))
    (out / "status.json").write_text(dumps(status))
    total0 = float(problem.times.sum()) if problem.times is not None else float("nan")
    print(
        f"{mode}: {result.status.value}, {result.iterations} iterations, {wall * 1e3:.1f} ms, "
        f"total time {total0:.4f} -> {result.durations.sum():.4f}, validator {'clean' if report['clean'] else 'FAILED'}"
    )
    for issue in report["issues"]:
        print(f"  {issue}")
    return EXIT_OK if report["clean"] else EXIT_FAIL


def cmd_lqt(args) -> int:
    problem = _apply_overrides(_load(args.instance), args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = _lqt(problem)
    wall = time.perf_counter() - t0
    A, B, R = lqt_matrices(problem.shape, problem.weights, problem.times)
    kkt = lqt_kkt_residual(problem.weights, A, B, R, result.v, result.states)
    kkt.update(
        {"N": problem.N, "wall_seconds": wall, "ms_per_segment": wall * 1e3 / problem.N, "cost": result.cost}
    )
    save_solution(result.trajectory, out / "solution.json", result.status.value, result.cost_breakdown)
    (out / "kkt.json").write_text(dumps(kkt))
    print(
        f"lqt: N={problem.N}, {wall * 1e3:.1f} ms ({kkt['ms_per_segment']:.4f} ms/segment), "
        f"KKT stationarity {kkt['stationarity']:.2e}, dynamics {kkt['dynamics']:.2e}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    problem = _load(args.instance)
    problem = _apply_overrides(problem, args)
    try:
        traj = load_solution(args.solution)
    except FileNotFoundError:
        raise InputError(f"{args.solution}: no such file") from None
    except InstanceError as err:
        raise InputError(f"{args.solution}: {err}") from None
    report = validation_report(traj, problem, args.samples)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps(report))
    print(f"continuity max {report['continuity_max']:.3e}, control-point margin {report['control_point_margin']}, "
          f"sampled margin {report['sampled_margin']}")
    for issue in report["issues"]:
        print(f"  {issue}")
    print("clean" if report["clean"] else "violations found")
    return EXIT_OK if report["clean"] else EXIT_FAIL


def make_instance(kind: str, seed: int, N: int, n: int | None = None) -> Problem:
    if kind == "corridor":
        return generate_random_corridor(seed, N, n=n or 5)[0]
    if kind == "waypoints":
        return generate_waypoint_instance(seed, N, n=n or 7)[0]
    raise InputError(f"unknown instance kind {kind!r}")


def cmd_make_instance(args) -> int:
    try:
        problem = make_instance(args.kind, args.seed, args.N, args.degree)
    except ValueError as err:
        raise InputError(str(err)) from None
    save_instance(problem, args.output)
    print(f"wrote {args.kind} instance N={args.N} seed={args.seed} to {args.output}")
    return EXIT_OK


def benchmark_row(mode: str, N: int, seed: int, config: SolverConfig, samples: int = 200) -> dict:
    """Solve one generated instance and summarize it as a table row."""
    problem = make_instance("waypoints" if mode == "lqt" else "corridor", seed, N)
    t_ini = float(problem.times.sum())
    t0 = time.perf_counter()
    try:
        result = run_mode(problem, mode, config)
        status = result.status.value
    except InputError as err:
        result, status = None, f"InputError: {err}"
    wall = time.perf_counter() - t0
    row = {"N": N, "seed": seed, "status": status, "wall_ms": wall * 1e3, "total_initial_time": t_ini}
    ok = result is not None and result.converged and result.trajectory is not None
    if ok and problem.has_constraints:
        report = validation_report(result.trajectory, replace(problem, times=result.durations), samples)
        if not report["clean"]:
            row["status"] = "ValidatorFail"
            ok = False
    if ok:
        t_opt = float(result.durations.sum())
        row.update(
            total_optimized_time=t_opt,
            reduction_rate=(t_ini - t_opt) / t_ini,
            control_effort=float(result.cost_breakdown.get("energy", np.nan)),
            iterations=int(sum(len(e[2]) for e in result.stages if len(e) > 2) or result.iterations),
        )
    else:
        row.update(total_optimized_time=np.nan, reduction_rate=np.nan, control_effort=np.nan, iterations=0)
    row["ms_per_segment"] = row["wall_ms"] / N
    return row


def _fmt_row(row: dict) -> list[str]:
    out = []
    for c in BENCH_COLUMNS:
        v = row.get(c, "")
        out.append(f"{v:.6g}" if isinstance(v, float) else str(v))
    return out


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """One summary row per N: success rate in ``status``, means over successful runs."""
    out = []
    for N in sorted({r["N"] for r in rows}):
        sub = [r for r in rows if r["N"] == N]
        good = [r for r in sub if r["status"] == Status.CONVERGED.value]
        agg = {"N": N, "seed": "all", "status": f"success={len(good)}/{len(sub)}"}
        for c in BENCH_COLUMNS[3:]:
            vals = [r[c] for r in good]
            agg[c] = float(np.mean(vals)) if vals else np.nan
        out.append(agg)
    return out


def cmd_benchmark(args) -> int:
    config = _config(args, JOINT if args.mode == "joint" else FIXED)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "benchmark.csv"
    jobs = [(N, args.seed + r) for N in args.n_list for r in range(args.repetitions)]
    new = not path.exists()
    rows = []
    with open(path, "a", newline="") as f:
        sink = csv.writer(f)
        if new:
            sink.writerow(BENCH_COLUMNS)

        def emit(row):
            rows.append(row)
            sink.writerow(_fmt_row(row))
            f.flush()
            print(", ".join(f"{c}={v}" for c, v in zip(BENCH_COLUMNS, _fmt_row(row))))

        if args.workers > 1:
            with ProcessPoolExecutor(args.workers) as pool:
                futs = [pool.submit(benchmark_row, args.mode, N, s, config, args.samples) for N, s in jobs]
                for fut in as_completed(futs):
                    emit(fut.result())
        else:
            for N, s in jobs:
                emit(benchmark_row(args.mode, N, s, config, args.samples))
        for agg in aggregate_rows(rows):
            sink.writerow(_fmt_row(agg))
            print(", ".join(f"{c}={v}" for c, v in zip(BENCH_COLUMNS, _fmt_row(agg))))
    return EXIT_OK


def _add_solver_flags(p):
    p.add_argument("--basis", choices=("bernstein", "minvo"), help=f"control-point basis (minvo reads ${MINVO_TABLE_ENV})")
    p.add_argument("--mu-init", type=float, help="initial barrier parameter")
    p.add_argument("--tol", type=float, help="stationarity tolerance")
    p.add_argument("--max-iter", type=int, help="iteration limit per solver stage")
    p.add_argument("--t-min", type=float, help="minimum segment duration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyddp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="solve an instance file")
    p.add_argument("instance")
    p.add_argument("--mode", choices=("joint", "fixed-time", "lqt"), default="joint")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--samples", type=int, default=1000, help="validator samples per segment")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("lqt", help="closed-form tracking solve with a KKT report")
    p.add_argument("instance")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--t-min", type=float)
    p.set_defaults(func=cmd_lqt, basis=None)

    p = sub.add_parser("benchmark", help="solve generated instances and write a results table")
    p.add_argument("--mode", choices=("joint", "fixed-time", "lqt"), default="joint")
    p.add_argument("--n-list", type=_parse_n_list, default=_parse_n_list("2,4,8,16,32,64"))
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--repetitions", type=int, default=10, help="seeds per N")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out-dir", default=".")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("validate", help="check a solution file against an instance")
    p.add_argument("solution")
    p.add_argument("instance")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--basis", choices=("bernstein", "minvo"))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("make-instance", help="write a seeded random instance file")
    p.add_argument("output")
    p.add_argument("--kind", choices=("corridor", "waypoints"), default="corridor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-N", type=int, default=10, help="number of segments")
    p.add_argument("--degree", type=int, help="polynomial degree (default 5 for corridor, 7 for waypoints)")
    p.set_defaults(func=cmd_make_instance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
