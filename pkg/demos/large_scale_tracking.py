"""Minimum-snap waypoint tracking over long horizons with the closed-form solver.

Run with ``python demos/large_scale_tracking.py``.  For each horizon the
script reports the wall time per segment and the stationarity residual; the
per-segment time stays flat as the horizon grows.
"""

from __future__ import annotations

import time

import numpy as np

from polyddp.lqt import lqt_kkt_residual, lqt_matrices, lqt_solve
from polyddp.problem_io import generate_waypoint_instance


def timed(problem, repeats: int = 3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = lqt_solve(problem)
        best = min(best, time.perf_counter() - t0)
    return result, best


def main() -> None:
    print(f"{'N':>6} {'ms/segment':>11} {'stationarity':>13} {'max |waypoint error|':>21}")
    for N in (10, 100, 1000, 3000):
        problem, waypoints = generate_waypoint_instance(0, N)
        result, wall = timed(problem)
        A, B, R = lqt_matrices(problem.shape, problem.weights, problem.times)
        kkt = lqt_kkt_residual(problem.weights, A, B, R, result.v, result.states)
        d = problem.shape.d
        miss = np.abs(result.states[1:N, :d] - waypoints[1:N]).max() if N > 1 else 0.0
        print(f"{N:6d} {1e3 * wall / N:11.3f} {kkt['stationarity']:13.1e} {miss:21.3e}")


if __name__ == "__main__":
    main()
