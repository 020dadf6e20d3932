"""Fly through a random polyhedral corridor with the three-stage pipeline.

Run with ``python demos/corridor_flight.py [seed] [N]``.  The script builds a
corridor, starts from the rest-to-rest time allocation, and prints how each
stage ended, how much flight time was saved and what the validator found.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from polyddp.cli import validation_report
from polyddp.ipddp import pipeline_three_stage
from polyddp.problem_io import generate_random_corridor


def main(seed: int = 0, N: int = 12) -> None:
    problem, waypoints = generate_random_corridor(seed, N)
    faces = [P.num_faces for P in problem.corridor]
    print(f"corridor: {N} polyhedra, {min(faces)}..{max(faces)} faces, path length "
          f"{np.linalg.norm(np.diff(waypoints, axis=0), axis=1).sum():.2f}")
    print(f"initial allocation: {problem.times.sum():.3f} s")

    t0 = time.perf_counter()
    result = pipeline_three_stage(problem)
    wall = time.perf_counter() - t0
    for name, status, trace in result.stages:
        print(f"  {name:12s} {status.value:12s} {len(trace):4d} iterations")
    if not result.converged:
        print(f"pipeline stopped: {result.status.value} {result.message}")
        return

    before, after = problem.times.sum(), result.durations.sum()
    print(f"optimized: {after:.3f} s ({100 * (before - after) / before:.1f}% faster) in {wall:.2f} s wall time")

    report = validation_report(result.trajectory, problem.with_times(result.durations))
    print(f"validator: {'clean' if report['clean'] else report['issues']}")
    print(f"  junction mismatch {report['continuity_max']:.1e}")
    print(f"  control-point margin {report['control_point_margin']:.3e}, sampled margin {report['sampled_margin']:.3e}")

    # peak speed and acceleration against the +-2 bounds
    s = np.linspace(0.0, 1.0, 200)
    traj = result.trajectory
    for order, label in ((1, "speed"), (2, "acceleration")):
        peak = max(np.abs(traj.segment_eval(k, t * traj.durations[k], order)).max()
                   for k in range(traj.shape.N) for t in s)
        print(f"  peak |{label}| per axis {peak:.3f}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
