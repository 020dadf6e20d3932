"""Random instance builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from polyddp.constraints import DerivBounds, Polyhedron
from polyddp.objective import StageWeights
from polyddp.polyspline import SplineShape
from polyddp.problem import Problem
from polyddp.problem_io import initial_time_allocation


def box(lo, hi) -> Polyhedron:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    d = lo.size
    return Polyhedron(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))


def rest_state(p, m):
    x = np.zeros(m * len(p))
    x[: len(p)] = p
    return x


def unconstrained_instance(seed: int, n: int | None = None, N: int | None = None, d: int = 3) -> Problem:
    """Waypoint tracking with random positive weights and durations."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.choice([5, 7]))
    N = N or int(rng.integers(1, 9))
    shape = SplineShape(n, d, N)
    m, md = shape.m, shape.state_dim
    goals = np.zeros((N, md))
    goals[:, :d] = np.cumsum(rng.uniform(-1.5, 1.5, size=(N, d)), axis=0)
    q = np.zeros(md)
    q[:d] = rng.uniform(5.0, 50.0)
    goal_N = rest_state(goals[-1, :d] + rng.uniform(-1, 1, d), m)
    weights = StageWeights(
        Q=np.repeat(np.diag(q)[None], N, axis=0),
        x_goal=goals,
        eta=np.hstack([np.zeros((N, m - 1)), rng.uniform(1e-2, 1.0, (N, 1))]),
        w=np.zeros(N),
        Q_N=100.0 * np.eye(md),
        x_goal_N=goal_N,
    )
    x0 = np.zeros(md)
    x0[:d] = rng.normal(size=d) * 0.2
    return Problem(shape, x0, weights, times=rng.uniform(0.6, 1.8, N))


def box_instance(seed: int, N: int | None = None, n: int = 5, d: int = 3) -> Problem:
    """Fixed-time instance with box corridors and active velocity/acceleration bounds.

    Consecutive boxes overlap around the shared knot, every waypoint sits
    strictly inside its box and the start is at rest, so ``v = 0`` is a
    strictly feasible initial guess.
    """
    rng = np.random.default_rng(seed)
    N = N or int(rng.integers(1, 7))
    shape = SplineShape(n, d, N)
    m, md = shape.m, shape.state_dim
    pts = np.zeros((N + 1, d))
    pts[1:] = np.cumsum(rng.uniform(0.5, 1.5, size=(N, d)) * rng.choice([-1, 1], size=(N, d)), axis=0)
    corridor = []
    for k in range(N):
        lo = np.minimum(pts[k], pts[k + 1]) - rng.uniform(0.05, 0.3, d)
        hi = np.maximum(pts[k], pts[k + 1]) + rng.uniform(0.05, 0.3, d)
        corridor.append(box(lo, hi))
    weights = StageWeights.uniform(shape, q=0.0, eta=1.0, q_N=100.0, x_goal_N=rest_state(pts[-1], m))
    vmax = rng.uniform(1.5, 2.5, m - 1)
    bounds = DerivBounds.symmetric(*vmax)
    # rest-to-rest allocation, stretched so that the bounds can be met but bind
    times = 1.3 * initial_time_allocation(pts, vmax[0], vmax[min(1, m - 2)])
    return Problem(shape, rest_state(pts[0], m), weights, corridor, bounds, times=times)
