"""Closed-form tracking solution for unconstrained fixed-time problems.

With durations fixed and no inequality rows the problem is linear-quadratic
tracking.  The cost-to-go is kept as ``x^T P x - 2 q^T x + const``, which
gives the recursion::

    K = (B^T P+ B + R)^-1 B^T P+ A        k = (B^T P+ B + R)^-1 B^T q+
    P = A^T P+ (A - B K) + Q              q = (A - B K)^T q+ + Q x_goal

started from ``P_N = Q_N`` and ``q_N = Q_N x_goal_N``, and the rollout
``v = -K x + k``.  One Newton correction with the same Riccati matrices
follows the rollout; for long or stiff horizons it takes the stationarity
residual from about 1e-6 down to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .objective import FIXED, StageWeights, input_weight, total_cost
from .polyspline import SplineShape, rollout, state_matrices
from .problem import Problem
from .results import IterateTrace, SolveResult, Status

__all__ = ["LqtBackwardTape", "lqt_matrices", "lqt_backward", "lqt_forward", "lqt_kkt_residual", "lqt_solve"]


@dataclass
class LqtBackwardTape:
    K: NDArray  # (N, md, md)
    k: NDArray  # (N, md)
    P: NDArray  # (N + 1, md, md)
    q: NDArray  # (N + 1, md)


def lqt_matrices(shape: SplineShape, weights: StageWeights, durations) -> tuple[NDArray, NDArray, NDArray]:
    """Stacked ``A_k``, ``B_k`` and ``R_k`` for fixed durations."""
    if np.any(weights.eta[:, :-1] != 0):
        raise ValueError("the tracking recursion only supports top-order energy weights")
    durations = np.asarray(durations, dtype=float)
    N, md = durations.size, shape.state_dim
    A = np.empty((N, md, md))
    B = np.empty((N, md, md))
    R = np.empty((N, md, md))
    for k, t in enumerate(durations):
        A[k], B[k] = state_matrices(t, shape)
        R[k] = input_weight(t, weights.eta[k, -1], 0.0, shape.m, shape.d, joint_time=False)
    return A, B, R


def lqt_backward(weights: StageWeights, A: NDArray, B: NDArray, R: NDArray) -> LqtBackwardTape:
    N, md = A.shape[0], A.shape[1]
    K = np.empty((N, md, md))
    k = np.empty((N, md))
    P = np.empty((N + 1, md, md))
    q = np.empty((N + 1, md))
    P[N] = weights.Q_N
    q[N] = weights.Q_N @ weights.x_goal_N
    for j in range(N - 1, -1, -1):
        BtP = B[j].T @ P[j + 1]
        H = BtP @ B[j] + R[j]
        try:
            fac = cho_factor(H)
        except LinAlgError:
            raise ValueError(f"stage {j}: B^T P B + R is not positive definite") from None
        K[j] = cho_solve(fac, BtP @ A[j])
        k[j] = cho_solve(fac, B[j].T @ q[j + 1])
        Acl = A[j] - B[j] @ K[j]
        Pj = A[j].T @ P[j + 1] @ Acl + weights.Q[j]
        P[j] = 0.5 * (Pj + Pj.T)
        q[j] = Acl.T @ q[j + 1] + weights.Q[j] @ weights.x_goal[j]
    return LqtBackwardTape(K, k, P, q)


def lqt_forward(x0, tape: LqtBackwardTape, A: NDArray, B: NDArray) -> tuple[NDArray, NDArray]:
    N = A.shape[0]
    xs = np.empty((N + 1, A.shape[1]))
    V = np.empty((N, B.shape[2]))
    xs[0] = x0
    for j in range(N):
        V[j] = -tape.K[j] @ xs[j] + tape.k[j]
        xs[j + 1] = A[j] @ xs[j] + B[j] @ V[j]
    return V, xs


def _input_gradient(weights: StageWeights, A, B, R, V, xs) -> NDArray:
    """Gradient of the total cost in the inputs, with the states eliminated."""
    N = A.shape[0]
    lam = 2.0 * weights.Q_N @ (xs[N] - weights.x_goal_N)
    g = np.empty_like(V)
    for j in range(N - 1, -1, -1):
        g[j] = 2.0 * R[j] @ V[j] + B[j].T @ lam
        lam = 2.0 * weights.Q[j] @ (xs[j] - weights.x_goal[j]) + A[j].T @ lam
    return g


def _refine(weights: StageWeights, A, B, R, tape: LqtBackwardTape, V, xs) -> tuple[NDArray, NDArray]:
    """One Newton correction of a rollout, reusing the Riccati matrices.

    The correction is the same tracking problem with zero goals, zero
    initial state and a linear input term equal to the current gradient,
    so only the feedforward terms change.
    """
    N = A.shape[0]
    g = _input_gradient(weights, A, B, R, V, xs)
    kap = np.empty_like(V)
    q = np.zeros(A.shape[1])
    for j in range(N - 1, -1, -1):
        PB = tape.P[j + 1] @ B[j]
        kap[j] = cho_solve(cho_factor(B[j].T @ PB + R[j]), B[j].T @ q - 0.5 * g[j])
        q = A[j].T @ (q - PB @ kap[j])
    # closed loop against the new states, so round-off is not amplified by A
    Vn = np.empty_like(V)
    xn = np.empty_like(xs)
    xn[0] = xs[0]
    for j in range(N):
        Vn[j] = V[j] + kap[j] - tape.K[j] @ (xn[j] - xs[j])
        xn[j + 1] = A[j] @ xn[j] + B[j] @ Vn[j]
    return Vn, xn


def lqt_kkt_residual(weights: StageWeights, A, B, R, V, xs) -> dict[str, float]:
    """Componentwise relative residuals of the first-order optimality conditions.

    Costates come from the adjoint recursion, independently of the gains.
    Each stationarity component is divided by the magnitude of the terms
    that produce it (an adjoint run on absolute values), so the measure
    reports round-off rather than cancellation in badly scaled instances.
    """
    N = A.shape[0]
    r = 2.0 * weights.Q_N @ (xs[N] - weights.x_goal_N)
    lam = r
    lam_abs = np.abs(2.0 * weights.Q_N) @ np.abs(xs[N] - weights.x_goal_N)
    stat = 0.0
    dyn = 0.0
    for j in range(N - 1, -1, -1):
        gv = 2.0 * R[j] @ V[j]
        res = gv + B[j].T @ lam
        scale = np.abs(2.0 * R[j]) @ np.abs(V[j]) + np.abs(B[j].T) @ lam_abs
        stat = max(stat, (np.abs(res) / np.maximum(scale, 1e-300)).max())
        dyn = max(dyn, np.abs(xs[j + 1] - A[j] @ xs[j] - B[j] @ V[j]).max() / (1.0 + np.abs(xs[j + 1]).max()))
        e = xs[j] - weights.x_goal[j]
        lam = 2.0 * weights.Q[j] @ e + A[j].T @ lam
        lam_abs = np.abs(2.0 * weights.Q[j]) @ np.abs(e) + np.abs(A[j].T) @ lam_abs
    return {"stationarity": float(stat), "dynamics": float(dyn)}


def lqt_solve(problem: Problem) -> SolveResult:
    """Global optimum of the unconstrained fixed-time problem in one pass."""
    if problem.times is None:
        raise ValueError("the tracking solver needs fixed segment durations")
    shape, w = problem.shape, problem.weights
    A, B, R = lqt_matrices(shape, w, problem.times)
    tape = lqt_backward(w, A, B, R)
    V, xs = lqt_forward(problem.x0, tape, A, B)
    V, xs = _refine(w, A, B, R, tape, V, xs)
    traj, _ = rollout(problem.x0, V, problem.times, shape)
    _, parts = total_cost(problem.x0, V, problem.times, w, shape, FIXED)
    trace = IterateTrace()
    trace.append(cost=parts["total"], stationarity=0.0, violation=0.0, min_slack=0.0, mu=0.0, step=1.0, reg=0.0)
    return SolveResult(
        trajectory=traj,
        states=xs,
        v=V,
        durations=problem.times.copy(),
        duals=[np.zeros(0) for _ in range(shape.N)],
        status=Status.CONVERGED,
        trace=trace,
        cost_breakdown=parts,
        iterations=1,
    )
