"""Smoothing-spline objective in state-space coordinates.

The stage cost of segment ``k`` is::

    |x - x_goal|^2_Q + sum_i eta_i * int_0^t |p^(i)(s)|^2 ds + w * t^2

The energy integral is a quadratic form in ``[x; v]`` whose matrix entries are
monomials in ``t``, so all derivatives with respect to the duration are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .polyspline import SplineShape, _falling, rollout

__all__ = [
    "JOINT",
    "FIXED",
    "StageWeights",
    "StageCostEval",
    "rv_integral",
    "input_weight",
    "energy_gram",
    "stage_cost",
    "terminal_cost",
    "total_cost",
]

JOINT = "joint"
FIXED = "fixed"
_PSD_FLOOR = -1e-10


def check_mode(mode: str) -> str:
    if mode not in (JOINT, FIXED):
        raise ValueError(f"mode must be {JOINT!r} or {FIXED!r}, got {mode!r}")
    return mode


def _check_psd(name: str, Q: NDArray):
    if not np.allclose(Q, Q.T, atol=1e-12, rtol=1e-10):
        raise ValueError(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh(Q).min() if Q.size else 0.0
    if lo < _PSD_FLOOR:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")


@dataclass
class StageWeights:
    """Per-stage weights.

    ``eta`` has shape ``(N, m)``; column ``i - 1`` weighs the squared ``i``-th
    derivative.  Minimum-jerk/snap problems only use the last column.
    """

    Q: NDArray  # (N, md, md)
    x_goal: NDArray  # (N, md)
    eta: NDArray  # (N, m)
    w: NDArray  # (N,)
    Q_N: NDArray  # (md, md)
    x_goal_N: NDArray  # (md,)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.x_goal = np.asarray(self.x_goal, dtype=float)
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        self.Q_N = np.asarray(self.Q_N, dtype=float)
        self.x_goal_N = np.asarray(self.x_goal_N, dtype=float).reshape(-1)
        N = self.Q.shape[0]
        md = self.Q_N.shape[0]
        if self.Q.shape != (N, md, md) or self.x_goal.shape != (N, md):
            raise ValueError("Q / x_goal shapes are inconsistent")
        if self.eta.shape[0] != N or self.w.shape != (N,):
            raise ValueError("eta / w must have one entry per stage")
        if self.x_goal_N.shape != (md,):
            raise ValueError("x_goal_N has the wrong length")
        for k in range(N):
            _check_psd(f"Q[{k}]", self.Q[k])
        _check_psd("Q_N", self.Q_N)
        if np.any(self.eta < 0) or np.any(self.w < 0):
            raise ValueError("eta and w must be nonnegative")

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def uniform(
        cls,
        shape: SplineShape,
        *,
        q: float | ArrayLike = 0.0,
        x_goal: ArrayLike | None = None,
        eta: float = 1.0,
        w: float = 0.0,
        q_N: float | ArrayLike = 100.0,
        x_goal_N: ArrayLike | None = None,
    ) -> "StageWeights":
        """Diagonal weights shared by all stages; only the top-order energy is weighed."""
        md, N = shape.state_dim, shape.N
        qd = np.broadcast_to(np.asarray(q, dtype=float), (md,))
        qnd = np.broadcast_to(np.asarray(q_N, dtype=float), (md,))
        etas = np.zeros((N, shape.m))
        etas[:, -1] = eta
        return cls(
            Q=np.repeat(np.diag(qd)[None], N, axis=0),
            x_goal=np.zeros((N, md)) if x_goal is None else np.asarray(x_goal, dtype=float),
            eta=etas,
            w=np.full(N, float(w)),
            Q_N=np.diag(qnd),
            x_goal_N=np.zeros(md) if x_goal_N is None else x_goal_N,
        )

    def replace(self, *, w: float | None = None, q_N: float | None = None) -> "StageWeights":
        """Copy with a new uniform time weight and/or terminal weight ``q_N * I``."""
        md = self.Q_N.shape[0]
        return StageWeights(
            Q=self.Q.copy(),
            x_goal=self.x_goal.copy(),
            eta=self.eta.copy(),
            w=self.w.copy() if w is None else np.full(self.N, float(w)),
            Q_N=self.Q_N.copy() if q_N is None else q_N * np.eye(md),
            x_goal_N=self.x_goal_N.copy(),
        )


@dataclass
class StageCostEval:
    value: float
    grad_x: NDArray
    grad_u: NDArray
    hess_xx: NDArray
    hess_uu: NDArray
    hess_ux: NDArray


def rv_integral(t: float, m: int) -> NDArray:
    """Closed form of ``int_0^t sigma sigma^T``, sigma = top half of ``b^(m)``."""
    if not t > 0:
        raise ValueError(f"integration horizon must be positive, got {t}")
    out = np.empty((m, m))
    for a in range(1, m + 1):
        for b in range(1, m + 1):
            p = a + b - 1
            out[a - 1, b - 1] = (
                factorial(m + a - 1) * factorial(m + b - 1) * t**p
                / (factorial(a - 1) * factorial(b - 1) * p)
            )
    return out


def input_weight(t: float, eta: float, w: float, m: int, d: int, joint_time: bool) -> NDArray:
    """``R_k``: energy weight on ``v`` and, in joint-time mode, ``w`` on ``t``."""
    Rv = eta * np.kron(rv_integral(t, m), np.eye(d))
    if not joint_time:
        return Rv
    R = np.zeros((m * d + 1, m * d + 1))
    R[:-1, :-1] = Rv
    R[-1, -1] = w
    return R


def energy_gram(t: float, eta: ArrayLike, n: int, order: int = 0) -> NDArray:
    """``d^order/dt^order`` of ``sum_i eta_i int_0^t b^(i) b^(i)^T`` (size n+1)."""
    eta = np.asarray(eta, dtype=float)
    G = np.zeros((n + 1, n + 1))
    for i, e in enumerate(eta, start=1):
        if e == 0.0:
            continue
        for r in range(i, n + 1):
            for s in range(i, n + 1):
                p = r + s - 2 * i + 1
                if order > p:
                    continue
                G[r, s] += e * _falling(r, i) * _falling(s, i) * _falling(p, order) * t ** (p - order) / p
    return G


def _coeff_map(shape: SplineShape) -> NDArray:
    """``S`` with ``vec(C^T) = S [x; v]``."""
    m, d = shape.m, shape.d
    inv_fact = np.diag([1.0 / factorial(i) for i in range(m)])
    S = np.zeros((2 * m * d, 2 * m * d))
    S[: m * d, : m * d] = np.kron(inv_fact, np.eye(d))
    S[m * d :, m * d :] = np.eye(m * d)
    return S


def energy_matrix(t: float, eta: ArrayLike, shape: SplineShape, order: int = 0) -> NDArray:
    """Energy as a quadratic form in ``[x; v]`` (or its t-derivative)."""
    S = _coeff_map(shape)
    M = np.kron(energy_gram(t, eta, shape.n, order), np.eye(shape.d))
    return S.T @ M @ S


def stage_cost(
    x: ArrayLike,
    u: ArrayLike,
    k: int,
    weights: StageWeights,
    shape: SplineShape,
    mode: str = JOINT,
    duration: float | None = None,
) -> StageCostEval:
    """Stage cost with exact gradient and Hessian.

    In joint mode ``u = [v; t]``; in fixed mode ``u = v`` and ``duration`` must
    be supplied.
    """
    mode = check_mode(mode)
    md = shape.state_dim
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    nu = md + 1 if mode == JOINT else md
    if x.size != md or u.size != nu:
        raise ValueError(f"stage {k}: expected x of length {md} and u of length {nu}")
    if mode == JOINT:
        v, t = u[:md], float(u[md])
    else:
        if duration is None:
            raise ValueError("fixed-time stage cost needs the segment duration")
        v, t = u, float(duration)

    Q, eta, wt = weights.Q[k], weights.eta[k], weights.w[k]
    e = x - weights.x_goal[k]
    z = np.concatenate([x, v])
    E = energy_matrix(t, eta, shape)
    Ez = E @ z
    value = e @ Q @ e + z @ Ez
    gz = 2.0 * Ez
    Hz = 2.0 * E
    grad_x = 2.0 * Q @ e + gz[:md]
    hess_xx = 2.0 * Q + Hz[:md, :md]
    if mode == FIXED:
        return StageCostEval(value, grad_x, gz[md:], hess_xx, Hz[md:, md:], Hz[md:, :md])

    value += wt * t * t
    E1 = energy_matrix(t, eta, shape, 1)
    E2 = energy_matrix(t, eta, shape, 2)
    E1z = E1 @ z
    grad_u = np.append(gz[md:], z @ E1z + 2.0 * wt * t)
    hess_uu = np.zeros((nu, nu))
    hess_uu[:md, :md] = Hz[md:, md:]
    hess_uu[:md, md] = hess_uu[md, :md] = 2.0 * E1z[md:]
    hess_uu[md, md] = z @ E2 @ z + 2.0 * wt
    hess_ux = np.zeros((nu, md))
    hess_ux[:md] = Hz[md:, :md]
    hess_ux[md] = 2.0 * E1z[:md]
    return StageCostEval(value, grad_x, grad_u, hess_xx, hess_uu, hess_ux)


def terminal_cost(x_N: ArrayLike, weights: StageWeights) -> tuple[float, NDArray, NDArray]:
    e = np.asarray(x_N, dtype=float) - weights.x_goal_N
    QN = weights.Q_N
    return float(e @ QN @ e), 2.0 * QN @ e, 2.0 * QN


def total_cost(
    x0: ArrayLike,
    v: ArrayLike,
    durations: ArrayLike,
    weights: StageWeights,
    shape: SplineShape,
    mode: str = JOINT,
) -> tuple[float, dict[str, float]]:
    """Objective value and its split into waypoint / energy / time / terminal terms.

    The time term only counts towards the total in joint mode.
    """
    mode = check_mode(mode)
    durations = np.asarray(durations, dtype=float).reshape(-1)
    _, xs = rollout(x0, v, durations, shape)
    V = np.asarray(v, dtype=float).reshape(durations.size, -1)
    parts = {"waypoint": 0.0, "energy": 0.0, "time": 0.0, "terminal": 0.0}
    for k, t in enumerate(durations):
        e = xs[k] - weights.x_goal[k]
        z = np.concatenate([xs[k], V[k]])
        parts["waypoint"] += float(e @ weights.Q[k] @ e)
        parts["energy"] += float(z @ energy_matrix(t, weights.eta[k], shape) @ z)
        parts["time"] += float(weights.w[k] * t * t)
    parts["terminal"] = terminal_cost(xs[-1], weights)[0]
    total = parts["waypoint"] + parts["energy"] + parts["terminal"]
    if mode == JOINT:
        total += parts["time"]
    parts["total"] = total
    return total, parts
