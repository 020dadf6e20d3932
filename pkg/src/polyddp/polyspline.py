"""State-space representation of odd-degree piecewise polynomials.

A segment of degree ``n = 2m - 1`` in ``d`` dimensions is stored as a
coefficient matrix ``C`` of shape ``(n + 1, d)`` (row ``r`` multiplies
``t**r``).  Its low-order half is fixed by the phase state at the start of the
segment, so an N-segment trajectory is fully described by the initial phase
state plus, per segment, the high-order coefficient block ``v`` and the
duration ``t``::

    x[k+1] = A(t[k]) @ x[k] + B(t[k]) @ v[k]

Vector layout (used everywhere in the package):

* phase state ``x``: derivative-major, axis-minor, i.e. ``x.reshape(m, d)[i]``
  is the ``i``-th derivative at the segment start.
* control block ``v``: coefficient-major, axis-minor, i.e.
  ``v.reshape(m, d)[j]`` is the coefficient of ``t**(m + j)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "SplineShape",
    "ControlInput",
    "PiecewiseTrajectory",
    "monomial_basis",
    "f_blocks",
    "transition_matrix",
    "state_matrices",
    "state_matrix_time_derivs",
    "propagate",
    "coeffs_from",
    "state_control_from",
    "rollout",
    "evaluate",
    "continuity_residuals",
]


def _falling(r: int, i: int) -> float:
    """r! / (r - i)!, zero when i > r."""
    if i > r:
        return 0.0
    return float(factorial(r) // factorial(r - i))


@dataclass(frozen=True)
class SplineShape:
    """Degree ``n`` (odd), dimension ``d`` and segment count ``N``."""

    n: int
    d: int
    N: int = 1

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"polynomial degree must be odd and >= 3, got n={self.n}")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got d={self.d}")
        if self.N < 1:
            raise ValueError(f"segment count must be >= 1, got N={self.N}")
        if self.n > 7:
            warnings.warn(f"degree n={self.n} is outside the validated set {{3, 5, 7}}", stacklevel=3)

    @property
    def m(self) -> int:
        return (self.n + 1) // 2

    @property
    def state_dim(self) -> int:
        return self.m * self.d

    def with_segments(self, N: int) -> "SplineShape":
        return SplineShape(self.n, self.d, N)


@dataclass(frozen=True)
class ControlInput:
    """High-order coefficient block of one segment and (optionally) its duration."""

    v: NDArray
    duration: float | None = None

    def __post_init__(self):
        if self.duration is not None and not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """N polynomial segments in local time.

    ``coeffs`` has shape ``(N, n + 1, d)`` and ``durations`` shape ``(N,)``.
    """

    shape: SplineShape
    coeffs: NDArray
    durations: NDArray
    knots: NDArray = field(init=False, repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        durations = np.asarray(self.durations, dtype=float).reshape(-1)
        s = self.shape
        if coeffs.shape != (s.N, s.n + 1, s.d):
            raise ValueError(f"coeffs shape {coeffs.shape} does not match {(s.N, s.n + 1, s.d)}")
        if durations.shape != (s.N,):
            raise ValueError(f"expected {s.N} durations, got {durations.shape[0]}")
        if np.any(durations <= 0):
            k = int(np.argmax(durations <= 0))
            raise ValueError(f"segment {k} has non-positive duration {durations[k]}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "knots", np.concatenate([[0.0], np.cumsum(durations)]))

    @property
    def total_duration(self) -> float:
        return float(self.knots[-1])

    def segment_eval(self, k: int, t_local: float, i: int = 0) -> NDArray:
        return monomial_basis(t_local, self.shape.n, i) @ self.coeffs[k]

    def __call__(self, t_global: float, i: int = 0) -> NDArray:
        return evaluate(self, t_global, i)

    def sample(self, num: int, i: int = 0) -> tuple[NDArray, NDArray]:
        """Evaluate ``num`` uniformly spaced points over the whole trajectory."""
        ts = np.linspace(0.0, self.total_duration, num)
        return ts, np.array([evaluate(self, t, i) for t in ts])


def monomial_basis(t: float, n: int, i: int = 0) -> NDArray:
    """i-th time derivative of ``[1, t, ..., t**n]``."""
    if t < 0:
        raise ValueError(f"basis evaluated at negative time {t}")
    out = np.zeros(n + 1)
    for r in range(i, n + 1):
        out[r] = _falling(r, i) * t ** (r - i)
    return out


def f_blocks(t: float, m: int) -> tuple[NDArray, NDArray, NDArray]:
    """Blocks of the endpoint map ``[b^[m](0), b^[m](t)]^T``.

    Returns ``(F11, F21, F22)``; row ``i`` is the ``i``-th derivative, column
    ``j`` the coefficient index inside the block.  ``F21`` uses the factorial
    form ``(j)! / (j - i)!`` so that ``F21 @ inv(F11)`` is the integrator-chain
    transition matrix.
    """
    if m < 1:
        raise ValueError(f"half-order must be >= 1, got m={m}")
    F11 = np.diag([float(factorial(i)) for i in range(m)])
    F21 = np.zeros((m, m))
    F22 = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            F21[i, j] = _falling(j, i) * t ** (j - i)
        for j in range(m):
            F22[i, j] = _falling(m + j, i) * t ** (m + j - i)
    return F11, F21, F22


def transition_matrix(t: float, m: int) -> NDArray:
    """exp(t * J) for the m-integrator chain: entry (i, j) = t^(j-i) / (j-i)!."""
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            out[i, j] = t ** (j - i) / factorial(j - i)
    return out


@lru_cache(maxsize=None)
def _block_table(m: int, order: int, high: bool) -> tuple[NDArray, NDArray]:
    """Constant factors and exponents of the ``order``-th t-derivative of a block.

    ``high`` selects the input block ``F22``, otherwise the transition block.
    Entries are ``coef * t ** power``; zero entries get power 0.
    """
    coef = np.zeros((m, m))
    power = np.zeros((m, m), dtype=int)
    for i in range(m):
        for j in range(m):
            if high:
                p, c = m + j - i, _falling(m + j, i)
            elif j >= i:
                p, c = j - i, 1.0 / factorial(j - i)
            else:
                continue
            if p >= order:
                coef[i, j] = c * _falling(p, order)
                power[i, j] = p - order
    coef.flags.writeable = False
    power.flags.writeable = False
    return coef, power


def _a_block_deriv(t: float, m: int, order: int) -> NDArray:
    coef, power = _block_table(m, order, False)
    return coef * t**power


def _b_block_deriv(t: float, m: int, order: int) -> NDArray:
    coef, power = _block_table(m, order, True)
    return coef * t**power


def _kron_eye(M: NDArray, d: int) -> NDArray:
    """``M (x) I_d`` without the general Kronecker product."""
    m = M.shape[0]
    out = np.zeros((m, d, m, d))
    idx = np.arange(d)
    out[:, idx, :, idx] = M
    return out.reshape(m * d, m * d)


def state_matrices(t: float, shape: SplineShape) -> tuple[NDArray, NDArray]:
    """``A(t) = (F21 F11^-1) (x) I_d`` and ``B(t) = F22 (x) I_d``."""
    if t < 0:
        raise ValueError(f"segment duration must be positive, got {t}")
    return _kron_eye(_a_block_deriv(t, shape.m, 0), shape.d), _kron_eye(_b_block_deriv(t, shape.m, 0), shape.d)


def state_matrix_time_derivs(t: float, shape: SplineShape, order: int) -> tuple[NDArray, NDArray]:
    """Exact first or second derivative of ``(A(t), B(t))`` with respect to ``t``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    return _kron_eye(_a_block_deriv(t, shape.m, order), shape.d), _kron_eye(_b_block_deriv(t, shape.m, order), shape.d)


def _check_vec(name: str, a: ArrayLike, size: int) -> NDArray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != size:
        raise ValueError(f"{name} has length {a.size}, expected {size}")
    return a


def propagate(x: ArrayLike, v: ArrayLike, t: float, shape: SplineShape) -> NDArray:
    """Phase state at the distal end of the segment built from ``(x, v, t)``."""
    if not t > 0:
        raise ValueError(f"segment duration must be positive, got {t}")
    x = _check_vec("state", x, shape.state_dim)
    v = _check_vec("control", v, shape.state_dim)
    A, B = state_matrices(t, shape)
    return A @ x + B @ v


def coeffs_from(x: ArrayLike, v: ArrayLike, shape: SplineShape) -> NDArray:
    """Coefficient matrix ``(n + 1, d)`` of the segment starting at state ``x``.

    The low-order block does not depend on the duration.
    """
    m, d = shape.m, shape.d
    x = _check_vec("state", x, m * d).reshape(m, d)
    v = _check_vec("control", v, m * d).reshape(m, d)
    inv_fact = np.array([1.0 / factorial(i) for i in range(m)])
    return np.vstack([x * inv_fact[:, None], v])


def state_control_from(coeffs: ArrayLike, shape: SplineShape) -> tuple[NDArray, NDArray]:
    """Inverse of :func:`coeffs_from`."""
    m, d = shape.m, shape.d
    C = np.asarray(coeffs, dtype=float)
    if C.shape != (2 * m, d):
        raise ValueError(f"coefficient matrix shape {C.shape}, expected {(2 * m, d)}")
    fact = np.array([float(factorial(i)) for i in range(m)])
    x = (C[:m] * fact[:, None]).reshape(-1)
    v = C[m:].reshape(-1)
    return x, v


def rollout(
    x0: ArrayLike, v: ArrayLike, durations: ArrayLike, shape: SplineShape
) -> tuple[PiecewiseTrajectory, NDArray]:
    """Build the trajectory and the phase-state sequence ``(N + 1, m d)``.

    ``v`` is ``(N, m d)``; the segment count is taken from ``durations``.
    """
    durations = np.asarray(durations, dtype=float).reshape(-1)
    N = durations.size
    if N == 0:
        raise ValueError("at least one segment is required")
    shape = shape.with_segments(N)
    V = np.asarray(v, dtype=float).reshape(N, shape.state_dim)
    for k, tk in enumerate(durations):
        if not tk > 0:
            raise ValueError(f"segment {k} has invalid duration {tk}")
    xs = np.empty((N + 1, shape.state_dim))
    xs[0] = _check_vec("x0", x0, shape.state_dim)
    coeffs = np.empty((N, shape.n + 1, shape.d))
    for k in range(N):
        coeffs[k] = coeffs_from(xs[k], V[k], shape)
        A, B = state_matrices(durations[k], shape)
        xs[k + 1] = A @ xs[k] + B @ V[k]
    return PiecewiseTrajectory(shape, coeffs, durations), xs


def evaluate(traj: PiecewiseTrajectory, t_global: float, i: int = 0) -> NDArray:
    """i-th derivative at global time; interior knots use the right segment."""
    T = traj.total_duration
    if t_global < 0 or t_global > T:
        raise ValueError(f"time {t_global} outside [0, {T}]")
    if t_global == T:
        k = traj.shape.N - 1
    else:
        k = int(np.searchsorted(traj.knots, t_global, side="right")) - 1
    return traj.segment_eval(k, t_global - traj.knots[k], i)


def continuity_residuals(traj: PiecewiseTrajectory) -> NDArray:
    """Max-abs mismatch of derivatives ``0..m-1`` at each interior knot, shape ``(N - 1, m)``."""
    s = traj.shape
    out = np.zeros((max(s.N - 1, 0), s.m))
    for k in range(s.N - 1):
        for i in range(s.m):
            left = traj.segment_eval(k, traj.durations[k], i)
            right = traj.segment_eval(k + 1, 0.0, i)
            out[k, i] = np.abs(left - right).max()
    return out
