"""Corridor, derivative-bound and duration constraints via control points.

Each segment is mapped to normalized time ``s in [0, 1]``.  The ``i``-th
derivative ``p^(i)(s t)`` is a degree ``n - i`` polynomial in ``s``; its control
points in a convex-hull basis (Bernstein by default) bound the physical
derivative over the whole segment, so linear constraints on them are sound
for the continuous-time curve.

Constraint rows of one stage, in order:

1. corridor: ``W @ xi0[l] - h <= 0`` for every position control point ``l``
   (point-major, face-minor);
2. for each bounded order ``i`` (ascending): ``lower - xi_i <= 0`` then
   ``xi_i - upper <= 0`` (point-major, axis-minor);
3. joint-time mode only: ``t_min - t <= 0``.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .objective import JOINT, check_mode
from .polyspline import PiecewiseTrajectory, SplineShape, _falling, coeffs_from

__all__ = [
    "MINVO_TABLE_ENV",
    "Polyhedron",
    "DerivBounds",
    "ControlPointBasis",
    "StageConstraint",
    "FeasibilityReport",
    "bernstein_matrix",
    "certify_basis",
    "load_basis_table",
    "control_point_matrix",
    "control_points",
    "assemble_stage_constraint",
    "constraint_row_count",
    "check_feasibility",
]

MINVO_TABLE_ENV = "POLYDDP_MINVO_TABLE"


@dataclass(frozen=True)
class Polyhedron:
    """Convex polyhedron ``{p : W p <= h}``."""

    W: NDArray
    h: NDArray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if W.shape[0] < 1 or W.shape[0] != h.size:
            raise ValueError(f"polyhedron needs matching W rows and h entries, got {W.shape} and {h.shape}")
        if np.any(np.linalg.norm(W, axis=1) == 0):
            raise ValueError("polyhedron has a zero normal row")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def num_faces(self) -> int:
        return self.W.shape[0]

    def margin(self, p: ArrayLike) -> NDArray:
        """``W p - h`` (nonpositive inside)."""
        return self.W @ np.asarray(p, dtype=float) - self.h

    def contains(self, p: ArrayLike, tol: float = 0.0) -> bool:
        return bool(np.all(self.margin(p) <= tol))

    def chebyshev_center(self) -> tuple[NDArray, float]:
        """Center and radius of the largest inscribed ball (radius <= 0: no interior)."""
        norms = np.linalg.norm(self.W, axis=1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A = np.hstack([self.W, norms[:, None]])
        res = linprog(c, A_ub=A, b_ub=self.h, bounds=[(None, None)] * self.dim + [(None, None)])
        if res.status == 3:
            return np.full(self.dim, np.nan), np.inf
        if not res.success:
            return np.full(self.dim, np.nan), -np.inf
        return res.x[:-1], float(res.x[-1])

    def warn_if_degenerate(self) -> bool:
        _, r = self.chebyshev_center()
        if r <= 0:
            warnings.warn("polyhedron has an empty interior", stacklevel=2)
            return True
        return False


@dataclass(frozen=True)
class DerivBounds:
    """Per-axis box bounds on derivative orders ``1..m-1``: ``{order: (lower, upper)}``."""

    limits: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for order, (lo, hi) in sorted(self.limits.items()):
            order = int(order)
            if order < 1:
                raise ValueError(f"derivative bounds apply to orders >= 1, got {order}")
            if not lo < 0 < hi:
                raise ValueError(f"order {order}: need lower < 0 < upper, got ({lo}, {hi})")
            clean[order] = (float(lo), float(hi))
        object.__setattr__(self, "limits", clean)

    @classmethod
    def symmetric(cls, *maxima: float) -> "DerivBounds":
        """``symmetric(v_max, a_max)`` bounds orders 1, 2, ... by ``+-max``."""
        return cls({i: (-float(v), float(v)) for i, v in enumerate(maxima, start=1)})

    def orders(self, m: int) -> list[int]:
        return [i for i in self.limits if i <= m - 1]


def bernstein_matrix(q: int) -> NDArray:
    """Monomial (ascending powers of s on [0, 1]) to Bezier control points."""
    M = np.zeros((q + 1, q + 1))
    for k in range(q + 1):
        for j in range(k + 1):
            M[k, j] = comb(k, j) / comb(q, j)
    return M


def certify_basis(M: ArrayLike, grid: int = 2001, tol: float = 1e-9) -> None:
    """Raise unless ``M`` is invertible and its basis functions form a partition of unity."""
    M = np.asarray(M, dtype=float)
    q = M.shape[0] - 1
    if M.shape != (q + 1, q + 1):
        raise ValueError(f"conversion matrix must be square, got {M.shape}")
    if np.linalg.cond(M) > 1e12:
        raise ValueError("conversion matrix is singular")
    s = np.linspace(0.0, 1.0, grid)
    powers = s[None, :] ** np.arange(q + 1)[:, None]
    beta = np.linalg.solve(M.T, powers)
    if beta.min() < -tol:
        raise ValueError(f"basis functions go negative ({beta.min():.3e}); convex-hull property fails")
    if np.abs(beta.sum(axis=0) - 1.0).max() > 1e-9:
        raise ValueError("basis functions do not sum to one")


def load_basis_table(path: str | os.PathLike) -> dict[int, NDArray]:
    """Read a ``{"degrees": {"q": [[...], ...]}}`` JSON table and certify each matrix.

    Matrices map ascending monomial coefficients on ``s in [0, 1]`` to control
    points, row-major.
    """
    with open(path) as f:
        doc = json.load(f)
    tables = {}
    for key, rows in doc.get("degrees", {}).items():
        M = np.asarray(rows, dtype=float)
        try:
            certify_basis(M)
        except ValueError as err:
            raise ValueError(f"{path}: degree {key}: {err}") from None
        if M.shape[0] != int(key) + 1:
            raise ValueError(f"{path}: degree {key} has a {M.shape} matrix")
        tables[int(key)] = M
    if not tables:
        raise ValueError(f"{path}: no conversion matrices found")
    return tables


@dataclass(frozen=True)
class ControlPointBasis:
    kind: str = "bernstein"
    tables: dict | None = None

    def __post_init__(self):
        if self.kind not in ("bernstein", "minvo"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "minvo" and self.tables is None:
            path = os.environ.get(MINVO_TABLE_ENV)
            if not path:
                raise ValueError(f"MINVO basis needs a table file (set {MINVO_TABLE_ENV})")
            object.__setattr__(self, "tables", load_basis_table(path))

    @classmethod
    def from_file(cls, path: str | Path) -> "ControlPointBasis":
        return cls("minvo", load_basis_table(path))

    def matrix(self, q: int) -> NDArray:
        if self.kind == "bernstein":
            return _bernstein_cached(q)
        if q not in self.tables:
            raise ValueError(f"basis table has no entry for degree {q}")
        return self.tables[q]

    def __hash__(self):
        return hash((self.kind, id(self.tables)))


@lru_cache(maxsize=None)
def _bernstein_cached(q: int) -> NDArray:
    M = bernstein_matrix(q)
    M.setflags(write=False)
    return M


def control_point_matrix(t: float, n: int, i: int, basis: ControlPointBasis, order: int = 0) -> NDArray:
    """``T^<i>(t)`` of shape ``(n + 1 - i, n + 1)`` or its ``order``-th t-derivative.

    ``T^<i>(t) @ C`` are the control points of ``p^(i)`` over the segment.
    """
    q = n - i
    D = np.zeros((q + 1, n + 1))
    for j in range(q + 1):
        D[j, j + i] = _falling(j + i, i) * _falling(j, order) * (t ** (j - order) if j >= order else 0.0)
    return basis.matrix(q) @ D


def control_points(
    coeffs: ArrayLike, duration: float, i: int, basis: ControlPointBasis, m: int | None = None
) -> NDArray:
    """Control points ``(n + 1 - i, d)`` of the ``i``-th derivative of one segment."""
    C = np.asarray(coeffs, dtype=float)
    n = C.shape[0] - 1
    m = (n + 1) // 2 if m is None else m
    if i < 0 or i >= m:
        raise ValueError(f"control points are defined for orders 0..{m - 1}, got {i}")
    return control_point_matrix(duration, n, i, basis) @ C


@lru_cache(maxsize=None)
def _row_labels(s: int, orders: tuple, n: int, d: int, joint: bool) -> tuple:
    labels = [("corridor", l, f) for l in range(n + 1) for f in range(s)]
    for i in orders:
        for side in ("lower", "upper"):
            labels += [(side, i, l, a) for l in range(n + 1 - i) for a in range(d)]
    if joint:
        labels.append(("time",))
    return tuple(labels)


def constraint_row_count(shape: SplineShape, num_faces: int, bounds: DerivBounds | None, mode: str) -> int:
    orders = bounds.orders(shape.m) if bounds else []
    rows = (shape.n + 1) * num_faces + sum(2 * shape.d * (shape.n + 1 - i) for i in orders)
    return rows + (1 if mode == JOINT else 0)


@dataclass
class StageConstraint:
    """Value and exact derivatives of one stage's ``g <= 0``.

    ``d2_tt`` and ``d2_tz`` (joint mode only) hold second derivatives with
    respect to the duration; ``z = [x; v]``.  Everything else is linear.
    """

    g: NDArray
    jac_x: NDArray
    jac_u: NDArray
    row_labels: tuple
    d2_tt: NDArray | None = None
    d2_tz: NDArray | None = None

    def hessian_contraction(self, lam: NDArray) -> tuple[NDArray, NDArray, NDArray]:
        """Second derivatives of ``lam . g``: ``(xx, ux, uu)``."""
        md = self.jac_x.shape[1]
        nu = self.jac_u.shape[1]
        xx = np.zeros((md, md))
        ux = np.zeros((nu, md))
        uu = np.zeros((nu, nu))
        if self.d2_tt is not None:
            ltz = lam @ self.d2_tz
            ux[-1] = ltz[:md]
            uu[:-1, -1] = uu[-1, :-1] = ltz[md:]
            uu[-1, -1] = lam @ self.d2_tt
        return xx, ux, uu


def assemble_stage_constraint(
    x: ArrayLike,
    u: ArrayLike,
    poly: Polyhedron | None,
    bounds: DerivBounds | None,
    t_min: float,
    basis: ControlPointBasis,
    shape: SplineShape,
    mode: str = JOINT,
    duration: float | None = None,
) -> StageConstraint:
    """Stage inequality ``g(x, u) <= 0`` with exact Jacobians.

    ``poly=None`` drops the corridor rows; ``bounds=None`` drops the
    derivative rows.  In fixed mode ``u = v`` and ``duration`` is required.
    """
    mode = check_mode(mode)
    n, d, m, md = shape.n, shape.d, shape.m, shape.state_dim
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if mode == JOINT:
        v, t = u[:md], float(u[md])
    else:
        if duration is None:
            raise ValueError("fixed-time constraints need the segment duration")
        v, t = u, float(duration)
    if x.size != md or v.size != md:
        raise ValueError("state / control length mismatch")
    C = coeffs_from(x, v, shape)
    scale = np.concatenate([np.repeat([1.0 / factorial(i) for i in range(m)], d), np.ones(md)])
    orders = bounds.orders(m) if bounds else []
    joint = mode == JOINT

    g_parts, J_parts, gt_parts, gtt_parts, Jt_parts = [], [], [], [], []
    eye = np.eye(d)
    for i, sign, Wmat, offset in _iter_blocks(poly, bounds, orders):
        T0 = control_point_matrix(t, n, i, basis)
        Wm = eye if Wmat is None else Wmat
        xi = T0 @ C
        g_parts.append((sign * (xi @ Wm.T) - offset).ravel())
        J_parts.append(sign * np.kron(T0, Wm) * scale)
        if joint:
            T1 = control_point_matrix(t, n, i, basis, 1)
            T2 = control_point_matrix(t, n, i, basis, 2)
            gt_parts.append(sign * ((T1 @ C) @ Wm.T).ravel())
            gtt_parts.append(sign * ((T2 @ C) @ Wm.T).ravel())
            Jt_parts.append(sign * np.kron(T1, Wm) * scale)

    labels = _row_labels(poly.num_faces if poly is not None else 0, tuple(orders), n, d, joint)
    if g_parts:
        g = np.concatenate(g_parts)
        Jz = np.vstack(J_parts)
    else:
        g = np.zeros(0)
        Jz = np.zeros((0, 2 * md))
    if not joint:
        return StageConstraint(g, Jz[:, :md], Jz[:, md:], labels)

    rows = g.size + 1
    g = np.append(g, t_min - t)
    jac_x = np.zeros((rows, md))
    jac_x[:-1] = Jz[:, :md]
    jac_u = np.zeros((rows, md + 1))
    jac_u[:-1, :md] = Jz[:, md:]
    jac_u[-1, md] = -1.0
    d2_tt = np.zeros(rows)
    d2_tz = np.zeros((rows, 2 * md))
    if gt_parts:
        jac_u[:-1, md] = np.concatenate(gt_parts)
        d2_tt[:-1] = np.concatenate(gtt_parts)
        d2_tz[:-1] = np.vstack(Jt_parts)
    return StageConstraint(g, jac_x, jac_u, labels, d2_tt, d2_tz)


def _iter_blocks(poly, bounds, orders):
    if poly is not None:
        yield 0, 1.0, poly.W, poly.h[None, :]
    for i in orders:
        lo, hi = bounds.limits[i]
        yield i, -1.0, None, -lo
        yield i, 1.0, None, hi


@dataclass
class FeasibilityReport:
    """Maximum violations (positive means violated) of a trajectory.

    ``control_point`` uses the convex-hull certificate; ``sampled`` checks the
    curve itself at uniformly spaced times.  Per-kind maxima are keyed by
    ``"corridor"`` and ``"order<i>"``.
    """

    control_point: float
    sampled: float
    control_point_by_kind: dict
    sampled_by_kind: dict
    worst_segment: int

    @property
    def certified(self) -> bool:
        return self.control_point <= 0.0


def check_feasibility(
    traj: PiecewiseTrajectory,
    corridor: list[Polyhedron] | None,
    bounds: DerivBounds | None,
    basis: ControlPointBasis | None = None,
    samples: int = 1000,
) -> FeasibilityReport:
    basis = basis or ControlPointBasis()
    shape = traj.shape
    if corridor is not None and len(corridor) != shape.N:
        raise ValueError(f"corridor has {len(corridor)} polyhedra for {shape.N} segments")
    orders = bounds.orders(shape.m) if bounds else []
    cp: dict[str, float] = {}
    sp: dict[str, float] = {}
    seg_worst = np.full(shape.N, -np.inf)

    def bump(table, key, val, k):
        table[key] = max(table.get(key, -np.inf), val)
        seg_worst[k] = max(seg_worst[k], val)

    s = np.linspace(0.0, 1.0, samples)
    for k in range(shape.N):
        C, T = traj.coeffs[k], traj.durations[k]
        ts = s * T
        if corridor is not None:
            P = corridor[k]
            xi = control_points(C, T, 0, basis)
            bump(cp, "corridor", float((xi @ P.W.T - P.h).max()), k)
            pts = _eval_many(C, ts, 0)
            bump(sp, "corridor", float((pts @ P.W.T - P.h).max()), k)
        for i in orders:
            lo, hi = bounds.limits[i]
            xi = control_points(C, T, i, basis)
            bump(cp, f"order{i}", float(max((xi - hi).max(), (lo - xi).max())), k)
            vals = _eval_many(C, ts, i)
            bump(sp, f"order{i}", float(max((vals - hi).max(), (lo - vals).max())), k)
    cp_max = max(cp.values(), default=-np.inf)
    sp_max = max(sp.values(), default=-np.inf)
    return FeasibilityReport(cp_max, sp_max, cp, sp, int(np.argmax(seg_worst)))


def _eval_many(C: NDArray, ts: NDArray, i: int) -> NDArray:
    n = C.shape[0] - 1
    B = np.zeros((ts.size, n + 1))
    for r in range(i, n + 1):
        B[:, r] = _falling(r, i) * ts ** (r - i)
    return B @ C
