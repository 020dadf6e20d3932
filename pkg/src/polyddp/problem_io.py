"""Instance files, random corridor instances and initial time allocation.

Instance files are JSON documents with a fixed key order and floats written
with 17 significant digits, so ``save -> load -> save`` is byte-identical::

    {
      "shape": {"n": 5, "d": 3, "N": 4},
      "x0": [...],                                  # length m*d
      "goals": {"states": [[...]], "Q_diag": [[...]],
                "terminal_state": [...], "Q_N_diag": [...]},
      "weights": {"eta": [[...]], "w": [...]},      # eta is N x m
      "corridor": [{"W": [[...]], "h": [...]}, ...] or null,
      "bounds": {"1": [lo, hi], ...} or null,
      "t_min": 0.1,
      "times": [...] or null,
      "basis": "bernstein"
    }
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .constraints import ControlPointBasis, DerivBounds, Polyhedron
from .objective import StageWeights
from .polyspline import PiecewiseTrajectory, SplineShape
from .problem import Problem

__all__ = [
    "InstanceError",
    "CorridorGeometry",
    "problem_to_dict",
    "problem_from_dict",
    "dumps",
    "save_instance",
    "load_instance",
    "initial_time_allocation",
    "generate_random_corridor",
    "generate_waypoint_instance",
    "solution_to_dict",
    "save_solution",
    "load_solution",
]

KEY_ORDER = ("shape", "x0", "goals", "weights", "corridor", "bounds", "t_min", "times", "basis")


class InstanceError(ValueError):
    """Malformed or inconsistent instance; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _fmt(x) -> str:
    if isinstance(x, (bool, str)) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_emit(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_fmt(v) for v in obj) + "]"
        items = [f"{pad}  {_emit(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, str):
        return json.dumps(obj)
    return _fmt(obj)


def dumps(doc: dict) -> str:
    """Canonical text for a nested dict of lists / numbers / strings."""
    return _emit(doc) + "\n"


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def problem_to_dict(problem: Problem) -> dict:
    s, w = problem.shape, problem.weights
    doc = {
        "shape": {"n": s.n, "d": s.d, "N": s.N},
        "x0": _floats(problem.x0),
        "goals": {
            "states": _floats(w.x_goal),
            "Q_diag": _floats(np.array([np.diag(Q) for Q in w.Q])),
            "terminal_state": _floats(w.x_goal_N),
            "Q_N_diag": _floats(np.diag(w.Q_N)),
        },
        "weights": {"eta": _floats(w.eta), "w": _floats(w.w)},
        "corridor": None
        if problem.corridor is None
        else [{"W": _floats(P.W), "h": _floats(P.h)} for P in problem.corridor],
        "bounds": None
        if problem.bounds is None
        else {str(i): [lo, hi] for i, (lo, hi) in problem.bounds.limits.items()},
        "t_min": float(problem.t_min),
        "times": None if problem.times is None else _floats(problem.times),
        "basis": problem.basis.kind,
    }
    return {k: doc[k] for k in KEY_ORDER}


def _array(doc, path, shape=None):
    try:
        a = np.asarray(doc, dtype=float)
    except (TypeError, ValueError):
        raise InstanceError(path, "expected a numeric array") from None
    if shape is not None and a.shape != shape:
        raise InstanceError(path, f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InstanceError(path, "contains non-finite values")
    return a


def problem_from_dict(doc: dict) -> Problem:
    """Validate a parsed document and build the problem; errors carry field paths."""
    if not isinstance(doc, dict):
        raise InstanceError("$", "top level must be an object")
    for key in ("shape", "x0", "goals", "weights"):
        if key not in doc:
            raise InstanceError(key, "missing")
    unknown = set(doc) - set(KEY_ORDER)
    if unknown:
        raise InstanceError(sorted(unknown)[0], "unknown field")
    sd = doc["shape"]
    try:
        shape = SplineShape(int(sd["n"]), int(sd["d"]), int(sd["N"]))
    except KeyError as err:
        raise InstanceError(f"shape.{err.args[0]}", "missing") from None
    except (TypeError, ValueError) as err:
        raise InstanceError("shape", str(err)) from None
    N, md, m, d = shape.N, shape.state_dim, shape.m, shape.d

    x0 = _array(doc["x0"], "x0", (md,))
    g = doc["goals"]
    for key in ("states", "Q_diag", "terminal_state", "Q_N_diag"):
        if key not in g:
            raise InstanceError(f"goals.{key}", "missing")
    states = _array(g["states"], "goals.states", (N, md))
    qd = _array(g["Q_diag"], "goals.Q_diag", (N, md))
    term = _array(g["terminal_state"], "goals.terminal_state", (md,))
    qnd = _array(g["Q_N_diag"], "goals.Q_N_diag", (md,))
    if np.any(qd < 0):
        raise InstanceError("goals.Q_diag", "weights must be nonnegative")
    if np.any(qnd < 0):
        raise InstanceError("goals.Q_N_diag", "weights must be nonnegative")
    wd = doc["weights"]
    for key in ("eta", "w"):
        if key not in wd:
            raise InstanceError(f"weights.{key}", "missing")
    eta = _array(wd["eta"], "weights.eta", (N, m))
    wt = _array(wd["w"], "weights.w", (N,))
    if np.any(eta < 0):
        raise InstanceError("weights.eta", "must be nonnegative")
    if np.any(wt < 0):
        raise InstanceError("weights.w", "must be nonnegative")
    weights = StageWeights(
        Q=np.array([np.diag(q) for q in qd]), x_goal=states, eta=eta, w=wt, Q_N=np.diag(qnd), x_goal_N=term
    )

    corridor = None
    if doc.get("corridor") is not None:
        cd = doc["corridor"]
        if not isinstance(cd, list):
            raise InstanceError("corridor", "expected a list of polyhedra")
        if len(cd) != N:
            raise InstanceError("corridor", f"expected {N} polyhedra, got {len(cd)}")
        corridor = []
        for k, P in enumerate(cd):
            if "W" not in P or "h" not in P:
                raise InstanceError(f"corridor[{k}]", "needs W and h")
            W = _array(P["W"], f"corridor[{k}].W")
            h = _array(P["h"], f"corridor[{k}].h")
            if W.ndim != 2 or W.shape[1] != d:
                raise InstanceError(f"corridor[{k}].W", f"expected s x {d} matrix, got {W.shape}")
            if h.shape != (W.shape[0],):
                raise InstanceError(f"corridor[{k}].h", f"expected length {W.shape[0]}")
            try:
                corridor.append(Polyhedron(W, h))
            except ValueError as err:
                raise InstanceError(f"corridor[{k}]", str(err)) from None

    bounds = None
    if doc.get("bounds") is not None:
        try:
            bounds = DerivBounds({int(i): tuple(v) for i, v in doc["bounds"].items()})
        except (TypeError, ValueError) as err:
            raise InstanceError("bounds", str(err)) from None
        for i in bounds.limits:
            if i > m - 1:
                raise InstanceError(f"bounds.{i}", f"orders above {m - 1} cannot be constrained")

    t_min = float(doc.get("t_min", 0.1))
    if not t_min > 0:
        raise InstanceError("t_min", "must be positive")
    times = None
    if doc.get("times") is not None:
        times = _array(doc["times"], "times", (N,))
        if np.any(times <= 0):
            raise InstanceError("times", "durations must be positive")
    kind = doc.get("basis", "bernstein")
    try:
        basis = ControlPointBasis(kind)
    except ValueError as err:
        raise InstanceError("basis", str(err)) from None
    return Problem(shape, x0, weights, corridor, bounds, t_min, times, basis)


def save_instance(problem: Problem, path: str | os.PathLike) -> None:
    with open(path, "w") as f:
        f.write(dumps(problem_to_dict(problem)))


def load_instance(path: str | os.PathLike) -> Problem:
    with open(path) as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InstanceError(f"line {err.lineno} column {err.colno}", err.msg) from None
    return problem_from_dict(doc)


def initial_time_allocation(
    waypoints: ArrayLike, v_max: float, a_max: float, t_min: float = 0.1
) -> NDArray:
    """Rest-to-rest trapezoidal (or triangular) velocity profile per segment."""
    if not (v_max > 0 and a_max > 0):
        raise ValueError("v_max and a_max must be positive")
    pts = np.asarray(waypoints, dtype=float)
    L = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    ramp = v_max**2 / a_max
    t = np.where(L >= ramp, L / v_max + v_max / a_max, 2.0 * np.sqrt(L / a_max))
    return np.maximum(t, t_min)


@dataclass
class CorridorGeometry:
    """Knobs of the random corridor generator.

    Each polyhedron is the axis-aligned box around its segment, inflated by
    ``box_margin``, cut by extra random halfspaces that keep at least
    ``clearance`` from the segment.  Facet counts are ``2 d`` plus an
    exponential draw with mean ``mean_facets - 2 d``, clipped to
    ``facet_range``.
    """

    seg_len: tuple = (1.5, 3.0)
    box_margin: float = 0.8
    clearance: float = 0.3
    facet_range: tuple = (6, 117)
    mean_facets: float = 28.0
    turn: float = 0.6
    vertical_scale: float = 0.3

    def validate(self, d: int):
        lo, hi = self.seg_len
        if not 0 < lo <= hi:
            raise ValueError("seg_len must satisfy 0 < low <= high")
        if not 0 < self.clearance < self.box_margin:
            raise ValueError("need 0 < clearance < box_margin so consecutive polyhedra overlap")
        fmin, fmax = self.facet_range
        if fmin < 2 * d or fmax < fmin:
            raise ValueError(f"facet range must start at >= {2 * d} and be nondecreasing")


def generate_random_corridor(
    seed: int,
    N: int,
    d: int = 3,
    geometry: CorridorGeometry | None = None,
    *,
    n: int = 5,
    v_max: float = 2.0,
    a_max: float = 2.0,
    eta: float = 1.0,
    w: float = 20.0,
    q_N: float = 100.0,
    t_min: float = 0.1,
) -> tuple[Problem, NDArray]:
    """Random safe-corridor instance and its waypoints ``(N + 1, d)``.

    The trajectory starts at rest at the first waypoint and is attracted to
    rest at the last one; intermediate goals carry zero weight.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    geom = geometry or CorridorGeometry()
    geom.validate(d)
    rng = np.random.default_rng(seed)

    direction = rng.normal(size=d)
    if d >= 3:
        direction[2:] *= geom.vertical_scale
    direction /= np.linalg.norm(direction)
    pts = [np.zeros(d)]
    for _ in range(N):
        direction = direction + geom.turn * rng.normal(size=d)
        if d >= 3:
            direction[2:] *= geom.vertical_scale
        direction /= np.linalg.norm(direction)
        pts.append(pts[-1] + rng.uniform(*geom.seg_len) * direction)
    pts = np.array(pts)

    fmin, fmax = geom.facet_range
    corridor = []
    for k in range(N):
        a, b = pts[k], pts[k + 1]
        lo = np.minimum(a, b) - geom.box_margin
        hi = np.maximum(a, b) + geom.box_margin
        W = [np.eye(d), -np.eye(d)]
        h = [hi, -lo]
        extra = rng.exponential(max(geom.mean_facets - 2 * d, 1e-9))
        faces = int(np.clip(2 * d + round(extra), fmin, fmax))
        for _ in range(faces - 2 * d):
            nrm = rng.normal(size=d)
            nrm /= np.linalg.norm(nrm)
            off = max(nrm @ a, nrm @ b) + rng.uniform(geom.clearance, geom.box_margin * np.sqrt(d))
            W.append(nrm[None, :])
            h.append([off])
        corridor.append(Polyhedron(np.vstack(W), np.concatenate(h)))

    shape = SplineShape(n, d, N)
    md = shape.state_dim
    x0 = np.zeros(md)
    x0[:d] = pts[0]
    goal = np.zeros(md)
    goal[:d] = pts[-1]
    x_goal = np.zeros((N, md))
    x_goal[:, :d] = pts[:N]
    weights = StageWeights.uniform(shape, q=0.0, x_goal=x_goal, eta=eta, w=w, q_N=q_N, x_goal_N=goal)
    maxima = [v_max, a_max][: shape.m - 1]
    bounds = DerivBounds.symmetric(*maxima) if maxima else None
    times = initial_time_allocation(pts, v_max, a_max, t_min)
    return Problem(shape, x0, weights, corridor, bounds, t_min, times), pts


def generate_waypoint_instance(
    seed: int,
    N: int,
    d: int = 3,
    *,
    n: int = 7,
    seg_len: tuple = (1.0, 3.0),
    q: float = 100.0,
    q_N: float = 100.0,
    eta: float = 1e-5,
    v_max: float = 2.0,
    a_max: float = 2.0,
    t_min: float = 0.1,
) -> tuple[Problem, NDArray]:
    """Unconstrained waypoint-tracking instance with fixed durations.

    Stage ``k`` pulls the start of segment ``k`` toward waypoint ``k`` at rest;
    the defaults are the large-scale tracking setting (minimum snap, light
    top-order energy, heavy waypoint weights).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    steps = rng.normal(size=(N, d))
    steps /= np.linalg.norm(steps, axis=1, keepdims=True)
    steps *= rng.uniform(*seg_len, size=(N, 1))
    pts = np.vstack([np.zeros(d), np.cumsum(steps, axis=0)])
    shape = SplineShape(n, d, N)
    md = shape.state_dim
    x_goal = np.zeros((N, md))
    x_goal[:, :d] = pts[:N]
    goal = np.zeros(md)
    goal[:d] = pts[-1]
    weights = StageWeights.uniform(shape, q=q, x_goal=x_goal, eta=eta, w=0.0, q_N=q_N, x_goal_N=goal)
    times = initial_time_allocation(pts, v_max, a_max, t_min)
    return Problem(shape, x_goal[0].copy(), weights, None, None, t_min, times), pts


def solution_to_dict(traj: PiecewiseTrajectory, status: str, cost_breakdown: dict | None = None) -> dict:
    """Coefficients ``(N, n + 1, d)`` row-major per segment, plus durations."""
    s = traj.shape
    return {
        "shape": {"n": s.n, "d": s.d, "N": s.N},
        "status": status,
        "durations": _floats(traj.durations),
        "coefficients": _floats(traj.coeffs),
        "cost": {k: float(v) for k, v in (cost_breakdown or {}).items()},
    }


def save_solution(traj: PiecewiseTrajectory, path, status: str, cost_breakdown: dict | None = None) -> None:
    with open(path, "w") as f:
        f.write(dumps(solution_to_dict(traj, status, cost_breakdown)))


def load_solution(path) -> PiecewiseTrajectory:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as err:
            raise InstanceError(f"line {err.lineno} column {err.colno}", err.msg) from None
    for key in ("shape", "durations", "coefficients"):
        if key not in doc:
            raise InstanceError(key, "missing")
    sd = doc["shape"]
    try:
        shape = SplineShape(int(sd["n"]), int(sd["d"]), int(sd["N"]))
    except (KeyError, TypeError, ValueError) as err:
        raise InstanceError("shape", str(err)) from None
    C = _array(doc["coefficients"], "coefficients", (shape.N, shape.n + 1, shape.d))
    T = _array(doc["durations"], "durations", (shape.N,))
    try:
        return PiecewiseTrajectory(shape, C, T)
    except ValueError as err:
        raise InstanceError("durations", str(err)) from None
