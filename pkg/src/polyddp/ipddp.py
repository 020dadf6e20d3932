"""Interior-point DDP over the polynomial state-space system.

Two decision layouts are supported:

* joint mode, ``u = [v; t]``: coefficients and segment durations are optimized
  together, dynamics and constraints are nonlinear in ``t``;
* fixed mode, ``u = v``: durations are frozen and the problem is a
  linear-time-varying, inequality-constrained LQ problem.

Feasible-start iterations keep ``g < 0`` and duals ``lam > 0``; the
perturbed complementarity ``lam * g = -mu`` is relaxed by a barrier parameter
driven to ``mu_min``.  The infeasible-start variant adds slacks ``y > 0`` with
``g + y = 0`` and a filter line search; it is used to find a strictly feasible
starting trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .constraints import assemble_stage_constraint
from .objective import FIXED, JOINT, check_mode, energy_matrix, stage_cost, terminal_cost, total_cost
from .polyspline import rollout, state_matrices, state_matrix_time_derivs
from .problem import Problem
from .results import IterateTrace, SolveResult, Status

__all__ = [
    "SolverConfig",
    "BackwardPassResult",
    "StageModel",
    "backward_pass",
    "forward_pass",
    "solve",
    "solve_infeasible_start",
    "solve_fixed_time",
    "pipeline_three_stage",
    "gains_reduced",
    "gains_full_kkt",
    "PipelineError",
]

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"


@dataclass
class SolverConfig:
    mode: str = JOINT
    start: str = FEASIBLE
    mu_init: float | None = None
    mu_shrink: float = 0.2
    mu_min: float = 1e-8
    max_iterations: int = 500
    opt_tol: float = 1e-5
    reg_init: float = 0.0
    reg_min: float = 1e-6
    reg_max: float = 1e6
    ls_backtrack: float = 0.5
    ls_max_steps: int = 30
    armijo: float = 1e-4
    boundary_frac: float = 0.995
    t_min: float | None = None
    # infeasible start stops once every row satisfies g <= -feas_margin
    feas_margin: float = 1e-6
    feas_tol: float = 1e-8
    stop_when_feasible: bool = True
    slack_init: float = 1.0
    dual_init: float = 1.0
    # keep the curvature of the dynamics and constraints in the duration input
    second_order: bool = True
    # flip negative curvature of each joint-mode stage block (eigenvalue magnitudes)
    convexify: bool = True
    # extra curvature on the duration inputs (joint mode only)
    time_reg: float = 0.0

    def __post_init__(self):
        check_mode(self.mode)
        if self.start not in (FEASIBLE, INFEASIBLE):
            raise ValueError(f"start must be {FEASIBLE!r} or {INFEASIBLE!r}")
        if not 0 < self.mu_shrink < 1:
            raise ValueError("mu_shrink must lie in (0, 1)")
        if not self.mu_min > 0:
            raise ValueError("mu_min must be positive")
        if self.mu_init is not None and not self.mu_init > self.mu_min:
            raise ValueError("mu_init must exceed mu_min")
        if not 0 < self.ls_backtrack < 1:
            raise ValueError("ls_backtrack must lie in (0, 1)")
        if self.t_min is not None and not self.t_min > 0:
            raise ValueError("t_min must be positive")


class StageModel:
    """Dynamics, cost and constraints of one problem in solver layout.

    Fixed-mode quantities are linear/quadratic with constant matrices and are
    cached on first use.
    """

    def __init__(self, problem: Problem, mode: str, t_min: float | None = None):
        self.p = problem
        self.mode = check_mode(mode)
        self.joint = mode == JOINT
        self.shape = problem.shape
        self.md = problem.shape.state_dim
        self.nu = self.md + 1 if self.joint else self.md
        self.t_min = problem.t_min if t_min is None else t_min
        self._fixed_cache: dict[int, tuple] = {}
        if not self.joint and problem.times is None:
            raise ValueError("fixed-time mode needs problem.times")

    # layout helpers
    def split(self, u: NDArray, k: int) -> tuple[NDArray, float]:
        if self.joint:
            return u[: self.md], float(u[self.md])
        return u, float(self.p.times[k])

    def pack(self, V: NDArray, T: NDArray) -> NDArray:
        return np.hstack([V, T[:, None]]) if self.joint else V.copy()

    def unpack(self, U: NDArray) -> tuple[NDArray, NDArray]:
        if self.joint:
            return U[:, : self.md].copy(), U[:, self.md].copy()
        return U.copy(), self.p.times.copy()

    def _fixed(self, k):
        if k not in self._fixed_cache:
            t = float(self.p.times[k])
            A, B = state_matrices(t, self.shape)
            zero = np.zeros(self.md)
            sc = assemble_stage_constraint(
                zero, zero, self.p.poly(k), self.p.bounds, self.t_min, self.p.basis, self.shape, FIXED, t
            )
            self._fixed_cache[k] = (A, B, sc)
        return self._fixed_cache[k]

    def step(self, k: int, x: NDArray, u: NDArray) -> NDArray:
        if self.joint:
            v, t = self.split(u, k)
            A, B = state_matrices(t, self.shape)
        else:
            A, B, _ = self._fixed(k)
            v = u
        return A @ x + B @ v

    def constraint_value(self, k: int, x: NDArray, u: NDArray) -> NDArray:
        if not self.joint:
            _, _, sc = self._fixed(k)
            return sc.g + sc.jac_x @ x + sc.jac_u @ u
        return self.constraint(k, x, u).g

    def constraint(self, k: int, x: NDArray, u: NDArray):
        if not self.joint:
            _, _, sc = self._fixed(k)
            return replace(sc, g=sc.g + sc.jac_x @ x + sc.jac_u @ u)
        return assemble_stage_constraint(
            x, u, self.p.poly(k), self.p.bounds, self.t_min, self.p.basis, self.shape, JOINT
        )

    def stage_cost_value(self, k: int, x: NDArray, u: NDArray) -> float:
        w = self.p.weights
        v, t = self.split(u, k)
        e = x - w.x_goal[k]
        z = np.concatenate([x, v])
        val = e @ w.Q[k] @ e + z @ energy_matrix(t, w.eta[k], self.shape) @ z
        if self.joint:
            val += w.w[k] * t * t
        return float(val)

    def stage_cost(self, k: int, x: NDArray, u: NDArray):
        return stage_cost(x, u, k, self.p.weights, self.shape, self.mode, None if self.joint else self.p.times[k])

    def dynamics_derivs(self, k: int, x: NDArray, u: NDArray):
        """``(f_x, f_u, second)``; ``second`` is ``None`` or ``(dA, dB, f_tt)``."""
        if not self.joint:
            A, B, _ = self._fixed(k)
            return A, B, None
        v, t = self.split(u, k)
        A, B = state_matrices(t, self.shape)
        dA, dB = state_matrix_time_derivs(t, self.shape, 1)
        d2A, d2B = state_matrix_time_derivs(t, self.shape, 2)
        fu = np.empty((self.md, self.nu))
        fu[:, : self.md] = B
        fu[:, self.md] = dA @ x + dB @ v
        return A, fu, (dA, dB, d2A @ x + d2B @ v)

    def rollout(self, U: NDArray) -> NDArray:
        xs = np.empty((U.shape[0] + 1, self.md))
        xs[0] = self.p.x0
        for k in range(U.shape[0]):
            xs[k + 1] = self.step(k, xs[k], U[k])
        return xs

    def cost(self, xs: NDArray, U: NDArray) -> float:
        J = sum(self.stage_cost_value(k, xs[k], U[k]) for k in range(U.shape[0]))
        return J + terminal_cost(xs[-1], self.p.weights)[0]


@dataclass
class _Iterate:
    xs: NDArray
    U: NDArray
    lam: list
    g: list
    cost: float
    y: list | None = None  # slacks, infeasible start only


@dataclass
class BackwardPassResult:
    ku: NDArray
    Ku: NDArray
    kl: list
    Kl: list
    ky: list | None
    Ky: list | None
    dV1: float
    dV2: float
    opt_err: float
    compl_err: float
    primal_err: float

    @property
    def measure(self) -> float:
        return max(self.opt_err, self.compl_err, self.primal_err)


def gains_reduced(Quu, Qu, Qux, gu, gx, g, lam, mu, reg=0.0):
    """Gains from the condensed system with the dual step eliminated."""
    sig = lam / -g
    r = lam * g + mu
    Huu = Quu + gu.T @ (sig[:, None] * gu) + reg * np.eye(Quu.shape[0])
    hu = Qu - gu.T @ (r / g)
    Hux = Qux + gu.T @ (sig[:, None] * gx)
    fac = cho_factor(Huu)
    ku = -cho_solve(fac, hu)
    Ku = -cho_solve(fac, Hux)
    kl = -(r + lam * (gu @ ku)) / g
    Kl = -(lam[:, None] * (gx + gu @ Ku)) / g[:, None]
    return ku, Ku, kl, Kl


def gains_full_kkt(Quu, Qu, Qux, gu, gx, g, lam, mu):
    """Gains from the unreduced primal-dual block system (reference path)."""
    nu, nc = Quu.shape[0], g.size
    M = np.zeros((nu + nc, nu + nc))
    M[:nu, :nu] = Quu
    M[:nu, nu:] = gu.T
    M[nu:, :nu] = lam[:, None] * gu
    M[nu:, nu:] = np.diag(g)
    rhs = np.zeros((nu + nc, 1 + gx.shape[1]))
    rhs[:nu, 0] = Qu
    rhs[:nu, 1:] = Qux
    rhs[nu:, 0] = lam * g + mu
    rhs[nu:, 1:] = lam[:, None] * gx
    sol = -np.linalg.solve(M, rhs)
    return sol[:nu, 0], sol[:nu, 1:], sol[nu:, 0], sol[nu:, 1:]


def backward_pass(
    model: StageModel, it: _Iterate, mu: float, reg: float, second_order: bool = True, convexify: bool = False, time_reg: float = 0.0
) -> BackwardPassResult | None:
    """One backward sweep; ``None`` if a regularized Hessian block is not PD."""
    N, md, nu = it.U.shape[0], model.md, model.nu
    infeasible = it.y is not None
    _, Vx, Vxx = terminal_cost(it.xs[-1], model.p.weights)
    ku = np.zeros((N, nu))
    Ku = np.zeros((N, nu, md))
    kl, Kl = [None] * N, [None] * N
    ky, Ky = ([None] * N, [None] * N) if infeasible else (None, None)
    dV1 = dV2 = 0.0
    opt_err = compl_err = primal_err = 0.0
    opt_scale = 1.0
    eye = np.eye(nu)
    for k in range(N - 1, -1, -1):
        x, u = it.xs[k], it.U[k]
        c = model.stage_cost(k, x, u)
        sc = model.constraint(k, x, u)
        fx, fu, second = model.dynamics_derivs(k, x, u)
        lam, g = it.lam[k], sc.g
        gx, gu = sc.jac_x, sc.jac_u

        Qx = c.grad_x + fx.T @ Vx + gx.T @ lam
        Qu = c.grad_u + fu.T @ Vx + gu.T @ lam
        VxxFx = Vxx @ fx
        Qxx = c.hess_xx + fx.T @ VxxFx
        Qux = c.hess_ux + fu.T @ VxxFx
        Quu = c.hess_uu + fu.T @ Vxx @ fu
        if second is not None and second_order:
            dA, dB, ftt = second
            Qux[md] += Vx @ dA
            Quu[:md, md] += dB.T @ Vx
            Quu[md, :md] += dB.T @ Vx
            Quu[md, md] += Vx @ ftt
            _, hux, huu = sc.hessian_contraction(lam)
            Qux += hux
            Quu += huu

        if infeasible:
            y = it.y[k]
            rp = g + y
            rd = lam * y - mu
            sig = lam / y
            corr = (lam * rp - rd) / y
            primal_err = max(primal_err, np.abs(rp).max(initial=0.0))
            compl_err = max(compl_err, np.abs(rd).max(initial=0.0))
        else:
            sig = lam / -g
            corr = -(lam * g + mu) / g
            compl_err = max(compl_err, np.abs(lam * g + mu).max(initial=0.0))
        opt_err = max(opt_err, np.abs(Qu).max())
        opt_scale = max(opt_scale, np.abs(c.grad_u).max(), np.abs(fu.T @ Vx).max(), np.abs(gu.T @ lam).max(initial=0.0))

        hx = Qx + gx.T @ corr
        hu = Qu + gu.T @ corr
        Hxx = Qxx + gx.T @ (sig[:, None] * gx)
        Hux = Qux + gu.T @ (sig[:, None] * gx)
        Huu = Quu + gu.T @ (sig[:, None] * gu)
        Huu = 0.5 * (Huu + Huu.T)
        if convexify and model.joint:
            Hxx, Hux, Huu = _psd_block(Hxx, Hux, Huu)
        if model.joint and time_reg:
            Huu[md, md] += time_reg
        try:
            fac = cho_factor(Huu + reg * eye)
        except LinAlgError:
            return None
        ku[k] = -cho_solve(fac, hu)
        Ku[k] = -cho_solve(fac, Hux)
        gdu = gx + gu @ Ku[k]
        if infeasible:
            kl[k] = (lam * (rp + gu @ ku[k]) - rd) / y
            Kl[k] = sig[:, None] * gdu
            ky[k] = -rp - gu @ ku[k]
            Ky[k] = -gdu
        else:
            kl[k] = -(lam * g + mu + lam * (gu @ ku[k])) / g
            Kl[k] = -(lam[:, None] * gdu) / g[:, None]

        dV1 += ku[k] @ hu
        dV2 += 0.5 * ku[k] @ Huu @ ku[k]
        Vx = hx + Hux.T @ ku[k]
        Vxx = Hxx + Hux.T @ Ku[k]
        Vxx = 0.5 * (Vxx + Vxx.T)
    # stationarity relative to the size of the terms that cancel in Q_u
    opt_err /= opt_scale
    return BackwardPassResult(ku, Ku, kl, Kl, ky, Ky, dV1, dV2, opt_err, compl_err, primal_err)


def _psd_block(Hxx, Hux, Huu):
    """Make the stage block ``[[Hxx, Hux^T], [Hux, Huu]]`` positive semidefinite.

    Negative eigenvalues are replaced by their magnitudes.  Clipping them to
    zero instead leaves ``Huu`` nearly singular and the feedforward step
    explodes, which stalls the line search at step lengths around 1e-7.
    """
    nx = Hxx.shape[0]
    H = np.block([[Hxx, Hux.T], [Hux, Huu]])
    H = 0.5 * (H + H.T)
    w, Q = np.linalg.eigh(H)
    if w[0] >= 0.0:
        return Hxx, Hux, Huu
    H = (Q * np.abs(w)) @ Q.T
    return H[:nx, :nx], H[nx:, :nx], H[nx:, nx:]


def _barrier_merit(it: _Iterate, mu: float) -> float:
    if it.y is not None:
        logs = sum(np.log(y).sum() for y in it.y)
    else:
        logs = sum(np.log(-g).sum() for g in it.g)
    return it.cost - mu * logs


def _infeasibility(it: _Iterate) -> float:
    return float(sum(np.abs(g + y).sum() for g, y in zip(it.g, it.y)))


def _trial(model: StageModel, it: _Iterate, bp: BackwardPassResult, alpha: float, tau: float) -> _Iterate | None:
    """Apply the update with step ``alpha``; ``None`` if it leaves the interior."""
    N = it.U.shape[0]
    xs = np.empty_like(it.xs)
    U = np.empty_like(it.U)
    lam, gs = [None] * N, [None] * N
    ys = [None] * N if it.y is not None else None
    xs[0] = it.xs[0]
    J = 0.0
    for k in range(N):
        dx = xs[k] - it.xs[k]
        U[k] = it.U[k] + alpha * bp.ku[k] + bp.Ku[k] @ dx
        if model.joint and U[k, -1] <= 0.5 * model.t_min:
            return None
        lam[k] = it.lam[k] + alpha * bp.kl[k] + bp.Kl[k] @ dx
        if np.any(lam[k] < (1.0 - tau) * it.lam[k]):
            return None
        gs[k] = model.constraint_value(k, xs[k], U[k])
        if ys is None:
            if np.any(gs[k] > (1.0 - tau) * it.g[k]):
                return None
        else:
            ys[k] = it.y[k] + alpha * bp.ky[k] + bp.Ky[k] @ dx
            if np.any(ys[k] < (1.0 - tau) * it.y[k]):
                return None
        J += model.stage_cost_value(k, xs[k], U[k])
        xs[k + 1] = model.step(k, xs[k], U[k])
    J += terminal_cost(xs[-1], model.p.weights)[0]
    if not np.isfinite(J):
        return None
    return _Iterate(xs, U, lam, gs, J, ys)


def forward_pass(
    model: StageModel,
    it: _Iterate,
    bp: BackwardPassResult,
    mu: float,
    config: SolverConfig,
    filt: list | None = None,
) -> tuple[_Iterate, float] | None:
    """Backtracking line search; returns the accepted iterate and step length."""
    merit0 = _barrier_merit(it, mu)
    alpha = 1.0
    for _ in range(config.ls_max_steps):
        new = _trial(model, it, bp, alpha, config.boundary_frac)
        if new is not None:
            merit = _barrier_merit(new, mu)
            if it.y is not None:
                err = _infeasibility(new)
                if all(merit < fm or err < fe for fm, fe in filt):
                    filt.append((merit, err))
                    return new, alpha
            else:
                expected = -(alpha * bp.dV1 + alpha * alpha * bp.dV2)
                if expected <= 1e-14 * max(1.0, abs(merit0)):
                    if merit <= merit0 + 1e-12 * max(1.0, abs(merit0)):
                        return new, alpha
                elif merit0 - merit >= config.armijo * expected:
                    return new, alpha
        alpha *= config.ls_backtrack
    return None


def _initial_iterate(model: StageModel, U: NDArray, config: SolverConfig) -> _Iterate:
    xs = model.rollout(U)
    gs = [model.constraint_value(k, xs[k], U[k]) for k in range(U.shape[0])]
    J = model.cost(xs, U)
    if config.start == INFEASIBLE:
        ys = [np.maximum(-g, config.slack_init) for g in gs]
        lam = [np.full_like(g, config.dual_init) for g in gs]
        return _Iterate(xs, U, lam, gs, J, ys)
    return _Iterate(xs, U, [None] * len(gs), gs, J)


def _status_result(model, it, status, trace, iterations, mu, message=""):
    V, T = model.unpack(it.U)
    try:
        traj, _ = rollout(model.p.x0, V, T, model.shape)
    except ValueError:
        traj = None
    parts = {}
    if traj is not None:
        _, parts = total_cost(model.p.x0, V, T, model.p.weights, model.shape, model.mode)
    return SolveResult(
        trajectory=traj,
        states=it.xs,
        v=V,
        durations=T,
        duals=[np.asarray(l) for l in it.lam],
        status=status,
        trace=trace,
        cost_breakdown=parts,
        iterations=iterations,
        mu=mu,
        message=message,
    )


def _initial_inputs(problem: Problem, mode: str, v0, t0) -> tuple[NDArray, NDArray]:
    N, md = problem.N, problem.shape.state_dim
    V = np.zeros((N, md)) if v0 is None else np.asarray(v0, dtype=float).reshape(N, md)
    if t0 is None:
        t0 = problem.times
    if t0 is None:
        raise ValueError("initial durations are required")
    T = np.asarray(t0, dtype=float).reshape(N)
    return V, T


def solve(problem: Problem, config: SolverConfig | None = None, v0=None, t0=None) -> SolveResult:
    """Run interior-point DDP from ``(v0, t0)``.

    ``v0`` defaults to zeros and ``t0`` to ``problem.times``.  In feasible
    start the initial guess must satisfy ``g < 0`` at every stage.
    """
    config = config or SolverConfig()
    mode = config.mode
    trace = IterateTrace()
    try:
        model = StageModel(problem, mode, config.t_min)
        V, T = _initial_inputs(problem, mode, v0, t0)
        if np.any(T <= 0):
            raise ValueError("initial durations must be positive")
        it = _initial_iterate(model, model.pack(V, T), config)
    except ValueError as err:
        empty = np.zeros((0,))
        return SolveResult(None, empty, empty, empty, [], Status.INFEASIBLE_INPUT, trace, {}, message=str(err))

    infeasible = config.start == INFEASIBLE
    rows = sum(g.size for g in it.g)
    if not infeasible:
        worst = max((g.max() for g in it.g if g.size), default=-np.inf)
        if worst >= 0:
            return _status_result(
                model, it, Status.INFEASIBLE_INPUT, trace, 0, 0.0, f"initial guess violates constraints ({worst:.3e})"
            )
    if rows == 0:
        mu = config.mu_min
    elif config.mu_init is not None:
        mu = config.mu_init
    else:
        mu = max(1.0, it.cost / rows)
    if not infeasible:
        it.lam = [mu / -g for g in it.g]
    filt = [(_barrier_merit(it, mu), _infeasibility(it))] if infeasible else None

    reg = config.reg_init
    iterations = 0
    status = Status.MAX_ITER
    message = ""
    for _ in range(config.max_iterations):
        if infeasible and config.stop_when_feasible and _feasible_enough(it, config):
            status = Status.CONVERGED
            break
        bp = backward_pass(model, it, mu, reg, config.second_order, config.convexify, config.time_reg)
        if bp is None:
            reg = _bump(reg, config)
            if reg > config.reg_max:
                status, message = Status.REGULARIZATION_FAIL, "Hessian block not positive definite"
                break
            continue

        if bp.measure <= max(config.opt_tol, mu):
            if mu <= config.mu_min and bp.opt_err <= config.opt_tol and bp.compl_err <= mu and bp.primal_err <= config.feas_tol:
                status = Status.CONVERGED
                break
            if mu > config.mu_min:
                mu = max(config.mu_min, min(config.mu_shrink * mu, mu**1.2))
                if infeasible:
                    filt = [(_barrier_merit(it, mu), _infeasibility(it))]
                continue

        res = forward_pass(model, it, bp, mu, config, filt)
        if res is None:
            reg = _bump(reg, config)
            if reg > config.reg_max:
                status, message = Status.LINE_SEARCH_FAIL, "no acceptable step"
                break
            continue
        it, alpha = res
        iterations += 1
        reg = 0.0 if reg * 0.1 < config.reg_min else reg * 0.1
        viol = max((g.max() for g in it.g if g.size), default=-np.inf)
        slack = min(((-g).min() if it.y is None else y.min() for g, y in zip(it.g, it.y or it.g) if g.size), default=np.inf)
        trace.append(
            cost=it.cost, stationarity=bp.opt_err, violation=max(viol, 0.0), min_slack=slack, mu=mu, step=alpha, reg=reg
        )
        log.debug("iter %d cost %.6g opt %.3e mu %.1e alpha %.3g", iterations, it.cost, bp.opt_err, mu, alpha)
    else:
        if infeasible and config.stop_when_feasible and _feasible_enough(it, config):
            status = Status.CONVERGED

    return _status_result(model, it, status, trace, iterations, mu, message)


def _bump(reg: float, config: SolverConfig) -> float:
    return config.reg_min if reg < config.reg_min else reg * 10.0


def _feasible_enough(it: _Iterate, config: SolverConfig) -> bool:
    return all(g.max() <= -config.feas_margin for g in it.g if g.size)


def solve_infeasible_start(
    problem: Problem, config: SolverConfig | None = None, v0=None, t0=None, time_reg: float = 10.0
) -> SolveResult:
    """Find a strictly feasible trajectory from an arbitrary guess (zero ``v`` by default).

    In joint mode the search starts far from the corridor, where the
    curvature in the durations is unreliable, so the duration block uses
    Gauss-Newton curvature plus the proximal weight ``time_reg``.
    """
    config = replace(config or SolverConfig(), start=INFEASIBLE)
    if config.mode == JOINT:
        config = replace(config, second_order=False, convexify=False, time_reg=time_reg)
    return solve(problem, config, v0, t0)


def solve_fixed_time(problem: Problem, config: SolverConfig | None = None, v0=None) -> SolveResult:
    """Constrained fixed-time solve: infeasible start if needed, then feasible IPDDP."""
    config = replace(config or SolverConfig(), mode=FIXED)
    model = StageModel(problem, FIXED, config.t_min)
    V, T = _initial_inputs(problem, FIXED, v0, None)
    gs = [model.constraint_value(k, x, u) for k, (x, u) in enumerate(zip(model.rollout(V), V))]
    if any(g.size and g.max() > -config.feas_margin for g in gs):
        first = solve_infeasible_start(problem, config, V)
        if not first.converged:
            first.stages = [("feasibility", first.status)]
            return first
        V = first.v
    res = solve(problem, replace(config, start=FEASIBLE), V)
    return res


class PipelineError(RuntimeError):
    def __init__(self, stage: str, result: SolveResult):
        super().__init__(f"stage {stage!r} ended with status {result.status.value}")
        self.stage = stage
        self.result = result


@dataclass
class PipelineSettings:
    """Stage weights: feasibility uses ``(w1, qn1)``, joint optimization ``(w2, qn2)``."""

    w1: float = 1.0
    qn1: float = 1.0
    w2: float = 20.0
    qn2: float = 100.0
    polish: bool = True
    feasibility_time_reg: float = 10.0


def pipeline_three_stage(
    problem: Problem,
    config: SolverConfig | None = None,
    settings: PipelineSettings | None = None,
    v0=None,
    raise_on_failure: bool = False,
) -> SolveResult:
    """Feasibility search, joint energy-time optimization, fixed-time polish.

    Each stage is warm-started from the previous one; the returned result
    carries the per-stage ``(name, status, trace)`` list in ``stages``.
    """
    config = config or SolverConfig()
    settings = settings or PipelineSettings()
    stages = []

    def fail(name, res):
        res.stages = stages
        if raise_on_failure:
            raise PipelineError(name, res)
        return res

    p1 = problem.with_weights(problem.weights.replace(w=settings.w1, q_N=settings.qn1))
    r1 = solve_infeasible_start(p1, replace(config, mode=JOINT), v0, time_reg=settings.feasibility_time_reg)
    stages.append(("feasibility", r1.status, r1.trace))
    if not r1.converged:
        return fail("feasibility", r1)

    p2 = problem.with_weights(problem.weights.replace(w=settings.w2, q_N=settings.qn2))
    r2 = solve(p2, replace(config, mode=JOINT, start=FEASIBLE), r1.v, r1.durations)
    stages.append(("joint", r2.status, r2.trace))
    if not r2.converged:
        return fail("joint", r2)
    if not settings.polish:
        r2.stages = stages
        return r2

    p3 = p2.with_times(r2.durations)
    r3 = solve(p3, replace(config, mode=FIXED, start=FEASIBLE), r2.v)
    stages.append(("fixed-time", r3.status, r3.trace))
    if not r3.converged:
        return fail("fixed-time", r3)
    r3.stages = stages
    return r3
