from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DenseQP, central_diff, gram_quadrature
from polyddp.objective import (
    FIXED,
    JOINT,
    StageWeights,
    energy_gram,
    input_weight,
    rv_integral,
    stage_cost,
    terminal_cost,
    total_cost,
)
from polyddp.polyspline import SplineShape, rollout, state_control_from
from polyddp.problem import Problem


def sigma_quadrature(t, m, nodes=30):
    """int_0^t sigma sigma^T with sigma_a(s) = (m+a-1)!/(a-1)! s^(a-1), by Gauss-Legendre."""
    s, w = np.polynomial.legendre.leggauss(nodes)
    ts = 0.5 * t * (s + 1.0)
    out = np.zeros((m, m))
    psi = np.array([float(sp.factorial(m + a) / sp.factorial(a)) for a in range(m)])
    for tk, wk in zip(ts, w):
        sig = psi * tk ** np.arange(m)
        out += 0.5 * t * wk * np.outer(sig, sig)
    return out


def random_weights(shape, rng, eta_all=False):
    N, md, m = shape.N, shape.state_dim, shape.m
    Q = np.empty((N, md, md))
    for k in range(N):
        L = rng.normal(size=(md, md))
        Q[k] = L @ L.T / md
    eta = rng.uniform(0.1, 2.0, size=(N, m))
    if not eta_all:
        eta[:, :-1] = 0.0
    return StageWeights(
        Q=Q,
        x_goal=rng.normal(size=(N, md)),
        eta=eta,
        w=rng.uniform(0.5, 5.0, size=N),
        Q_N=np.eye(md) * 10.0,
        x_goal_N=rng.normal(size=md),
    )


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b).max() / max(1.0, np.abs(a).max())


# --- rv_integral -----------------------------------------------------------


def test_rv_integral_m3_unit_time():
    expected = [[36, 72, 120], [72, 192, 360], [120, 360, 720]]
    np.testing.assert_allclose(rv_integral(1.0, 3), expected, rtol=1e-14)
    np.testing.assert_allclose(sigma_quadrature(1.0, 3), expected, rtol=1e-12)


def test_rv_integral_m1():
    np.testing.assert_array_equal(rv_integral(2.0, 1), [[2.0]])


def test_rv_integral_m2_unit_time():
    np.testing.assert_allclose(rv_integral(1.0, 2), [[4, 6], [6, 12]])
    np.testing.assert_allclose(sigma_quadrature(1.0, 2), [[4, 6], [6, 12]], rtol=1e-12)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_rv_integral_rejects_nonpositive_time(t):
    with pytest.raises(ValueError):
        rv_integral(t, 3)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(1e-2, 10.0), m=st.sampled_from([1, 2, 3, 4]))
def test_rv_integral_matches_quadrature(t, m):
    np.testing.assert_allclose(rv_integral(t, m), sigma_quadrature(t, m), rtol=1e-10)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(1e-3, 10.0), m=st.sampled_from([2, 3, 4]))
def test_rv_integral_symmetric_positive_definite(t, m):
    R = rv_integral(t, m)
    np.testing.assert_array_equal(R, R.T)
    assert np.linalg.eigvalsh(R).min() > 0.0


# --- input_weight ----------------------------------------------------------


def test_input_weight_zero():
    np.testing.assert_array_equal(input_weight(1.0, 0.0, 0.0, 3, 2, True), np.zeros((7, 7)))


def test_input_weight_benchmark_eta():
    np.testing.assert_allclose(input_weight(1.0, 1e-5, 0.0, 3, 1, False), 1e-5 * rv_integral(1.0, 3))


def test_input_weight_kron_layout():
    R = input_weight(1.0, 1.0, 0.0, 2, 2, False)
    expected = np.array([[4, 0, 6, 0], [0, 4, 0, 6], [6, 0, 12, 0], [0, 6, 0, 12]], dtype=float)
    np.testing.assert_array_equal(R, expected)


def test_input_weight_joint_appends_time_weight():
    R = input_weight(1.5, 2.0, 7.0, 2, 3, True)
    assert R.shape == (7, 7)
    assert R[-1, -1] == 7.0
    np.testing.assert_array_equal(R[-1, :-1], 0.0)
    np.testing.assert_allclose(R[:-1, :-1], 2.0 * np.kron(rv_integral(1.5, 2), np.eye(3)))


# --- energy gram -----------------------------------------------------------


@pytest.mark.parametrize("n", [3, 5, 7])
@pytest.mark.parametrize("t", [0.4, 1.0, 2.2])
def test_energy_gram_matches_quadrature(n, t):
    m = (n + 1) // 2
    eta = np.linspace(0.5, 1.5, m)
    expected = sum(e * gram_quadrature(t, n, i + 1) for i, e in enumerate(eta))
    np.testing.assert_allclose(energy_gram(t, eta, n), expected, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_energy_gram_time_derivatives(order):
    n, eta = 5, [0.3, 0.0, 1.0]
    h = 1e-4
    t = 1.2
    if order == 1:
        fd = (energy_gram(t + h, eta, n) - energy_gram(t - h, eta, n)) / (2 * h)
    else:
        fd = (energy_gram(t + h, eta, n) - 2 * energy_gram(t, eta, n) + energy_gram(t - h, eta, n)) / h**2
    got = energy_gram(t, eta, n, order)
    assert rel_err(got, fd) < 1e-6


# --- stage cost ------------------------------------------------------------


def test_stage_cost_zero_at_goal():
    shape = SplineShape(5, 2, 1)
    W = StageWeights.uniform(shape, q=1.0, x_goal=np.ones((1, 6)), eta=1.0, w=0.0)
    ev = stage_cost(np.ones(6), np.append(np.zeros(6), 1.0), 0, W, shape, JOINT)
    assert ev.value == 0.0
    np.testing.assert_array_equal(ev.grad_x, 0.0)
    np.testing.assert_array_equal(ev.grad_u, 0.0)


def test_stage_cost_fixed_unit_error():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape, q=1.0, eta=0.0)
    e1 = np.array([1.0, 0.0])
    ev = stage_cost(e1, np.zeros(2), 0, W, shape, FIXED, duration=1.0)
    assert ev.value == 1.0
    np.testing.assert_array_equal(ev.grad_x, 2 * e1)
    np.testing.assert_array_equal(ev.hess_xx, 2 * np.eye(2))


def test_stage_cost_fixed_needs_duration():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape)
    with pytest.raises(ValueError):
        stage_cost(np.zeros(2), np.zeros(2), 0, W, shape, FIXED)


def test_stage_cost_dimension_mismatch():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape)
    with pytest.raises(ValueError):
        stage_cost(np.zeros(3), np.zeros(3), 0, W, shape, JOINT)


def test_stage_cost_time_term_is_quadratic():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape, eta=0.0, w=3.0)
    ev = stage_cost(np.zeros(2), [0.0, 0.0, 2.0], 0, W, shape, JOINT)
    assert ev.value == pytest.approx(12.0)
    assert ev.grad_u[-1] == pytest.approx(12.0)
    assert ev.hess_uu[-1, -1] == pytest.approx(6.0)


@pytest.mark.parametrize("mode", [JOINT, FIXED])
@pytest.mark.parametrize("n", [3, 5, 7])
def test_stage_cost_derivatives_finite_difference(mode, n):
    rng = np.random.default_rng(10 + n)
    shape = SplineShape(n, 2, 1)
    W = random_weights(shape, rng, eta_all=True)
    md = shape.state_dim
    for _ in range(8):
        x = rng.normal(size=md)
        v = rng.normal(size=md)
        t = rng.uniform(0.3, 2.0)
        if mode == JOINT:
            u = np.append(v, t)

            def f(xu):
                return stage_cost(xu[:md], xu[md:], 0, W, shape, JOINT).value

            def grad(xu):
                ev = stage_cost(xu[:md], xu[md:], 0, W, shape, JOINT)
                return np.concatenate([ev.grad_x, ev.grad_u])
        else:
            u = v

            def f(xu):
                return stage_cost(xu[:md], xu[md:], 0, W, shape, FIXED, duration=t).value

            def grad(xu):
                ev = stage_cost(xu[:md], xu[md:], 0, W, shape, FIXED, duration=t)
                return np.concatenate([ev.grad_x, ev.grad_u])

        xu = np.concatenate([x, u])
        ev = stage_cost(x, u, 0, W, shape, mode, None if mode == JOINT else t)
        H = np.block([[ev.hess_xx, ev.hess_ux.T], [ev.hess_ux, ev.hess_uu]])
        assert rel_err(grad(xu), central_diff(f, xu)[0]) < 1e-6
        assert rel_err(H, central_diff(grad, xu)) < 1e-6
        np.testing.assert_allclose(ev.hess_xx, ev.hess_xx.T, atol=1e-12)
        np.testing.assert_allclose(ev.hess_uu, ev.hess_uu.T, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_stage_cost_invariant_under_coefficient_round_trip(seed):
    rng = np.random.default_rng(seed)
    shape = SplineShape(5, 3, 1)
    W = random_weights(shape, rng)
    C = rng.normal(size=(6, 3))
    x, v = state_control_from(C, shape)
    a = stage_cost(x, np.append(v, 1.1), 0, W, shape, JOINT).value
    # the same segment expressed through coefficient integrals
    G = np.kron(energy_gram(1.1, W.eta[0], 5), np.eye(3))
    c = C.reshape(-1)
    e = x - W.x_goal[0]
    b = e @ W.Q[0] @ e + c @ G @ c + W.w[0] * 1.1**2
    assert a == pytest.approx(b, rel=1e-10)


# --- terminal cost ---------------------------------------------------------


def test_terminal_cost_at_goal():
    shape = SplineShape(5, 3, 2)
    g = np.arange(9.0)
    W = StageWeights.uniform(shape, q_N=100.0, x_goal_N=g)
    val, grad, hess = terminal_cost(g, W)
    assert val == 0.0
    np.testing.assert_array_equal(grad, 0.0)
    np.testing.assert_array_equal(hess, 200.0 * np.eye(9))


def test_terminal_cost_finite_difference():
    rng = np.random.default_rng(3)
    shape = SplineShape(5, 3, 2)
    W = random_weights(shape, rng)
    x = rng.normal(size=9)
    val, grad, hess = terminal_cost(x, W)
    assert rel_err(grad, central_diff(lambda z: terminal_cost(z, W)[0], x)[0]) < 1e-8
    assert rel_err(hess, central_diff(lambda z: terminal_cost(z, W)[1], x)) < 1e-8


# --- weights validation ----------------------------------------------------


def test_weights_reject_indefinite_q():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape)
    with pytest.raises(ValueError, match="positive semidefinite"):
        StageWeights(np.array([[[1.0, 0], [0, -1.0]]]), W.x_goal, W.eta, W.w, W.Q_N, W.x_goal_N)


def test_weights_reject_negative_eta():
    shape = SplineShape(3, 1, 1)
    W = StageWeights.uniform(shape)
    with pytest.raises(ValueError):
        StageWeights(W.Q, W.x_goal, -W.eta - 1, W.w, W.Q_N, W.x_goal_N)


# --- total cost ------------------------------------------------------------


def test_total_cost_zero_input_at_goal():
    shape = SplineShape(5, 3, 4)
    x0 = np.zeros(9)
    x0[:3] = [1.0, 2.0, 3.0]
    W = StageWeights.uniform(shape, q=1.0, x_goal=np.tile(x0, (4, 1)), w=0.0, x_goal_N=x0)
    total, parts = total_cost(x0, np.zeros((4, 9)), np.ones(4), W, shape)
    assert total == 0.0
    assert set(parts) == {"waypoint", "energy", "time", "terminal", "total"}


def test_total_cost_cubic_energy():
    shape = SplineShape(5, 1, 1)
    C = np.zeros((6, 1))
    C[3] = 1.0
    x, v = state_control_from(C, shape)
    W = StageWeights.uniform(shape, eta=1.0, q_N=0.0)
    total, parts = total_cost(x, v[None], [1.0], W, shape, FIXED)
    assert parts["energy"] == pytest.approx(36.0, rel=1e-14)
    assert total == pytest.approx(36.0, rel=1e-14)


def test_total_cost_time_only_counts_in_joint_mode():
    shape = SplineShape(3, 1, 2)
    W = StageWeights.uniform(shape, w=2.0)
    j, pj = total_cost(np.zeros(2), np.zeros((2, 2)), [1.0, 2.0], W, shape, JOINT)
    f, pf = total_cost(np.zeros(2), np.zeros((2, 2)), [1.0, 2.0], W, shape, FIXED)
    assert pj["time"] == pf["time"] == 10.0
    assert j == 10.0 and f == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_total_cost_matches_dense_objective(seed):
    rng = np.random.default_rng(seed)
    shape = SplineShape(5, 3, 3)
    W = random_weights(shape, rng, eta_all=True)
    times = rng.uniform(0.5, 2.0, 3)
    x0 = rng.normal(size=9)
    problem = Problem(shape, x0, W, times=times)
    V = rng.normal(size=(3, 9))
    traj, _ = rollout(x0, V, times, shape)
    qp = DenseQP(problem).build()
    dense = qp.objective(traj.coeffs.reshape(-1))
    total, _ = total_cost(x0, V, times, W, shape, FIXED)
    assert total == pytest.approx(dense, rel=1e-9)
