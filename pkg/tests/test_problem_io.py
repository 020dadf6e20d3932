from __future__ import annotations

import json
from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import box_instance, unconstrained_instance
from oracles import trapezoid_time
from polyddp.constraints import Polyhedron
from polyddp.polyspline import PiecewiseTrajectory, SplineShape
from polyddp.problem_io import (
    KEY_ORDER,
    CorridorGeometry,
    InstanceError,
    dumps,
    generate_random_corridor,
    generate_waypoint_instance,
    initial_time_allocation,
    load_instance,
    load_solution,
    problem_to_dict,
    save_instance,
    save_solution,
)


def corridor_doc(seed=0, N=4):
    p, _ = generate_random_corridor(seed, N)
    return json.loads(dumps(problem_to_dict(p)))


def write(tmp_path, doc, name="inst.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# --- round trip ------------------------------------------------------------


@pytest.mark.parametrize("make", [lambda: generate_random_corridor(3, 6)[0], lambda: box_instance(2),
                                  lambda: unconstrained_instance(4), lambda: generate_waypoint_instance(1, 5)[0]])
def test_save_load_save_is_byte_identical(tmp_path, make):
    p = make()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_instance(p, a)
    q = load_instance(a)
    save_instance(q, b)
    assert a.read_bytes() == b.read_bytes()
    # every field survives exactly
    np.testing.assert_array_equal(q.x0, p.x0)
    np.testing.assert_array_equal(q.weights.x_goal, p.weights.x_goal)
    np.testing.assert_array_equal(q.weights.eta, p.weights.eta)
    assert (q.times is None) == (p.times is None)
    if p.times is not None:
        np.testing.assert_array_equal(q.times, p.times)
    if p.corridor is not None:
        for P, Q in zip(p.corridor, q.corridor):
            np.testing.assert_array_equal(P.W, Q.W)
            np.testing.assert_array_equal(P.h, Q.h)
    assert q.bounds == p.bounds
    assert q.t_min == p.t_min


def test_canonical_key_order(tmp_path):
    path = tmp_path / "i.json"
    save_instance(generate_random_corridor(0, 2)[0], path)
    assert list(json.loads(path.read_text())) == list(KEY_ORDER)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert json.loads(dumps({"v": [x]}))["v"][0] == x


def test_benchmark_bounds_encoded(tmp_path):
    p, _ = generate_random_corridor(0, 3)
    doc = problem_to_dict(p)
    assert doc["bounds"] == {"1": [-2.0, 2.0], "2": [-2.0, 2.0]}


# --- validation ------------------------------------------------------------


def test_corridor_length_mismatch_names_field(tmp_path):
    doc = corridor_doc()
    doc["corridor"] = doc["corridor"][:-1]
    with pytest.raises(InstanceError) as err:
        load_instance(write(tmp_path, doc))
    assert err.value.path == "corridor"


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.pop("x0"), "x0"),
        (lambda d: d.update(x0=[0.0]), "x0"),
        (lambda d: d["goals"].update(Q_diag=[[1.0]]), "goals.Q_diag"),
        (lambda d: d["weights"]["eta"][0].__setitem__(0, -1.0), "weights.eta"),
        (lambda d: d["corridor"][1].update(h=[1.0]), "corridor[1].h"),
        (lambda d: d["corridor"][0].update(W=[[1.0, 0.0]]), "corridor[0].W"),
        (lambda d: d.update(bounds={"1": [1.0, 2.0]}), "bounds"),
        (lambda d: d.update(bounds={"5": [-1.0, 1.0]}), "bounds.5"),
        (lambda d: d.update(t_min=0.0), "t_min"),
        (lambda d: d["times"].__setitem__(0, -1.0), "times"),
        (lambda d: d.update(basis="chebyshev"), "basis"),
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d["shape"].pop("n"), "shape.n"),
    ],
)
def test_invalid_fields_are_reported_by_path(tmp_path, mutate, path):
    doc = corridor_doc()
    mutate(doc)
    with pytest.raises(InstanceError) as err:
        load_instance(write(tmp_path, doc))
    assert err.value.path == path


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "shape": {\n  oops\n}')
    with pytest.raises(InstanceError, match="line 3"):
        load_instance(path)


# --- time allocation -------------------------------------------------------


def test_trapezoid_cruise_segment():
    assert initial_time_allocation([[0.0], [4.0]], 2.0, 2.0)[0] == pytest.approx(3.0)


def test_triangular_segment():
    assert initial_time_allocation([[0.0], [1.0]], 2.0, 2.0)[0] == pytest.approx(sqrt(2.0))


def test_zero_length_gives_t_min():
    t = initial_time_allocation([[1.0, 1.0], [1.0, 1.0]], 2.0, 2.0, t_min=0.25)
    assert t[0] == 0.25


def test_allocation_rejects_bad_limits():
    with pytest.raises(ValueError):
        initial_time_allocation([[0.0], [1.0]], 0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(L=st.floats(1e-3, 50.0), v=st.floats(0.1, 5.0), a=st.floats(0.1, 5.0))
def test_allocation_matches_kinematics_oracle(L, v, a):
    t = initial_time_allocation([[0.0], [L]], v, a, t_min=1e-9)[0]
    assert t == pytest.approx(trapezoid_time(L, v, a), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(L1=st.floats(0.0, 20.0), L2=st.floats(0.0, 20.0), v=st.floats(0.1, 5.0), a=st.floats(0.1, 5.0))
def test_allocation_monotone_in_length(L1, L2, v, a):
    lo, hi = sorted([L1, L2])
    t = initial_time_allocation([[0.0], [lo], [0.0], [hi]], v, a)
    # segments 0 and 2 have lengths lo and hi
    assert t[0] <= t[2] + 1e-12


# --- generators ------------------------------------------------------------


def test_generator_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_instance(generate_random_corridor(7, 12)[0], a)
    save_instance(generate_random_corridor(7, 12)[0], b)
    assert a.read_bytes() == b.read_bytes()
    save_instance(generate_random_corridor(8, 12)[0], b)
    assert a.read_bytes() != b.read_bytes()


@pytest.mark.parametrize("seed", range(10))
def test_waypoints_strictly_inside_adjacent_polyhedra(seed):
    p, pts = generate_random_corridor(seed, 20)
    for k in range(p.N + 1):
        for j in (k - 1, k):
            if 0 <= j < p.N:
                assert p.corridor[j].margin(pts[k]).max() <= -1e-6


@pytest.mark.parametrize("seed", range(5))
def test_consecutive_polyhedra_overlap(seed):
    p, _ = generate_random_corridor(seed, 10)
    for P, Q in zip(p.corridor, p.corridor[1:]):
        inter = Polyhedron(np.vstack([P.W, Q.W]), np.concatenate([P.h, Q.h]))
        assert inter.chebyshev_center()[1] > 0


def test_facet_counts_within_range():
    counts = [P.num_faces for s in range(5) for P in generate_random_corridor(s, 30)[0].corridor]
    assert min(counts) >= 6 and max(counts) <= 117
    geom = CorridorGeometry()
    assert geom.facet_range == (6, 117)


def test_corridor_instance_settings():
    p, pts = generate_random_corridor(0, 4)
    assert p.bounds.limits == {1: (-2.0, 2.0), 2: (-2.0, 2.0)}
    np.testing.assert_array_equal(p.weights.Q, 0.0)
    np.testing.assert_array_equal(p.weights.Q_N, 100.0 * np.eye(9))
    np.testing.assert_array_equal(p.times, initial_time_allocation(pts, 2.0, 2.0))


@pytest.mark.parametrize(
    "geom", [CorridorGeometry(clearance=1.0, box_margin=0.5), CorridorGeometry(seg_len=(2.0, 1.0)),
             CorridorGeometry(facet_range=(4, 10))]
)
def test_impossible_geometry_rejected(geom):
    with pytest.raises(ValueError):
        generate_random_corridor(0, 3, geometry=geom)


def test_generator_rejects_empty_instance():
    with pytest.raises(ValueError):
        generate_random_corridor(0, 0)


# --- solutions -------------------------------------------------------------


def test_solution_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    traj = PiecewiseTrajectory(SplineShape(5, 3, 4), rng.normal(size=(4, 6, 3)), rng.uniform(0.5, 2, 4))
    path = tmp_path / "sol.json"
    save_solution(traj, path, "Converged", {"total": 1.5})
    back = load_solution(path)
    np.testing.assert_array_equal(back.coeffs, traj.coeffs)
    np.testing.assert_array_equal(back.durations, traj.durations)


def test_solution_with_bad_coefficients_rejected(tmp_path):
    path = tmp_path / "sol.json"
    path.write_text(json.dumps({"shape": {"n": 5, "d": 1, "N": 1}, "durations": [1.0], "coefficients": [[1.0]]}))
    with pytest.raises(InstanceError) as err:
        load_solution(path)
    assert err.value.path == "coefficients"
