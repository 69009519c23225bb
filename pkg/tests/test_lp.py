import json
import math

import numpy as np
import pytest
import scipy.sparse as sp

from optgeo.errors import InputError, SolverError
from optgeo.geo import LocationSet, Metric
from optgeo.lp import (LpModel, LpSolution, backends, build_dual_spanner, build_primal_exact,
                       build_primal_spanner, check_strong_duality, solve)
from optgeo.lp.simplex import simplex_standard
from optgeo.spanner import complete_graph, constraint_count, get_spanner
from oracles import TWO_POINT_QL, pairwise, random_points, two_point_ql, vertex_enumeration

TWO = LocationSet.from_points([(0, 0), (1, 0)])
D2 = Metric.euclidean(TWO)


def instance(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(3, 9))
    locs = LocationSet.from_points(random_points(rng, n))
    pi = rng.dirichlet(np.ones(n))
    return locs, Metric.euclidean(locs), pi


# -- builders ---------------------------------------------------------------

def test_exact_model_shape_two_points():
    m = build_primal_exact(TWO, D2, 1.0, [0.5, 0.5], D2)
    assert (m.num_le, m.num_eq, m.num_vars) == (4, 2, 4)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_exact_model_row_count(n):
    locs = LocationSet.from_points([(i, i * i) for i in range(n)])
    m = build_primal_exact(locs, Metric.euclidean(locs), 0.7, np.full(n, 1 / n), Metric.euclidean(locs))
    assert m.num_le == n * n * (n - 1)


def test_exact_model_rows_are_the_privacy_constraints():
    m = build_primal_exact(TWO, D2, 2.0, [0.5, 0.5], D2)
    A = m.A_le.toarray()
    e2 = math.exp(2.0)
    expected = {(1, 0, -e2, 0), (0, 1, 0, -e2), (-e2, 0, 1, 0), (0, -e2, 0, 1)}
    got = {tuple(float(v) for v in row) for row in A}
    assert got == expected
    np.testing.assert_array_equal(m.A_eq.toarray(), [[1, 1, 0, 0], [0, 0, 1, 1]])
    np.testing.assert_array_equal(m.objective, [0, 0.5, 0.5, 0])


def test_invalid_prior_rejected():
    with pytest.raises(InputError):
        build_primal_exact(TWO, D2, 1.0, [0.6, 0.6], D2)
    with pytest.raises(InputError):
        build_primal_exact(TWO, D2, 1.0, [1.5, -0.5], D2)
    with pytest.raises(InputError):
        build_primal_exact(TWO, D2, 1.0, [1.0], D2)


def test_nonpositive_epsilon_rejected():
    with pytest.raises(InputError):
        build_primal_exact(TWO, D2, 0.0, [0.5, 0.5], D2)


def test_overflowing_exponent_rejected():
    with pytest.raises(InputError):
        build_primal_exact(TWO, D2, 800.0, [0.5, 0.5], D2)


def test_spanner_model_counts_match_constraint_count():
    locs = LocationSet.from_points([(0, 0), (1, 0), (2, 0)])
    s = get_spanner(locs, Metric.euclidean(locs), 1.0)
    m = build_primal_spanner(locs, s, 1.0, 1.0, np.full(3, 1 / 3), Metric.euclidean(locs))
    assert m.num_le == 12
    assert (m.num_le, m.num_eq, m.num_vars) == tuple(constraint_count(s))


def test_spanner_model_uses_reduced_level():
    s = get_spanner(TWO, D2, 1.0)
    m = build_primal_spanner(TWO, s, 2.0, 4.0, [0.5, 0.5], D2)
    assert -m.A_le.toarray().min() == pytest.approx(math.exp(0.5), rel=1e-15)


def test_spanner_model_rejects_other_locations():
    s = get_spanner(TWO, D2, 1.0)
    other = LocationSet.from_points([(0, 0), (2, 0)])
    with pytest.raises(InputError):
        build_primal_spanner(other, s, 1.0, 1.0, [0.5, 0.5], Metric.euclidean(other))


def test_dual_model_shape_two_points():
    s = get_spanner(TWO, D2, 1.0)
    m = build_dual_spanner(TWO, s, 1.0, 1.0, [0.5, 0.5], D2)
    assert m.num_le == 4
    assert m.num_vars == 4 + 2
    assert m.sense == "max"
    assert np.all(np.isneginf(m.lower[4:])) and np.all(m.lower[:4] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_uniform_mechanism_is_feasible_for_both_builders(seed):
    locs, d, pi = instance(seed)
    n = len(locs)
    u = np.full(n * n, 1 / n)
    for m in (build_primal_exact(locs, d, 1.3, pi, d),
              build_primal_spanner(locs, get_spanner(locs, d, 1.4), 1.3, 1.4, pi, d)):
        row, bound = m.violation(u)
        assert row <= 1e-12 and bound == 0


# -- solver -----------------------------------------------------------------

def test_minimize_x_at_least_three():
    m = LpModel(1, [1.0], [[-1.0]], [-3.0])
    sol = solve(m)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("route", ["primal", "dual", "auto"])
def test_two_point_closed_form(route):
    m = build_primal_exact(TWO, D2, 1.0, [0.5, 0.5], D2)
    sol = solve(m, route=route)
    assert sol.objective_value == pytest.approx(TWO_POINT_QL, abs=1e-12)
    np.testing.assert_allclose(sol.values, [math.e / (1 + math.e), 1 / (1 + math.e)] * 1
                               + [1 / (1 + math.e), math.e / (1 + math.e)], atol=1e-12)


@pytest.mark.parametrize("eps,d", [(0.5, 1.0), (1.0, 2.5), (3.0, 0.2)])
def test_two_point_closed_form_general(eps, d):
    locs = LocationSet.from_points([(0, 0), (0, d)])
    dm = Metric.euclidean(locs)
    sol = solve(build_primal_exact(locs, dm, eps, [0.5, 0.5], dm))
    assert sol.objective_value == pytest.approx(two_point_ql(eps, d), abs=1e-12)


def test_point_mass_prior_gives_zero():
    sol = solve(build_primal_exact(TWO, D2, 1.0, [1.0, 0.0], D2))
    assert sol.objective_value == pytest.approx(0.0, abs=1e-12)


def test_vanishing_epsilon_gives_best_constant_report():
    locs, d, pi = instance(11, 5)
    sol = solve(build_primal_exact(locs, d, 1e-6, pi, d))
    best_const = min(float(pi @ d.matrix[:, z]) for z in range(5))
    assert sol.objective_value == pytest.approx(best_const, abs=1e-4)
    assert sol.objective_value <= best_const + 1e-12


def random_small_lp(rng):
    """Feasible LP with at most 6 variables; box rows keep it bounded, and
    negative right-hand sides make x = 0 infeasible so phase 1 is exercised."""
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 4))
    x0 = rng.uniform(0, 1, n)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = A @ x0 + rng.uniform(0, 0.5, m)
    A = np.vstack([A, np.eye(n)])
    b = np.concatenate([b, np.full(n, 2.0)])
    A_eq = b_eq = None
    if rng.random() < 0.5:
        A_eq = rng.normal(size=(1, n))
        b_eq = A_eq @ x0
    return c, A, b, A_eq, b_eq


@pytest.mark.parametrize("seed", range(40))
def test_simplex_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    c, A, b, A_eq, b_eq = random_small_lp(rng)
    ref, _ = vertex_enumeration(c, A, b, A_eq, b_eq)
    model = LpModel(len(c), c, A, b, A_eq, b_eq)
    for route in ("primal", "dual"):
        sol = solve(model, route=route)
        if ref is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective_value == pytest.approx(ref, abs=1e-7)


def test_infeasible_detected():
    m = LpModel(2, [1, 1], [[1, 1]], [1], [[1, 1]], [3])
    for route in ("primal", "dual"):
        assert solve(m, route=route).status == "infeasible"


def test_unbounded_detected():
    m = LpModel(2, [-1, 0], [[1, -1]], [1])
    for route in ("primal", "dual"):
        assert solve(m, route=route).status == "unbounded"


def test_iteration_limit_status():
    locs, d, pi = instance(3, 6)
    sol = solve(build_primal_exact(locs, d, 1.0, pi, d), max_iter=2)
    assert sol.status == "iteration-limit"
    assert not sol.optimal
    with pytest.raises(SolverError):
        sol.require_optimal()


def test_bounds_free_upper_and_shifted():
    # max x + y, x in [-1, 2], y <= 3 free below, x + y <= 4, y >= x - 10
    m = LpModel(2, [1, 1], [[1, 1], [1, -1]], [4, 10], lower=[-1, -np.inf], upper=[2, 3],
                sense="max")
    sol = solve(m)
    assert sol.objective_value == pytest.approx(4.0, abs=1e-9)
    h = solve(m, backend="highs")
    assert h.objective_value == pytest.approx(4.0, abs=1e-9)
    # min y alone hits the free variable's floor through the second row
    m2 = LpModel(2, [0, 1], [[1, -1]], [10], lower=[-1, -np.inf], upper=[2, 3])
    assert solve(m2).objective_value == pytest.approx(-11.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_mechanism_programs_match_highs(seed):
    locs, d, pi = instance(seed, 4 + seed)
    eps = (0.5, 1.07, 4.0)[seed % 3]
    s = get_spanner(locs, d, 1.2)
    for model in (build_primal_exact(locs, d, eps, pi, d), build_primal_spanner(locs, s, eps, 1.2, pi, d),
                  build_dual_spanner(locs, s, eps, 1.2, pi, d)):
        ours = solve(model)
        ref = solve(model, backend="highs")
        assert ours.status == ref.status == "optimal"
        assert ours.objective_value == pytest.approx(ref.objective_value, abs=1e-8)
        row, bound = model.violation(ours.values)
        assert row <= 1e-7 and bound <= 1e-9


def test_solver_is_deterministic():
    locs, d, pi = instance(21, 7)
    m = build_primal_exact(locs, d, 1.07, pi, d)
    a, b = solve(m), solve(m)
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("seed", range(5))
def test_spanner_optimum_not_below_exact(seed):
    locs, d, pi = instance(40 + seed)
    exact = solve(build_primal_exact(locs, d, 1.07, pi, d)).objective_value
    for delta in (1.05, 1.5):
        s = get_spanner(locs, d, delta)
        red = solve(build_primal_spanner(locs, s, 1.07, delta, pi, d)).objective_value
        assert red >= exact - 1e-7


def test_complete_spanner_model_equals_exact():
    locs, d, pi = instance(8, 6)
    s = complete_graph(locs, d)
    a = solve(build_primal_exact(locs, d, 1.07, pi, d)).objective_value
    b = solve(build_primal_spanner(locs, s, 1.07, 1.0, pi, d)).objective_value
    assert a == pytest.approx(b, abs=1e-9)


def test_unknown_backend():
    with pytest.raises(SolverError):
        solve(LpModel(1, [1.0]), backend="nope")
    assert "highs" in backends() and "simplex" in backends()


def test_simplex_standard_duals():
    # min x1 + 2 x2, x1 + x2 = 1 -> y = 1
    res = simplex_standard(sp.csc_matrix([[1.0, 1.0]]), [1.0], [1.0, 2.0])
    assert res.status == "optimal"
    assert res.y.tolist() == pytest.approx([1.0])
    assert res.x.tolist() == pytest.approx([1.0, 0.0])


# -- duality ----------------------------------------------------------------

def test_two_point_dual_value():
    s = get_spanner(TWO, D2, 1.0)
    p = solve(build_primal_spanner(TWO, s, 1.0, 1.0, [0.5, 0.5], D2))
    q = solve(build_dual_spanner(TWO, s, 1.0, 1.0, [0.5, 0.5], D2))
    assert q.objective_value == pytest.approx(two_point_ql(1.0, 1.0), abs=1e-12)
    assert check_strong_duality(p, q, 1e-6)


def test_duality_mismatch_is_false():
    s = get_spanner(TWO, D2, 1.0)
    p = solve(build_primal_spanner(TWO, s, 1.0, 1.0, [0.5, 0.5], D2))
    q = solve(build_dual_spanner(TWO, s, 2.0, 1.0, [0.5, 0.5], D2))
    assert not check_strong_duality(p, q, 1e-6)


def test_duality_requires_optimal():
    bad = LpSolution("infeasible", float("nan"), np.zeros(1))
    ok = LpSolution("optimal", 1.0, np.zeros(1))
    with pytest.raises(SolverError):
        check_strong_duality(bad, ok)


# -- serialization ----------------------------------------------------------

def test_model_json_roundtrip():
    locs, d, pi = instance(2, 4)
    s = get_spanner(locs, d, 1.1)
    for m in (build_primal_exact(locs, d, 1.0, pi, d), build_dual_spanner(locs, s, 1.0, 1.1, pi, d)):
        data = json.loads(m.dumps())
        assert set(data) >= {"num_vars", "objective", "le_rows", "eq_rows", "lower_bounds"}
        back = LpModel.from_json(data)
        assert back.sense == m.sense
        assert (back.A_le != m.A_le).nnz == 0 and (back.A_eq != m.A_eq).nnz == 0
        np.testing.assert_array_equal(back.objective, m.objective)
        np.testing.assert_array_equal(back.lower, m.lower)
        assert solve(back).objective_value == pytest.approx(solve(m).objective_value, abs=1e-12)


def test_model_json_defaults_and_validation():
    m = LpModel.from_json({"num_vars": 2, "objective": [[0, 1.0]],
                           "le_rows": [{"coefs": [[1, 1.0]], "rhs": 3}], "eq_rows": []})
    assert m.lower.tolist() == [0.0, 0.0]
    with pytest.raises(InputError):
        LpModel.from_json({"num_vars": 1, "le_rows": [{"coefs": [[3, 1.0]], "rhs": 0}]})
    with pytest.raises(InputError):
        LpModel(1, [float("nan")])
