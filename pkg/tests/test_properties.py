import json

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from optgeo.evaluation import (adv_error, compose, expected_distance, optimal_remap, quality_loss,
                               verify_dx_privacy)
from optgeo.geo import GridSpec, LocationSet, Metric, check_metric
from optgeo.ingest import CountTable, DEFAULT_PERIODS, TracePoint, count_points
from optgeo.mech import Mechanism, build_exponential, build_optql_exact
from optgeo.spanner import get_spanner, measured_dilation
from oracles import floyd_warshall

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

@st.composite
def point_sets(draw, min_size=2, max_size=9):
    n = draw(st.integers(min_size, max_size))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    scale = draw(st.sampled_from([0.1, 1.0, 10.0]))
    while True:
        pts = rng.uniform(0, scale, size=(n, 2))
        diff = pts[:, None] - pts[None]
        d = np.sqrt((diff ** 2).sum(-1))
        if n < 2 or d[~np.eye(n, dtype=bool)].min() > 1e-3 * scale:
            return LocationSet.from_points([tuple(p) for p in pts])


@st.composite
def stochastic(draw, n, zeros=True):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = rng.dirichlet(np.ones(n) * draw(st.sampled_from([0.3, 1.0, 3.0])), size=n)
    if zeros and draw(st.booleans()):
        k[:, rng.integers(n)] = 0.0
        k /= k.sum(axis=1, keepdims=True)
    return k


@st.composite
def instance(draw, max_size=9):
    locs = draw(point_sets(max_size=max_size))
    n = len(locs)
    pi = np.random.default_rng(draw(st.integers(0, 2**32 - 1))).dirichlet(np.ones(n))
    return locs, Metric.euclidean(locs), draw(stochastic(n)), pi


@SETTINGS
@given(point_sets())
def test_euclidean_is_a_metric(locs):
    d = Metric.euclidean(locs).matrix
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    check_metric(d)


@SETTINGS
@given(point_sets(max_size=12), st.floats(1.0, 3.0))
def test_spanner_dilation_bound(locs, delta):
    d = Metric.euclidean(locs)
    s = get_spanner(locs, d, delta)
    assert s.is_connected()
    dil = measured_dilation(s, d)
    assert 1.0 - 1e-12 <= dil <= delta * (1 + 1e-9)
    # graph distances dominate the metric and match an independent shortest-path oracle
    assert np.all(s.apsp >= d.matrix * (1 - 1e-12))
    np.testing.assert_allclose(s.apsp, floyd_warshall(len(locs), s.edges, s.weights), rtol=1e-12)
    assert len(s.edges) >= len(locs) - 1


@SETTINGS
@given(point_sets(max_size=10), st.floats(1.0, 2.5), st.data())
def test_edge_privacy_extends_to_all_pairs(locs, delta, data):
    # privacy level measured on spanner edges bounds the level on every pair
    # w.r.t. graph distance, and delta times it w.r.t. the metric
    n = len(locs)
    d = Metric.euclidean(locs)
    s = get_spanner(locs, d, delta)
    k = data.draw(stochastic(n, zeros=False))
    eps_edge = max(np.max(np.abs(np.log(k[i]) - np.log(k[j]))) / w for (i, j), w in zip(s.edges, s.weights))
    graph = verify_dx_privacy(k, s.apsp).effective_epsilon
    full = verify_dx_privacy(k, d).effective_epsilon
    assert graph <= eps_edge * (1 + 1e-9)
    assert full <= delta * eps_edge * (1 + 1e-9)


@SETTINGS
@given(instance())
def test_adv_error_never_exceeds_quality_loss(inst):
    locs, d, k, pi = inst
    assert adv_error(k, pi, d) <= quality_loss(k, pi, d) + 1e-12
    assert adv_error(k, pi, d) >= 0.0


@SETTINGS
@given(instance(), st.data())
def test_compose_keeps_rows_stochastic(inst, data):
    locs, d, k, pi = inst
    n = len(locs)
    h = data.draw(stochastic(n))
    m = compose(Mechanism(locs, k), h)
    np.testing.assert_allclose(m.matrix.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(m.matrix >= 0)
    # remapping after the optimal guess can only help the adversary
    r = optimal_remap(k, pi, d)
    assert expected_distance(compose(Mechanism(locs, k), r.matrix), pi, d) <= \
        expected_distance(m, pi, d) + 1e-12


@SETTINGS
@given(instance())
def test_post_processing_preserves_privacy(inst):
    locs, d, _, pi = inst
    eps = 1.0
    m = build_exponential(locs, d, eps)
    remapped = compose(m, optimal_remap(m, pi, d).matrix)
    assert verify_dx_privacy(m, d.scaled(eps)).satisfied
    assert verify_dx_privacy(remapped, d.scaled(eps)).satisfied


@settings(max_examples=15, deadline=None)
@given(instance(max_size=6), st.sampled_from([0.5, 1.07, 4.0]))
def test_optimal_mechanism_properties(inst, eps):
    locs, d, _, pi = inst
    m = build_optql_exact(locs, d, eps, pi, d)
    assert verify_dx_privacy(m, d.scaled(eps)).satisfied
    np.testing.assert_allclose(m.matrix.sum(axis=1), 1.0, atol=1e-12)
    assert abs(adv_error(m, pi, d) - quality_loss(m, pi, d)) <= 1e-7
    # no worse than the exponential baseline at the same level
    assert quality_loss(m, pi, d) <= quality_loss(build_exponential(locs, d, eps), pi, d) + 1e-9
    again = build_optql_exact(locs, d, eps, pi, d)
    assert np.array_equal(m.matrix, again.matrix)


@SETTINGS
@given(instance())
def test_mechanism_json_round_trip(inst):
    locs, _, k, _ = inst
    m = Mechanism(locs, k)
    back = Mechanism.from_json(json.loads(m.dumps()))
    # probabilities are written with 12 significant digits
    np.testing.assert_allclose(back.matrix, m.matrix, rtol=1e-11, atol=1e-300)
    np.testing.assert_allclose(back.matrix.sum(axis=1), 1.0, atol=1e-11)


GRID = GridSpec(origin=(0.0, 0.0), cell_width=1.0, cell_height=1.0, columns=3, rows=2)
DEG = 1.0 / 111.19492664455873


trace_points = st.lists(
    st.builds(lambda u, ts, x, y: TracePoint(u, float(ts), y * DEG, x * DEG),
              st.sampled_from(["a", "b", "c"]), st.integers(0, 5 * 86400),
              st.floats(-0.5, 3.5), st.floats(-0.5, 2.5)),
    max_size=60)


@SETTINGS
@given(trace_points, st.integers(0, 3))
def test_duplicate_points_do_not_change_counts(points, offset):
    base = count_points(points, GRID, (0.0, 0.0), DEFAULT_PERIODS, offset)
    doubled = count_points(points + points[::-1], GRID, (0.0, 0.0), DEFAULT_PERIODS, offset)
    assert base.users == doubled.users
    for u in base.users:
        assert np.array_equal(base.counts[u], doubled.counts[u])
    assert CountTable.from_json(json.loads(json.dumps(base.to_json()))) == base


@SETTINGS
@given(trace_points)
def test_period_counts_are_bounded_by_all_day(points):
    table = count_points(points, GRID, (0.0, 0.0))
    for u in table.users:
        total = table.vector(u, "all_day")
        parts = sum(table.vector(u, p) for p in ("morning", "afternoon", "night"))
        assert np.all(parts <= total)
        for p in ("morning", "afternoon", "night"):
            assert np.all(table.vector(u, p) <= total)
