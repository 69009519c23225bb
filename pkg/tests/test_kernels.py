"""Compiled and pure-Python kernels agree with each other and with scipy."""
import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from optgeo import kernels
from oracles import greedy_spanner_reference, pairwise, random_points

BACKENDS = kernels.available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_dispatch_picks_a_backend():
    assert kernels.BACKEND in BACKENDS


def test_compiled_backend_is_built():
    # the package is expected to ship with its extension; the fallback is
    # exercised separately through the parametrized tests
    assert "cython" in BACKENDS


@pytest.mark.parametrize("seed", range(8))
def test_greedy_spanner_matches_reference(impl, seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, int(rng.integers(2, 14)))
    delta = float(rng.choice([1.0, 1.05, 1.3, 2.0]))
    got = impl.greedy_spanner(pairwise(pts), delta, 1e-12)
    assert [tuple(map(int, e)) for e in got] == greedy_spanner_reference(pts, delta)


@pytest.mark.parametrize("seed", range(6))
def test_apsp_matches_scipy(impl, seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 30))
    m = int(rng.integers(0, n * 2 + 1))
    edges = [tuple(sorted(rng.choice(n, 2, replace=False))) for _ in range(m)] if n > 1 else []
    weights = rng.uniform(0.1, 5.0, len(edges)).tolist()
    got = impl.dijkstra_apsp(n, edges, weights)
    g = np.zeros((n, n))
    for (i, j), w in zip(edges, weights):
        # keep the lightest of parallel edges, as shortest paths would
        if g[i, j] == 0 or w < g[i, j]:
            g[i, j] = g[j, i] = w
    ref = shortest_path(csr_matrix(g), directed=False)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)


def test_apsp_single_node(impl):
    assert impl.dijkstra_apsp(1, [], []).tolist() == [[0.0]]


def test_apsp_path(impl):
    d = impl.dijkstra_apsp(3, [(0, 1), (1, 2)], [1.0, 1.0])
    assert d[0, 2] == 2.0
    assert d[2, 0] == 2.0


def test_apsp_disconnected_is_infinite(impl):
    d = impl.dijkstra_apsp(3, [(0, 1)], [1.0])
    assert np.isinf(d[0, 2]) and np.isinf(d[2, 1])


@pytest.mark.parametrize("seed", range(4))
def test_snap_nearest_matches_bruteforce(impl, seed):
    rng = np.random.default_rng(200 + seed)
    locs = rng.uniform(0, 5, (int(rng.integers(1, 20)), 2))
    pts = rng.uniform(-1, 6, (500, 2))
    d2 = ((pts[:, None, :] - locs[None, :, :]) ** 2).sum(-1)
    np.testing.assert_array_equal(impl.snap_nearest(pts, locs), np.argmin(d2, axis=1))


def test_snap_nearest_ties_to_lowest_index(impl):
    locs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    pts = np.array([[0.0, 0.0], [0.0, -5.0]])
    assert impl.snap_nearest(pts, locs).tolist() == [0, 0]


def test_backends_agree_bitwise():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(7)
    pts = random_points(rng, 40, side=10)
    d = pairwise(pts)
    a, b = BACKENDS["python"], BACKENDS["cython"]
    assert [tuple(map(int, e)) for e in a.greedy_spanner(d, 1.1)] == \
        [tuple(map(int, e)) for e in b.greedy_spanner(d, 1.1)]
    edges = a.greedy_spanner(d, 1.1)
    w = [d[i, j] for i, j in edges]
    np.testing.assert_array_equal(a.dijkstra_apsp(40, edges, w), b.dijkstra_apsp(40, edges, w))


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    bench["main"](["--sizes", "12", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "greedy_spanner" in out and "snap_nearest" in out
