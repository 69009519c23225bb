"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 25 50 100] [--repeat 3]

Each kernel is run on the same inputs with both backends; outputs are
checked for agreement before timings are reported.
"""
import argparse
import sys
import time

import numpy as np

from optgeo.geo import GridSpec, build_grid, euclidean_matrix
from optgeo.kernels import available_backends


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, seed):
    cols = int(np.ceil(np.sqrt(2 * n)))
    locs = build_grid(GridSpec((0.0, 0.0), 0.658, 0.712, cols, int(np.ceil(n / cols))))
    coords = np.ascontiguousarray(locs.coords[:n])
    dist = euclidean_matrix(coords)
    rng = np.random.default_rng(seed)
    points = np.ascontiguousarray(coords[rng.integers(n, size=20_000)] + rng.normal(0, 0.5, (20_000, 2)))
    return coords, dist, points


def run(sizes, repeat, delta):
    impls = available_backends()
    if "cython" not in impls:
        print("compiled extension not built; only the Python fallback is available", file=sys.stderr)
    print(f"{'kernel':<16}{'n':>6}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for n in sizes:
        coords, dist, points = cases(n, n)
        edges = {}
        jobs = {
            "greedy_spanner": lambda m: m.greedy_spanner(dist, delta, 1e-12),
            "dijkstra_apsp": None,
            "snap_nearest": lambda m: m.snap_nearest(points, coords),
        }
        for kernel in jobs:
            times, outs = {}, {}
            for name, mod in impls.items():
                if kernel == "dijkstra_apsp":
                    e = edges[name]
                    w = [float(dist[i, j]) for i, j in e]
                    fn = lambda m=mod, e=e, w=w: m.dijkstra_apsp(n, list(e), w)
                else:
                    fn = lambda m=mod, k=kernel: jobs[k](m)
                times[name], outs[name] = best_of(fn, repeat)
                if kernel == "greedy_spanner":
                    edges[name] = [tuple(map(int, p)) for p in outs[name]]
            ref = outs["python"]
            for name, out in outs.items():
                if kernel == "greedy_spanner":
                    same = edges[name] == edges["python"]
                else:
                    same = np.allclose(np.asarray(out), np.asarray(ref), rtol=1e-12)
                if not same:
                    raise SystemExit(f"{kernel}: backend {name} disagrees with python at n={n}")
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{kernel:<16}{n:>6}" + "".join(f"{times[k] * 1e3:>10.2f}ms" for k in impls)
                  + f"{speed:>9.1f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[25, 50, 100])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--delta", type=float, default=1.05)
    args = ap.parse_args(argv)
    run(args.sizes, args.repeat, args.delta)


if __name__ == "__main__":
    main()
