"""Pure-Python kernels. Same contracts and results as ``optgeo._speedups``."""
from __future__ import annotations

import heapq
import math

import numpy as np

BACKEND = "python"


def sorted_pairs(dist):
    """Unordered pairs (i < j) sorted by distance, ties by (i, j)."""
    n = len(dist)
    ii, jj = np.triu_indices(n, 1)
    order = np.lexsort((jj, ii, dist[ii, jj]))
    return ii[order].astype(np.int64), jj[order].astype(np.int64)


def _bounded_dijkstra(adj, source, target, limit):
    """Shortest distance source->target if it is <= limit, else inf."""
    best = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        du, u = heapq.heappop(heap)
        if du > limit:
            return math.inf
        if u == target:
            return du
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u]:
            nd = du + w
            if nd < best.get(v, math.inf):
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    return math.inf


def greedy_spanner(dist, delta, rtol=1e-12):
    """Greedy delta-spanner over a dense metric matrix; returns edge list [(i, j)]."""
    dist = np.asarray(dist, dtype=float)
    n = len(dist)
    adj = [[] for _ in range(n)]
    edges = []
    ii, jj = sorted_pairs(dist)
    for i, j in zip(ii.tolist(), jj.tolist()):
        d = float(dist[i, j])
        limit = delta * d * (1.0 + rtol)
        if _bounded_dijkstra(adj, i, j, limit) > limit:
            adj[i].append((j, d))
            adj[j].append((i, d))
            edges.append((i, j))
    return edges


def dijkstra_apsp(n, edges, weights):
    """All-pairs shortest paths by one heap Dijkstra per source; inf when disconnected."""
    adj = [[] for _ in range(n)]
    for (i, j), w in zip(edges, weights):
        adj[i].append((j, float(w)))
        adj[j].append((i, float(w)))
    out = np.full((n, n), math.inf)
    for s in range(n):
        row = out[s]
        row[s] = 0.0
        heap = [(0.0, s)]
        done = [False] * n
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for v, w in adj[u]:
                nd = du + w
                if nd < row[v]:
                    row[v] = nd
                    heapq.heappush(heap, (nd, v))
    return out


def snap_nearest(points, locs):
    """Index of the nearest location for every point, ties to the lowest index."""
    points = np.asarray(points, dtype=float)
    locs = np.asarray(locs, dtype=float)
    out = np.empty(len(points), dtype=np.int64)
    chunk = 65536
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        dx = p[:, 0, None] - locs[None, :, 0]
        dy = p[:, 1, None] - locs[None, :, 1]
        out[start:start + chunk] = np.argmin(dx * dx + dy * dy, axis=1)
    return out
