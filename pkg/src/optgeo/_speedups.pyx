# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: greedy spanner, heap Dijkstra APSP, nearest-location snap."""
import numpy as np

from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

BACKEND = "cython"


cdef struct Heap:
    double *key
    long *node
    long size


cdef inline void heap_push(Heap *h, double k, long v) nogil:
    cdef long i = h.size
    cdef long parent
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        # (key, node) lexicographic, like heapq on tuples
        if h.key[parent] < k or (h.key[parent] == k and h.node[parent] <= v):
            break
        h.key[i] = h.key[parent]
        h.node[i] = h.node[parent]
        i = parent
    h.key[i] = k
    h.node[i] = v


cdef inline void heap_pop(Heap *h, double *k, long *v) nogil:
    cdef long i = 0
    cdef long child
    cdef double lk
    cdef long lv
    k[0] = h.key[0]
    v[0] = h.node[0]
    h.size -= 1
    if h.size == 0:
        return
    lk = h.key[h.size]
    lv = h.node[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and (h.key[child + 1] < h.key[child] or
                                   (h.key[child + 1] == h.key[child] and h.node[child + 1] < h.node[child])):
            child += 1
        if lk < h.key[child] or (lk == h.key[child] and lv <= h.node[child]):
            break
        h.key[i] = h.key[child]
        h.node[i] = h.node[child]
        i = child
    h.key[i] = lk
    h.node[i] = lv


cdef double bounded_dijkstra(long n, long[:, ::1] nbr, double[:, ::1] wt, long[::1] deg,
                             long source, long target, double limit,
                             double *best, char *done, Heap *h) nogil:
    cdef long k, u, v
    cdef double du, nd
    for k in range(n):
        best[k] = INFINITY
        done[k] = 0
    h.size = 0
    best[source] = 0.0
    heap_push(h, 0.0, source)
    while h.size > 0:
        heap_pop(h, &du, &u)
        if du > limit:
            return INFINITY
        if u == target:
            return du
        if done[u]:
            continue
        done[u] = 1
        for k in range(deg[u]):
            v = nbr[u, k]
            nd = du + wt[u, k]
            if nd < best[v]:
                best[v] = nd
                heap_push(h, nd, v)
    return INFINITY


def sorted_pairs(const double[:, ::1] dist):
    d = np.asarray(dist)
    n = d.shape[0]
    ii, jj = np.triu_indices(n, 1)
    order = np.lexsort((jj, ii, d[ii, jj]))
    return ii[order].astype(np.int64), jj[order].astype(np.int64)


def greedy_spanner(dist, double delta, double rtol=1e-12):
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=np.float64)
    cdef long n = D.shape[0]
    ii_arr, jj_arr = sorted_pairs(D)
    cdef long[::1] ii = ii_arr
    cdef long[::1] jj = jj_arr
    cdef long[:, ::1] nbr = np.zeros((n, max(n, 1)), dtype=np.int64)
    cdef double[:, ::1] wt = np.zeros((n, max(n, 1)), dtype=np.float64)
    cdef long[::1] deg = np.zeros(n, dtype=np.int64)
    cdef long npairs = ii.shape[0]
    cdef long p, i, j
    cdef double d, limit
    cdef Heap h
    cdef double *best = <double *> malloc(max(n, 1) * sizeof(double))
    cdef char *done = <char *> malloc(max(n, 1) * sizeof(char))
    # lazy-deletion heap holds at most one entry per relaxation: <= 2|E| + 1 <= n*n + 1
    cdef long cap = n * n + 2
    h.key = <double *> malloc(cap * sizeof(double))
    h.node = <long *> malloc(cap * sizeof(long))
    h.size = 0
    edges = []
    try:
        for p in range(npairs):
            i = ii[p]
            j = jj[p]
            d = D[i, j]
            limit = delta * d * (1.0 + rtol)
            if bounded_dijkstra(n, nbr, wt, deg, i, j, limit, best, done, &h) > limit:
                nbr[i, deg[i]] = j
                wt[i, deg[i]] = d
                deg[i] += 1
                nbr[j, deg[j]] = i
                wt[j, deg[j]] = d
                deg[j] += 1
                edges.append((i, j))
    finally:
        free(best)
        free(done)
        free(h.key)
        free(h.node)
    return edges


def dijkstra_apsp(long n, edges, weights):
    cdef long[::1] deg = np.zeros(n, dtype=np.int64)
    cdef long i, j, k, s, u, v
    cdef double du, nd, w
    edge_list = list(edges)
    weight_list = [float(x) for x in weights]
    for (i, j) in edge_list:
        deg[i] += 1
        deg[j] += 1
    cdef long maxdeg = max(1, max(deg) if n else 1)
    cdef long[:, ::1] nbr = np.zeros((n, maxdeg), dtype=np.int64)
    cdef double[:, ::1] wt = np.zeros((n, maxdeg), dtype=np.float64)
    cdef long[::1] fill = np.zeros(n, dtype=np.int64)
    for k in range(len(edge_list)):
        i, j = edge_list[k]
        w = weight_list[k]
        nbr[i, fill[i]] = j
        wt[i, fill[i]] = w
        fill[i] += 1
        nbr[j, fill[j]] = i
        wt[j, fill[j]] = w
        fill[j] += 1
    out_arr = np.full((n, n), np.inf)
    cdef double[:, ::1] out = out_arr
    cdef char *done = <char *> malloc(max(n, 1) * sizeof(char))
    cdef long cap = 2 * len(edge_list) + 2
    cdef Heap h
    h.key = <double *> malloc(cap * sizeof(double))
    h.node = <long *> malloc(cap * sizeof(long))
    try:
        with nogil:
            for s in range(n):
                for k in range(n):
                    done[k] = 0
                out[s, s] = 0.0
                h.size = 0
                heap_push(&h, 0.0, s)
                while h.size > 0:
                    heap_pop(&h, &du, &u)
                    if done[u]:
                        continue
                    done[u] = 1
                    for k in range(fill[u]):
                        v = nbr[u, k]
                        nd = du + wt[u, k]
                        if nd < out[s, v]:
                            out[s, v] = nd
                            heap_push(&h, nd, v)
    finally:
        free(done)
        free(h.key)
        free(h.node)
    return out_arr


def snap_nearest(points, locs):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(locs, dtype=np.float64)
    cdef long m = P.shape[0]
    cdef long n = L.shape[0]
    out_arr = np.empty(m, dtype=np.int64)
    cdef long[::1] out = out_arr
    cdef long a, b, arg
    cdef double dx, dy, dd, bestd
    with nogil:
        for a in range(m):
            arg = 0
            bestd = INFINITY
            for b in range(n):
                dx = P[a, 0] - L[b, 0]
                dy = P[a, 1] - L[b, 1]
                dd = dx * dx + dy * dy
                if dd < bestd:
                    bestd = dd
                    arg = b
            out[a] = arg
    return out_arr
