"""Greedy delta-spanners of a location set and their induced graph metric."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InputError, StructuralError
from .geo import LocationSet, Metric, as_matrix

DILATION_TOL = 1e-9
# pairs whose current graph distance is within this relative margin of
# delta*d count as covered, so exactly collinear shortcuts never add an edge
GREEDY_RTOL = 1e-12


class ConstraintCount(NamedTuple):
    inequalities: int
    equalities: int
    variables: int


@dataclass(frozen=True, eq=False)
class Spanner:
    locations: LocationSet
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    delta_requested: float
    apsp: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.apsp is None:
            object.__setattr__(self, "apsp",
                               all_pairs_shortest_paths(len(self.locations), self.edges, self.weights))
        self.apsp.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.locations)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees().max()) if self.n else 0

    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(self.apsp)))

    def metric(self) -> Metric:
        return Metric.graph(self)

    def to_json(self) -> dict:
        return {"delta": self.delta_requested,
                "edges": [[i, j, w] for (i, j), w in zip(self.edges, self.weights)]}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict, locations: LocationSet, dX=None) -> "Spanner":
        """Rebuild a spanner; edge weights are checked against ``dX`` when given."""
        edges, weights = [], []
        n = len(locations)
        for item in data["edges"]:
            i, j, w = int(item[0]), int(item[1]), float(item[2])
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise InputError(f"bad spanner edge {item!r}")
            edges.append((min(i, j), max(i, j)))
            weights.append(w)
        if dX is not None:
            d = as_matrix(dX)
            for (i, j), w in zip(edges, weights):
                if w != d[i, j]:
                    raise InputError(f"edge ({i}, {j}) weight {w} differs from dX {d[i, j]}")
        return cls(locations, tuple(edges), tuple(weights), float(data["delta"]))


def get_spanner(locs: LocationSet, dX: Metric | np.ndarray, delta: float) -> Spanner:
    """Greedy delta-spanner: scan pairs by increasing distance, add an edge only
    when the current graph distance exceeds delta times the metric distance."""
    if not (delta >= 1.0) or not math.isfinite(delta):
        raise InputError(f"dilation must be >= 1, got {delta!r}")
    d = np.ascontiguousarray(as_matrix(dX), dtype=float)
    if d.shape != (len(locs), len(locs)):
        raise InputError("metric does not match the location set")
    edges = [(int(i), int(j)) for i, j in kernels.greedy_spanner(d, float(delta), GREEDY_RTOL)]
    weights = tuple(float(d[i, j]) for i, j in edges)
    sp = Spanner(locs, tuple(edges), weights, float(delta))
    # the greedy rule guarantees this; a failure means a broken kernel
    if len(locs) > 1 and measured_dilation(sp, d) > delta + DILATION_TOL:
        raise StructuralError("greedy spanner exceeds its requested dilation")
    return sp


def all_pairs_shortest_paths(n: int, edges, weights) -> np.ndarray:
    """Shortest-path weights between all node pairs; +inf where disconnected.

    A path summed from either end can differ in the last bit; the smaller
    value is kept on both sides so the result is exactly symmetric.
    """
    d = kernels.dijkstra_apsp(int(n), list(edges), list(weights))
    return np.minimum(d, d.T)


def measured_dilation(s: Spanner, dX) -> float:
    d = as_matrix(dX)
    if not s.is_connected():
        raise StructuralError("spanner is disconnected")
    if s.n < 2:
        return 1.0
    off = ~np.eye(s.n, dtype=bool)
    return float(np.max(s.apsp[off] / d[off]))


def constraint_count(s: Spanner) -> ConstraintCount:
    """LP size of the spanner-reduced program: both edge orientations per reported location."""
    n = s.n
    return ConstraintCount(2 * len(s.edges) * n, n, n * n)


def complete_graph(locs: LocationSet, dX) -> Spanner:
    d = as_matrix(dX)
    n = len(locs)
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return Spanner(locs, edges, tuple(float(d[i, j]) for i, j in edges), 1.0)
