"""Planar locations, metrics and grids.

All distances are kilometers, so a privacy level ``epsilon`` is in 1/km.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError

EARTH_RADIUS_KM = 6371.0
TRIANGLE_TOL = 1e-9


class Point(NamedTuple):
    x: float
    y: float


def project(lat: float, lon: float, ref_lat: float, ref_lon: float) -> Point:
    """Equirectangular projection of (lat, lon) around a reference point, in km."""
    for name, value, bound in (("lat", lat, 90.0), ("lon", lon, 180.0),
                               ("ref_lat", ref_lat, 90.0), ("ref_lon", ref_lon, 180.0)):
        if not math.isfinite(value) or abs(value) > bound:
            raise InputError(f"{name}={value!r} outside [-{bound}, {bound}]")
    x = EARTH_RADIUS_KM * (lon - ref_lon) * math.pi / 180.0 * math.cos(ref_lat * math.pi / 180.0)
    y = EARTH_RADIUS_KM * (lat - ref_lat) * math.pi / 180.0
    return Point(x, y)


@dataclass(frozen=True, eq=False)
class LocationSet:
    """Ordered set of distinct planar points; index order is canonical downstream."""

    coords: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        if len(coords) == 0:
            raise InputError("a location set needs at least one point")
        if not np.all(np.isfinite(coords)):
            raise InputError("location coordinates must be finite")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise InputError("location set contains coincident points")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != len(coords):
                raise InputError("labels and points differ in length")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], labels=None) -> "LocationSet":
        return cls(np.asarray(points, dtype=float), None if labels is None else tuple(labels))

    def __len__(self) -> int:
        return len(self.coords)

    def __getitem__(self, i: int) -> Point:
        return Point(float(self.coords[i, 0]), float(self.coords[i, 1]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, LocationSet):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(np.all(self.coords == other.coords))

    def __hash__(self):
        return hash(self.coords.tobytes())

    @property
    def names(self) -> list[str]:
        if self.labels is not None:
            return list(self.labels)
        return [str(i) for i in range(len(self))]

    def to_json(self) -> list[dict]:
        out = []
        for i, (x, y) in enumerate(self.coords.tolist()):
            item = {"x": x, "y": y}
            if self.labels is not None:
                item["label"] = self.labels[i]
            out.append(item)
        return out

    @classmethod
    def from_json(cls, data: list[dict]) -> "LocationSet":
        try:
            coords = [(float(d["x"]), float(d["y"])) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed location set: {exc}") from exc
        labels = None
        if data and all("label" in d for d in data):
            labels = tuple(str(d["label"]) for d in data)
        return cls(np.asarray(coords, dtype=float), labels)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class GridSpec:
    origin: Point
    cell_width: float
    cell_height: float
    columns: int
    rows: int

    def __post_init__(self):
        if not (self.cell_width > 0 and self.cell_height > 0):
            raise InputError("grid cells must have positive width and height")
        if int(self.columns) < 1 or int(self.rows) < 1:
            raise InputError("grid needs at least one row and one column")
        object.__setattr__(self, "origin", Point(float(self.origin[0]), float(self.origin[1])))

    @property
    def size(self) -> int:
        return self.rows * self.columns

    def cell_of(self, x: float, y: float) -> int | None:
        """Row-major region index containing (x, y), or None when outside the grid."""
        c = math.floor((x - self.origin.x) / self.cell_width)
        r = math.floor((y - self.origin.y) / self.cell_height)
        if 0 <= c < self.columns and 0 <= r < self.rows:
            return r * self.columns + c
        return None

    def center(self, region: int) -> Point:
        r, c = divmod(region, self.columns)
        return Point(self.origin.x + (c + 0.5) * self.cell_width,
                     self.origin.y + (r + 0.5) * self.cell_height)

    def to_json(self) -> dict:
        return {"origin": list(self.origin), "cell_width": self.cell_width,
                "cell_height": self.cell_height, "columns": self.columns, "rows": self.rows}

    @classmethod
    def from_json(cls, data: dict) -> "GridSpec":
        return cls(Point(*data.get("origin", (0.0, 0.0))), float(data["cell_width"]),
                   float(data["cell_height"]), int(data["columns"]), int(data["rows"]))


def build_grid(spec: GridSpec) -> LocationSet:
    """Centers of all cells of ``spec``, row-major."""
    return LocationSet(np.array([spec.center(k) for k in range(spec.size)]),
                       tuple(f"r{k}" for k in range(spec.size)))


def euclidean_matrix(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    # exact symmetry regardless of rounding in the subtraction
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def check_metric(d: np.ndarray, tol: float = TRIANGLE_TOL) -> None:
    """Raise InputError unless ``d`` is a true metric on its index set."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InputError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise InputError("distance matrix has non-finite entries")
    if not np.array_equal(d, d.T):
        raise InputError("distance matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise InputError("distance matrix has a non-zero diagonal")
    off = ~np.eye(len(d), dtype=bool)
    if np.any(d[off] <= 0):
        raise InputError("distinct points must have positive distance")
    for k in range(len(d)):
        # d[i, j] <= d[i, k] + d[k, j] for every pair through k
        if np.any(d > d[:, [k]] + d[[k], :] + tol):
            raise InputError("distance matrix violates the triangle inequality")


@dataclass(frozen=True, eq=False)
class Metric:
    """A metric on the indices of a location set, stored as a dense matrix.

    ``scale`` multiplies every distance; ``metric.scaled(eps)`` is the metric
    ``eps * d`` used as a privacy constraint. ``base`` is the unscaled matrix.
    """

    kind: str
    base: np.ndarray
    scale: float = 1.0
    source: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("euclidean", "graph", "explicit"):
            raise InputError(f"unknown metric kind {self.kind!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InputError("metric scale must be positive and finite")
        base = np.array(self.base, dtype=float)
        base.setflags(write=False)
        object.__setattr__(self, "base", base)

    @classmethod
    def euclidean(cls, locs: LocationSet) -> "Metric":
        return cls("euclidean", euclidean_matrix(locs.coords), source=locs)

    @classmethod
    def explicit(cls, matrix) -> "Metric":
        matrix = np.asarray(matrix, dtype=float)
        check_metric(matrix)
        return cls("explicit", matrix)

    @classmethod
    def graph(cls, spanner) -> "Metric":
        """Shortest-path metric of a connected spanner."""
        apsp = spanner.apsp
        if not np.all(np.isfinite(apsp)):
            raise InputError("graph metric needs a connected graph")
        return cls("graph", apsp, source=spanner)

    def scaled(self, factor: float) -> "Metric":
        return Metric(self.kind, self.base, self.scale * factor, self.source)

    @property
    def matrix(self) -> np.ndarray:
        if self.scale == 1.0:
            return self.base
        return self.base * self.scale

    def __len__(self) -> int:
        return len(self.base)

    def __call__(self, i: int, j: int) -> float:
        return distance(self, i, j)


def distance(m: Metric, i: int, j: int) -> float:
    n = len(m.base)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"location index out of range for a metric on {n} points")
    return float(m.base[i, j]) * m.scale


def as_matrix(d) -> np.ndarray:
    """Accept a Metric or a raw square array."""
    if isinstance(d, Metric):
        return d.matrix
    return np.asarray(d, dtype=float)
