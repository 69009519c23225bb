"""Obfuscation mechanisms: QL-optimal (exact and spanner), Planar Laplace, exponential."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import CalibrationError, InputError, InvariantError
from .geo import LocationSet, Metric, as_matrix
from .lp import build_primal_exact, build_primal_spanner, check_prior, solve
from .spanner import Spanner, get_spanner

log = logging.getLogger(__name__)

ROW_TOL = 1e-9
PRIVACY_SLACK = 1e-6
KINDS = ("optql-exact", "optql-spanner", "planar-laplace", "exponential", "external")


@dataclass(frozen=True)
class Provenance:
    kind: str
    epsilon: float | None = None
    delta: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown mechanism kind {self.kind!r}")

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True, eq=False)
class Prior:
    weights: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        check_prior(w, len(w))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def uniform(cls, n: int) -> "Prior":
        return cls(np.full(n, 1.0 / n), "uniform")


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Row-stochastic matrix k[x, z] = Pr(report z | true location x)."""

    locations: LocationSet
    matrix: np.ndarray
    provenance: Provenance = Provenance("external")
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = np.array(self.matrix, dtype=float)
        n = len(self.locations)
        if k.shape != (n, n):
            raise InputError(f"mechanism matrix has shape {k.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(k)):
            raise InputError("mechanism has non-finite entries")
        if np.any(k < 0) or np.any(k > 1):
            raise InputError("mechanism entries must lie in [0, 1]")
        if np.max(np.abs(k.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InputError("mechanism rows must sum to 1")
        k.setflags(write=False)
        object.__setattr__(self, "matrix", k)

    def __len__(self):
        return len(self.locations)

    @property
    def kind(self) -> str:
        return self.provenance.kind

    def to_json(self) -> dict:
        return {"provenance": self.provenance.to_json(),
                "matrix": [[float(f"{v:.12g}") for v in row] for row in self.matrix.tolist()],
                "locations": self.locations.to_json()}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict, locations: LocationSet | None = None) -> "Mechanism":
        if locations is None:
            if "locations" not in data:
                raise InputError("mechanism JSON has no locations; pass them explicitly")
            locations = LocationSet.from_json(data["locations"])
        prov = data.get("provenance", {"kind": "external"})
        return cls(locations, np.asarray(data["matrix"], dtype=float), Provenance(**prov))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.locations.names)
        for row in self.matrix:
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, locations: LocationSet, provenance: Provenance | None = None):
        rows = list(csv.reader(io.StringIO(text)))
        k = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        return cls(locations, k, provenance or Provenance("external"))


def _lp_matrix(values: np.ndarray, n: int) -> np.ndarray:
    # LP noise: clip below zero, drop columns that are zero up to round-off
    # (a dX-private mechanism has each column all-zero or all-positive),
    # then restore exact row sums
    k = np.clip(values.reshape(n, n), 0.0, None)
    k[:, k.max(axis=0) < 1e-12] = 0.0
    return k / k.sum(axis=1, keepdims=True)


def _require_private(mech: Mechanism, dX_scaled, what: str) -> None:
    from .evaluation import verify_dx_privacy

    report = verify_dx_privacy(mech, dX_scaled, slack=PRIVACY_SLACK)
    if not report.satisfied:
        raise InvariantError(f"{what} violates dX-privacy at triple {report.worst_triple}")


def build_optql_exact(locs: LocationSet, dX, epsilon: float, pi, dQ, **solve_options) -> Mechanism:
    """QL-optimal epsilon*dX-private mechanism from the full |X|^3-row program."""
    n = len(locs)
    model = build_primal_exact(locs, dX, epsilon, pi, dQ)
    t0 = time.perf_counter()
    sol = solve(model, **solve_options).require_optimal()
    elapsed = time.perf_counter() - t0
    mech = Mechanism(locs, _lp_matrix(sol.values, n), Provenance("optql-exact", float(epsilon)),
                     {"objective": sol.objective_value, "iterations": sol.iterations,
                      "solve_seconds": elapsed, "inequalities": model.num_le,
                      "equalities": model.num_eq, "variables": model.num_vars})
    _require_private(mech, epsilon * as_matrix(dX), "OptQL-exact mechanism")
    return mech


def build_optql_spanner(locs: LocationSet, dX, epsilon: float, delta: float, pi, dQ,
                        spanner: Spanner | None = None, **solve_options) -> Mechanism:
    """Near-optimal mechanism from the program restricted to greedy-spanner edges.

    The result is checked against every ordered triple at level epsilon*dX,
    not only the spanner edges it was built from.
    """
    n = len(locs)
    if spanner is None:
        spanner = get_spanner(locs, dX, delta)
    model = build_primal_spanner(locs, spanner, epsilon, delta, pi, dQ)
    t0 = time.perf_counter()
    sol = solve(model, **solve_options).require_optimal()
    elapsed = time.perf_counter() - t0
    mech = Mechanism(locs, _lp_matrix(sol.values, n),
                     Provenance("optql-spanner", float(epsilon), float(delta)),
                     {"objective": sol.objective_value, "iterations": sol.iterations,
                      "solve_seconds": elapsed, "edges": len(spanner.edges),
                      "inequalities": model.num_le, "equalities": model.num_eq,
                      "variables": model.num_vars})
    _require_private(mech, epsilon * as_matrix(dX), "OptQL-spanner mechanism")
    return mech


class PlanarNoise:
    """Seeded planar Laplace noise at unit epsilon, reused across epsilons.

    For each true location the radius is Gamma(shape 2, scale 1) and the angle
    uniform on [0, 2 pi); noise at level eps is this displacement divided by eps.
    Sharing the draws makes QL(eps) a deterministic function for calibration.
    """

    def __init__(self, n_locations: int, samples: int, seed: int):
        if samples < 1:
            raise InputError("need at least one sample per location")
        self.samples = samples
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.offsets = np.empty((n_locations, samples, 2))
        for x in range(n_locations):
            r = rng.gamma(2.0, 1.0, samples)
            theta = rng.uniform(0.0, 2.0 * math.pi, samples)
            self.offsets[x, :, 0] = r * np.cos(theta)
            self.offsets[x, :, 1] = r * np.sin(theta)

    def matrix(self, locs: LocationSet, epsilon: float) -> np.ndarray:
        n = len(locs)
        k = np.empty((n, n))
        for x in range(n):
            pts = locs.coords[x] + self.offsets[x] / epsilon
            counts = np.bincount(kernels.snap_nearest(pts, locs.coords), minlength=n)
            k[x] = counts / self.samples
        return k


MIN_PL_SAMPLES = 10_000


def build_planar_laplace(locs: LocationSet, epsilon: float, seed: int,
                         samples_per_location: int = 100_000, noise: PlanarNoise | None = None) -> Mechanism:
    """Discretized Planar Laplace: Monte Carlo draws snapped to the nearest location.

    Not guaranteed epsilon-geo-indistinguishable after snapping; it is a utility baseline.
    """
    if not (epsilon > 0):
        raise InputError(f"epsilon must be positive, got {epsilon!r}")
    if samples_per_location < MIN_PL_SAMPLES:
        raise InputError(f"need at least {MIN_PL_SAMPLES} samples per location")
    if noise is None:
        noise = PlanarNoise(len(locs), samples_per_location, seed)
    return Mechanism(locs, noise.matrix(locs, epsilon),
                     Provenance("planar-laplace", float(epsilon), None, int(seed)),
                     {"samples_per_location": noise.samples})


def ql_standard_error(mech: Mechanism, pi, dQ, samples: int) -> float:
    """Monte Carlo standard error of the QL of an empirically estimated mechanism."""
    k = mech.matrix
    w = np.asarray(getattr(pi, "weights", pi), dtype=float)
    d = as_matrix(dQ)
    mean = (k * d).sum(axis=1)
    var = np.maximum((k * d * d).sum(axis=1) - mean ** 2, 0.0)
    return float(math.sqrt(np.sum(w * w * var) / samples))


@dataclass
class Calibration:
    epsilon_prime: float
    mechanism: Mechanism
    ql: float
    evaluations: int


def calibrate_planar_laplace(locs: LocationSet, pi, dQ, target_ql: float, tol: float, seed: int,
                             samples_per_location: int = 100_000,
                             epsilon_range: tuple[float, float] = (1e-3, 1e3),
                             start: float = 1.0) -> Calibration:
    """Find eps' whose discretized Planar Laplace has QL within ``tol`` of ``target_ql``.

    Expands a bracket geometrically from ``start`` and bisects in log space,
    with the same noise draws at every eps'.
    """
    from .evaluation import quality_loss

    if not (target_ql > 0) or not (tol > 0):
        raise InputError("target QL and tolerance must be positive")
    lo_cap, hi_cap = epsilon_range
    noise = PlanarNoise(len(locs), samples_per_location, seed)
    cache: dict[float, tuple[float, np.ndarray]] = {}

    def ql(eps):
        if eps not in cache:
            k = noise.matrix(locs, eps)
            cache[eps] = (quality_loss(k, pi, dQ), k)
        return cache[eps][0]

    def done(eps):
        k = cache[eps][1]
        mech = Mechanism(locs, k, Provenance("planar-laplace", float(eps), None, int(seed)),
                         {"samples_per_location": samples_per_location, "target_ql": target_ql})
        return Calibration(float(eps), mech, cache[eps][0], len(cache))

    eps = min(max(start, lo_cap), hi_cap)
    if abs(ql(eps) - target_ql) <= tol:
        return done(eps)
    if ql(eps) > target_ql:
        lo = eps
        hi = min(eps * 2, hi_cap)
        while ql(hi) > target_ql:
            if hi >= hi_cap:
                raise CalibrationError(
                    f"QL {target_ql:g} below the attainable range "
                    f"[{ql(hi_cap):g}, {ql(lo_cap):g}] for eps' in [{lo_cap:g}, {hi_cap:g}]",
                    attainable=(ql(hi_cap), ql(lo_cap)))
            lo, hi = hi, min(hi * 2, hi_cap)
    else:
        hi = eps
        lo = max(eps / 2, lo_cap)
        while ql(lo) < target_ql:
            if lo <= lo_cap:
                raise CalibrationError(
                    f"QL {target_ql:g} above the attainable range "
                    f"[{ql(hi_cap):g}, {ql(lo_cap):g}] for eps' in [{lo_cap:g}, {hi_cap:g}]",
                    attainable=(ql(hi_cap), ql(lo_cap)))
            hi, lo = lo, max(lo / 2, lo_cap)
    # ql(lo) >= target >= ql(hi)
    for _ in range(200):
        for e in (lo, hi):
            if abs(ql(e) - target_ql) <= tol:
                return done(e)
        if hi / lo - 1.0 < 1e-13:
            break
        mid = math.sqrt(lo * hi)
        if ql(mid) > target_ql:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"no eps' in [{lo:.6g}, {hi:.6g}] reaches QL {target_ql:g} within {tol:g} "
        f"(QL jumps from {ql(lo):g} to {ql(hi):g})", attainable=(ql(hi), ql(lo)))


def build_exponential(locs: LocationSet, dX, epsilon: float) -> Mechanism:
    """k_xz proportional to exp(-(eps/2) dX(x, z)); epsilon*dX-private by the triangle inequality."""
    if not (epsilon > 0):
        raise InputError(f"epsilon must be positive, got {epsilon!r}")
    d = as_matrix(dX)
    logits = -(epsilon / 2.0) * d
    logits -= logits.max(axis=1, keepdims=True)
    k = np.exp(logits)
    k /= k.sum(axis=1, keepdims=True)
    return Mechanism(locs, k, Provenance("exponential", float(epsilon)))


def identity_mechanism(locs: LocationSet) -> Mechanism:
    return Mechanism(locs, np.eye(len(locs)))


def obfuscate(mech: Mechanism, x: int, seed) -> int:
    """Draw a reported location from row ``x`` by inverse CDF."""
    n = len(mech)
    if not 0 <= x < n:
        raise IndexError(f"location index {x} out of range")
    u = np.random.default_rng(seed).random()
    cdf = np.cumsum(mech.matrix[x])
    z = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    # guard against u * total landing on the last breakpoint through round-off
    while z >= n or mech.matrix[x, z] == 0.0:
        z -= 1
    return z
