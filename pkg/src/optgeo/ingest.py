"""GPS traces to per-user location priors.

Points are projected onto a km grid, counted at most once per
(user, region, local calendar hour), split by time-of-day period, and
normalized over a common set of popular regions.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import IngestError, InputError
from .geo import GridSpec, LocationSet, project
from .mech import Prior

log = logging.getLogger(__name__)

MALFORMED_LIMIT = 0.01
CSV_HEADER = ("user_id", "timestamp_iso8601", "lat", "lon")
PLT_HEADER_LINES = 6
WINDOW_DAYS = 90


class TracePoint(NamedTuple):
    user_id: str
    timestamp: float  # UTC seconds
    lat: float
    lon: float


def _point(user, ts, lat, lon) -> TracePoint:
    user = str(user).strip()
    if not user:
        raise ValueError("empty user id")
    ts, lat, lon = float(ts), float(lat), float(lon)
    if not math.isfinite(ts):
        raise ValueError("non-finite timestamp")
    if not (math.isfinite(lat) and abs(lat) <= 90 and math.isfinite(lon) and abs(lon) <= 180):
        raise ValueError("coordinates out of range")
    return TracePoint(user, ts, lat, lon)


def _utc_seconds(dt: datetime) -> float:
    # naive timestamps are taken as UTC; a local offset is applied at counting time
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


@dataclass(frozen=True)
class TimePeriod:
    name: str
    hour_ranges: tuple  # of (start, end) local hours; start > end wraps past midnight

    def __post_init__(self):
        ranges = tuple((int(a), int(b)) for a, b in self.hour_ranges)
        if not ranges:
            raise InputError(f"period {self.name!r} has no hour ranges")
        for a, b in ranges:
            if not (0 <= a < 24 and 0 < b <= 24) or a == b:
                raise InputError(f"bad hour range [{a}, {b}) in period {self.name!r}")
        object.__setattr__(self, "hour_ranges", ranges)

    def contains(self, hour: int) -> bool:
        for a, b in self.hour_ranges:
            if a < b and a <= hour < b:
                return True
            if a > b and (hour >= a or hour < b):  # wraps past midnight
                return True
        return False

    def to_json(self) -> dict:
        return {"name": self.name, "hour_ranges": [list(r) for r in self.hour_ranges]}

    @classmethod
    def from_json(cls, data: dict) -> "TimePeriod":
        return cls(data["name"], tuple(tuple(r) for r in data["hour_ranges"]))


DEFAULT_PERIODS = (
    TimePeriod("all_day", ((0, 24),)),
    TimePeriod("morning", ((7, 12),)),
    TimePeriod("afternoon", ((12, 19),)),
    TimePeriod("night", ((19, 7),)),
)


@dataclass
class TraceLoad:
    points: list
    malformed: list = field(default_factory=list)  # (source, line number)
    lines: int = 0


def _check_malformed(load: TraceLoad, limit: float) -> None:
    if load.lines and len(load.malformed) > limit * load.lines:
        shown = ", ".join(f"{src}:{ln}" for src, ln in load.malformed[:20])
        raise IngestError(f"{len(load.malformed)} of {load.lines} lines malformed "
                          f"(limit {limit:.0%}): {shown}", load.malformed)
    if load.malformed:
        log.warning("skipped %d malformed lines of %d", len(load.malformed), load.lines)


def _read_csv(text: str, source: str, load: TraceLoad) -> None:
    lines = text.splitlines()
    if not lines:
        return
    header = [h.strip() for h in lines[0].split(",")]
    if tuple(header) != CSV_HEADER:
        raise IngestError(f"{source}: expected header {','.join(CSV_HEADER)}", [(source, 1)])
    for ln, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or all(not c.strip() for c in row):
            continue
        load.lines += 1
        try:
            if len(row) != 4:
                raise ValueError("wrong field count")
            ts = _utc_seconds(datetime.fromisoformat(row[1].strip().replace("Z", "+00:00")))
            load.points.append(_point(row[0], ts, row[2], row[3]))
        except (ValueError, OverflowError):
            load.malformed.append((source, ln))


def _read_plt(path: Path, user: str, load: TraceLoad) -> None:
    with open(path, encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    for ln, line in enumerate(lines[PLT_HEADER_LINES:], start=PLT_HEADER_LINES + 1):
        if not line.strip():
            continue
        load.lines += 1
        parts = line.split(",")
        try:
            if len(parts) != 7:
                raise ValueError("wrong field count")
            dt = datetime.fromisoformat(f"{parts[5].strip()}T{parts[6].strip()}")
            load.points.append(_point(user, _utc_seconds(dt), parts[0], parts[1]))
        except (ValueError, OverflowError):
            load.malformed.append((str(path), ln))


def _plt_user(path: Path, root: Path) -> str:
    parent = path.parent
    if parent.name.lower() == "trajectory" and parent.parent != root.parent:
        return parent.parent.name
    return parent.name


def read_traces(path, malformed_limit: float = MALFORMED_LIMIT) -> TraceLoad:
    """Load a generic CSV file or a GeoLife-style directory of PLT files.

    Points come back sorted by (user, timestamp). More than ``malformed_limit``
    malformed data lines raises IngestError listing the offending lines.
    """
    p = Path(path)
    load = TraceLoad([])
    if p.is_dir():
        for plt in sorted(p.rglob("*")):
            if plt.is_file() and plt.suffix.lower() == ".plt":
                _read_plt(plt, _plt_user(plt, p), load)
            elif plt.is_file() and plt.suffix.lower() == ".csv":
                _read_csv(plt.read_text(encoding="utf-8"), str(plt), load)
    elif p.is_file():
        _read_csv(p.read_text(encoding="utf-8"), str(p), load)
    else:
        raise IngestError(f"no such trace file or directory: {p}")
    _check_malformed(load, malformed_limit)
    load.points.sort(key=lambda t: (t.user_id, t.timestamp, t.lat, t.lon))
    return load


def parse_traces(path, malformed_limit: float = MALFORMED_LIMIT) -> list[TracePoint]:
    return read_traces(path, malformed_limit).points


def parse_trace_text(text: str, source: str = "<string>",
                     malformed_limit: float = MALFORMED_LIMIT) -> list[TracePoint]:
    """Generic-CSV parsing from an in-memory string."""
    load = TraceLoad([])
    _read_csv(text, source, load)
    _check_malformed(load, malformed_limit)
    load.points.sort(key=lambda t: (t.user_id, t.timestamp, t.lat, t.lon))
    return load.points


def densest_window(points: Iterable[TracePoint], days: float = WINDOW_DAYS) -> list[TracePoint]:
    """Per user, keep the [t, t + days) window with the most points (earliest on ties)."""
    span = days * 86400.0
    by_user: dict[str, list[TracePoint]] = {}
    for p in points:
        by_user.setdefault(p.user_id, []).append(p)
    out = []
    for user in sorted(by_user):
        pts = sorted(by_user[user], key=lambda t: t.timestamp)
        ts = np.array([p.timestamp for p in pts])
        ends = np.searchsorted(ts, ts + span, side="left")
        sizes = ends - np.arange(len(ts))
        start = int(np.argmax(sizes))
        out.extend(pts[start:int(ends[start])])
    return out


@dataclass
class CountTable:
    """Deduplicated counts per (user, period, region)."""

    n_regions: int
    periods: tuple
    counts: dict = field(default_factory=dict)  # user -> int array (periods, regions)
    dropped: int = 0  # points outside the grid

    @property
    def users(self) -> list[str]:
        return sorted(self.counts)

    def period_index(self, period) -> int:
        name = period.name if isinstance(period, TimePeriod) else period
        for i, p in enumerate(self.periods):
            if p.name == name:
                return i
        raise InputError(f"unknown period {name!r}")

    def get(self, user: str, region: int, period) -> int:
        row = self.counts.get(user)
        if row is None:
            return 0
        return int(row[self.period_index(period), region])

    def vector(self, user: str, period) -> np.ndarray:
        row = self.counts.get(user)
        if row is None:
            return np.zeros(self.n_regions, dtype=np.int64)
        return row[self.period_index(period)].copy()

    def merge(self, other: "CountTable") -> "CountTable":
        if other.n_regions != self.n_regions or other.periods != self.periods:
            raise InputError("cannot merge count tables over different grids or periods")
        counts = {u: v.copy() for u, v in self.counts.items()}
        for u, v in other.counts.items():
            counts[u] = counts[u] + v if u in counts else v.copy()
        return CountTable(self.n_regions, self.periods, counts, self.dropped + other.dropped)

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return (self.n_regions == other.n_regions and self.periods == other.periods
                and self.dropped == other.dropped and self.users == other.users
                and all(np.array_equal(self.counts[u], other.counts[u]) for u in self.users))

    def to_json(self) -> dict:
        counts = {}
        for u in self.users:
            counts[u] = {p.name: {str(r): int(c) for r, c in enumerate(self.counts[u][i]) if c}
                         for i, p in enumerate(self.periods)}
        return {"n_regions": self.n_regions, "periods": [p.to_json() for p in self.periods],
                "dropped": self.dropped, "counts": counts}

    @classmethod
    def from_json(cls, data: dict) -> "CountTable":
        periods = tuple(TimePeriod.from_json(p) for p in data["periods"])
        n = int(data["n_regions"])
        counts = {}
        for u, per in data["counts"].items():
            arr = np.zeros((len(periods), n), dtype=np.int64)
            for i, p in enumerate(periods):
                for r, c in per.get(p.name, {}).items():
                    arr[i, int(r)] = int(c)
            counts[u] = arr
        return cls(n, periods, counts, int(data.get("dropped", 0)))


def count_points(points: Iterable[TracePoint], grid: GridSpec, ref: tuple[float, float],
                 periods=DEFAULT_PERIODS, utc_offset_hours: float = 0.0) -> CountTable:
    """Count each (user, region, local calendar hour) at most once, per period.

    ``ref`` is the (lat, lon) the grid's km coordinates are projected around.
    Points outside the grid are dropped and tallied in ``dropped``.
    """
    periods = tuple(periods)
    offset = utc_offset_hours * 3600.0
    seen = set()
    dropped = 0
    for p in points:
        xy = project(p.lat, p.lon, ref[0], ref[1])
        region = grid.cell_of(xy.x, xy.y)
        if region is None:
            dropped += 1
            continue
        seen.add((p.user_id, region, math.floor((p.timestamp + offset) / 3600.0)))
    member = np.array([[per.contains(h) for h in range(24)] for per in periods], dtype=bool)
    counts: dict[str, np.ndarray] = {}
    for user, region, bucket in seen:
        arr = counts.get(user)
        if arr is None:
            arr = counts[user] = np.zeros((len(periods), grid.size), dtype=np.int64)
        arr[member[:, bucket % 24], region] += 1
    return CountTable(grid.size, periods, counts, dropped)


def _restricted_total(table: CountTable, user: str, period, regions) -> int:
    v = table.vector(user, period)
    return int(v[list(regions)].sum()) if regions is not None else int(v.sum())


def filter_users(table: CountTable, min_points: int, periods=None, regions=None) -> list[str]:
    """Users with at least ``min_points`` counts in every period, optionally within ``regions``."""
    if min_points < 0:
        raise InputError("min_points must be non-negative")
    periods = table.periods if periods is None else periods
    return [u for u in table.users
            if all(_restricted_total(table, u, p, regions) >= min_points for p in periods)]


@dataclass(frozen=True)
class RegionSelection:
    regions: tuple  # ascending region indices
    scores: tuple  # number of users ranking each selected region in their top list
    locations: LocationSet | None
    short: bool  # fewer candidate regions than requested


def select_regions(table: CountTable, per_user_top: int, keep: int, users=None,
                   grid: GridSpec | None = None, rank_period="all_day") -> RegionSelection:
    """Popular regions: score = number of users with the region in their top ``per_user_top``.

    Each user ranks regions with a positive count by decreasing count in
    ``rank_period`` (lower index first on ties). The ``keep`` best-scoring
    regions (lower index first on ties) are returned in ascending index order.
    """
    if per_user_top < 1 or keep < 1:
        raise InputError("per_user_top and keep must be at least 1")
    users = table.users if users is None else list(users)
    score = np.zeros(table.n_regions, dtype=np.int64)
    for u in users:
        v = table.vector(u, rank_period)
        order = np.lexsort((np.arange(len(v)), -v))
        top = [r for r in order[:per_user_top] if v[r] > 0]
        score[top] += 1
    candidates = np.flatnonzero(score > 0)
    ranked = candidates[np.lexsort((candidates, -score[candidates]))]
    chosen = np.sort(ranked[:keep])
    short = len(candidates) < keep
    if short:
        log.warning("only %d regions have a positive score; %d requested", len(candidates), keep)
    locs = None
    if grid is not None and len(chosen):
        locs = LocationSet(np.array([grid.center(int(r)) for r in chosen]),
                           tuple(f"r{int(r)}" for r in chosen))
    return RegionSelection(tuple(int(r) for r in chosen), tuple(int(score[r]) for r in chosen),
                           locs, short)


def build_prior(table: CountTable, user: str, period, regions) -> Prior:
    """Normalized counts of ``user`` in ``period`` over ``regions`` only."""
    regions = list(regions)
    v = table.vector(user, period)[regions].astype(float)
    total = v.sum()
    if total <= 0:
        name = period.name if isinstance(period, TimePeriod) else period
        raise InputError(f"user {user!r} has no counts in the selected regions for {name!r}")
    return Prior(v / total, f"{user}:{period.name if isinstance(period, TimePeriod) else period}")


@dataclass
class IngestResult:
    table: CountTable
    selection: RegionSelection
    priors: dict  # (user, period name) -> Prior
    funnel: dict
    malformed: list = field(default_factory=list)


def run_pipeline(points: list[TracePoint], grid: GridSpec, ref, periods=DEFAULT_PERIODS,
                 utc_offset_hours: float = 0.0, min_points: int = 20, per_user_top: int = 30,
                 keep: int = 50, window_days: float | None = WINDOW_DAYS,
                 rank_period="all_day") -> IngestResult:
    """Window, count, filter users, select regions, filter again, build priors."""
    periods = tuple(periods)
    users_total = len({p.user_id for p in points})
    if window_days is not None:
        points = densest_window(points, window_days)
    table = count_points(points, grid, ref, periods, utc_offset_hours)
    first = filter_users(table, min_points, periods)
    selection = select_regions(table, per_user_top, keep, first, grid, rank_period)
    final = filter_users(table, min_points, periods, selection.regions) if selection.regions else []
    priors = {}
    for u in final:
        for p in periods:
            priors[(u, p.name)] = build_prior(table, u, p, selection.regions)
    funnel = {"users_total": users_total, "users_in_grid": len(table.users),
              "users_after_first_filter": len(first), "users_final": len(final),
              "points_in_window": len(points), "points_outside_grid": table.dropped,
              "regions_selected": len(selection.regions), "regions_short": selection.short}
    return IngestResult(table, selection, priors, funnel)


def priors_to_json(priors: dict, selection: RegionSelection) -> dict:
    return {"regions": list(selection.regions),
            "priors": [{"user_id": u, "period": p, "weights": [float(w) for w in prior.weights]}
                       for (u, p), prior in sorted(priors.items())]}


def priors_to_csv(priors: dict, selection: RegionSelection) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "period"] + [f"r{r}" for r in selection.regions])
    for (u, p), prior in sorted(priors.items()):
        w.writerow([u, p] + [repr(float(x)) for x in prior.weights])
    return buf.getvalue()


def load_prior(data, n: int | None = None) -> Prior:
    """A Prior from a JSON weight list, {"weights": [...], "name": ...}, or a CSV file path."""
    if isinstance(data, (str, Path)) and Path(data).suffix.lower() == ".csv":
        rows = list(csv.reader(open(data, encoding="utf-8")))
        weights = [float(v) for v in rows[-1][2:]] if rows[0][:2] == ["user_id", "period"] \
            else [float(v) for v in rows[-1]]
        prior = Prior(weights, Path(data).stem)
    elif isinstance(data, (str, Path)):
        return load_prior(json.loads(Path(data).read_text(encoding="utf-8")), n)
    elif isinstance(data, dict):
        prior = Prior(data["weights"], data.get("name", ""))
    else:
        prior = Prior(data)
    if n is not None and len(prior) != n:
        raise InputError(f"prior has {len(prior)} entries, expected {n}")
    return prior
