"""Command-line driver.

    optgeo spanner   --config cfg.json [--delta D] [--out DIR]
    optgeo build     --config cfg.json --kind KIND [--epsilon E] [--delta D] [--seed S] [--out DIR]
    optgeo calibrate --config cfg.json [--epsilon E] [--seed S] [--out DIR]
    optgeo eval      --config cfg.json [--mechanism FILE ...] [--prior FILE ...] [--out DIR]
    optgeo ingest    --config cfg.json [TRACES] [--out DIR]

Configuration is one JSON file; flags override its keys. Exit codes: 0 ok,
1 input error, 2 solver or numeric failure, 3 invariant violated by an output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, InvariantError, OptGeoError
from .evaluation import evaluate, quality_loss, rows_to_csv, rows_to_json, verify_dx_privacy
from .geo import GridSpec, LocationSet, Metric, build_grid
from .ingest import (DEFAULT_PERIODS, TimePeriod, load_prior, priors_to_csv, priors_to_json,
                     read_traces, run_pipeline)
from .mech import (Mechanism, Prior, build_exponential, build_optql_exact, build_optql_spanner,
                   build_planar_laplace, calibrate_planar_laplace, ql_standard_error)
from .spanner import Spanner, constraint_count, get_spanner, measured_dilation

log = logging.getLogger("optgeo")

BUILD_KINDS = ("optql-exact", "optql-spanner", "planar-laplace", "exponential")
DEFAULT_SAMPLES = 100_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, data) -> None:
    write_atomic(path, json.dumps(data, indent=2, sort_keys=False) + "\n")


def _read_json(path) -> object:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


class Config:
    """JSON config with command-line overrides; relative paths resolve against the config file."""

    def __init__(self, data: dict, base: Path):
        self.data = data
        self.base = base

    @classmethod
    def load(cls, path, args) -> "Config":
        if path:
            data = _read_json(path)
            if not isinstance(data, dict):
                raise InputError("config must be a JSON object")
            base = Path(path).resolve().parent
        else:
            data, base = {}, Path.cwd()
        for key in ("epsilon", "delta", "kind", "seed", "out"):
            v = getattr(args, key, None)
            if v is not None:
                data[key] = v
        cfg = cls(data, base)
        if "epsilon" in data and not (float(data["epsilon"]) > 0):
            raise InputError("epsilon must be positive")
        if "delta" in data and not (float(data["delta"]) >= 1):
            raise InputError("delta must be >= 1")
        return cfg

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def require(self, key):
        if key not in self.data:
            raise InputError(f"missing config key {key!r}")
        return self.data[key]

    @property
    def epsilon(self) -> float:
        return float(self.require("epsilon"))

    @property
    def delta(self) -> float:
        return float(self.data.get("delta", 1.0))

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def out(self) -> Path:
        return Path(self.data.get("out", "out"))

    def locations(self) -> LocationSet:
        src = self.require("locations")
        if isinstance(src, list):
            return LocationSet.from_json(src) if src and isinstance(src[0], dict) \
                else LocationSet.from_points(src)
        if "grid" in src:
            return build_grid(GridSpec.from_json(src["grid"]))
        if "file" in src:
            return LocationSet.from_json(_read_json(self.path(src["file"])))
        if "points" in src:
            return LocationSet.from_points(src["points"], src.get("labels"))
        raise InputError("locations need one of 'grid', 'file' or 'points'")

    def metric(self, role: str, locs: LocationSet) -> Metric:
        sel = self.data.get("metrics", {}).get(role, "euclidean")
        if sel == "euclidean":
            return Metric.euclidean(locs)
        if isinstance(sel, dict) and "file" in sel:
            sel = {"matrix": _read_json(self.path(sel["file"]))}
        if isinstance(sel, dict) and "matrix" in sel:
            m = Metric.explicit(np.asarray(sel["matrix"], dtype=float))
            if len(m) != len(locs):
                raise InputError(f"{role} matrix does not match the location set")
            return m
        raise InputError(f"unknown metric selector for {role}: {sel!r}")

    def prior(self, n: int) -> Prior:
        src = self.data.get("prior", "uniform")
        if src == "uniform":
            return Prior.uniform(n)
        if isinstance(src, str):
            return load_prior(self.path(src), n)
        return load_prior(src, n)

    def solver(self) -> dict:
        opts = dict(self.data.get("solver", {}))
        allowed = {"backend", "max_iter", "route"}
        unknown = set(opts) - allowed
        if unknown:
            raise InputError(f"unknown solver options: {sorted(unknown)}")
        return opts

    def periods(self):
        if "periods" not in self.data:
            return DEFAULT_PERIODS
        return tuple(TimePeriod.from_json(p) for p in self.data["periods"])


def _spanner_stats(s: Spanner, dX) -> dict:
    cc = constraint_count(s)
    return {"edges": len(s.edges), "measured_dilation": measured_dilation(s, dX),
            "max_degree": s.max_degree, "constraint_count": cc._asdict()}


def cmd_spanner(cfg: Config) -> int:
    locs = cfg.locations()
    dX = cfg.metric("dX", locs)
    t0 = time.perf_counter()
    s = get_spanner(locs, dX, cfg.delta)
    log.info("spanner |X|=%d delta=%g: %d edges in %.3fs", len(locs), cfg.delta,
             len(s.edges), time.perf_counter() - t0)
    stats = _spanner_stats(s, dX)
    out = cfg.out
    _write_json(out / "spanner.json", s.to_json())
    _write_json(out / "spanner_stats.json", stats)
    print(json.dumps(stats))
    return 0


def _write_mechanism(out: Path, mech: Mechanism, stem: str) -> None:
    _write_json(out / f"{stem}.json", mech.to_json())
    write_atomic(out / f"{stem}.csv", mech.to_csv())


def _build(cfg: Config, kind: str) -> Mechanism:
    locs = cfg.locations()
    dX, dQ = cfg.metric("dX", locs), cfg.metric("dQ", locs)
    if kind == "optql-exact":
        mech = build_optql_exact(locs, dX, cfg.epsilon, cfg.prior(len(locs)), dQ, **cfg.solver())
    elif kind == "optql-spanner":
        spanner = None
        if "spanner" in cfg.data:
            spanner = Spanner.from_json(_read_json(cfg.path(cfg.data["spanner"])), locs, dX)
        mech = build_optql_spanner(locs, dX, cfg.epsilon, cfg.delta, cfg.prior(len(locs)), dQ,
                                   spanner=spanner, **cfg.solver())
    elif kind == "planar-laplace":
        mech = build_planar_laplace(locs, cfg.epsilon, cfg.seed,
                                    int(cfg.data.get("samples_per_location", DEFAULT_SAMPLES)))
    elif kind == "exponential":
        mech = build_exponential(locs, dX, cfg.epsilon)
    else:
        raise InputError(f"unknown mechanism kind {kind!r}; choose from {', '.join(BUILD_KINDS)}")
    return mech


def cmd_build(cfg: Config) -> int:
    kind = cfg.require("kind")
    mech = _build(cfg, kind)
    locs = mech.locations
    info = mech.info
    if "solve_seconds" in info:
        log.info("solved %s |X|=%d delta=%s: %d iterations, %.3fs, %d inequalities",
                 kind, len(locs), mech.provenance.delta, info["iterations"],
                 info["solve_seconds"], info["inequalities"])
    if "prior" in cfg.data or kind.startswith("optql"):
        ql = quality_loss(mech, cfg.prior(len(locs)), cfg.metric("dQ", locs))
        log.info("QL %.12g km", ql)
    _write_mechanism(cfg.out, mech, kind)
    return 0


def cmd_calibrate(cfg: Config) -> int:
    """Planar Laplace at the eps' whose QL matches a target (by default OptQL's QL at epsilon)."""
    locs = cfg.locations()
    pi = cfg.prior(len(locs))
    dQ = cfg.metric("dQ", locs)
    samples = int(cfg.data.get("samples_per_location", DEFAULT_SAMPLES))
    if "target_ql" in cfg.data:
        target = float(cfg.data["target_ql"])
    else:
        ref_kind = cfg.data.get("kind", "optql-exact")
        if ref_kind not in ("optql-exact", "optql-spanner"):
            raise InputError("calibration reference must be optql-exact or optql-spanner")
        ref = _build(cfg, ref_kind)
        target = quality_loss(ref, pi, dQ)
        log.info("target QL from %s at epsilon=%g: %.12g km", ref_kind, cfg.epsilon, target)
    tol = float(cfg.data.get("tol", cfg.data.get("relative_tol", 0.01) * target))
    cal = calibrate_planar_laplace(locs, pi, dQ, target, tol, cfg.seed, samples)
    se = ql_standard_error(cal.mechanism, pi, dQ, samples)
    log.info("eps'=%.9g QL=%.9g target=%.9g (%d evaluations)", cal.epsilon_prime, cal.ql,
             target, cal.evaluations)
    summary = {"epsilon_prime": cal.epsilon_prime, "ql_km": cal.ql, "target_ql_km": target,
               "tol_km": tol, "mc_standard_error_km": se, "evaluations": cal.evaluations,
               "seed": cfg.seed, "samples_per_location": samples}
    _write_json(cfg.out / "calibration.json", summary)
    _write_mechanism(cfg.out, cal.mechanism, "planar-laplace-calibrated")
    print(json.dumps(summary))
    return 0


def _load_priors(cfg: Config, paths, n: int) -> list[tuple[str | None, str, Prior]]:
    """(user_id, prior name, prior) triples from files or the config's ``priors`` entry."""
    entries = list(paths) if paths else cfg.data.get("priors", ["uniform"])
    out = []
    for entry in entries:
        if entry == "uniform":
            out.append((None, "uniform", Prior.uniform(n)))
            continue
        data = _read_json(cfg.path(entry)) if isinstance(entry, str) and not entry.endswith(".csv") \
            else entry
        if isinstance(data, dict) and "priors" in data:  # ingest output
            for p in data["priors"]:
                prior = load_prior(p["weights"], n)
                out.append((p["user_id"], p["period"], prior))
        elif isinstance(entry, str) and entry.endswith(".csv"):
            out.append((None, Path(entry).stem, load_prior(cfg.path(entry), n)))
        else:
            prior = load_prior(data, n)
            out.append((None, prior.name or str(entry), prior))
    return out


def cmd_eval(cfg: Config, mechanism_paths=(), prior_paths=()) -> int:
    paths = list(mechanism_paths) or cfg.data.get("mechanisms", [])
    if not paths:
        raise InputError("no mechanisms to evaluate")
    mechs = []
    for p in paths:
        data = _read_json(cfg.path(p))
        locs = None if "locations" in data else cfg.locations()
        mechs.append(Mechanism.from_json(data, locs))
    locs = mechs[0].locations
    for m, p in zip(mechs, paths):
        if m.locations != locs:
            raise InputError(f"{p}: location set differs from {paths[0]}")
    dQ, dA, dX = cfg.metric("dQ", locs), cfg.metric("dA", locs), cfg.metric("dX", locs)
    priors = _load_priors(cfg, prior_paths, len(locs))
    rows = []
    for m in mechs:
        if m.kind in ("optql-exact", "optql-spanner", "exponential"):
            report = verify_dx_privacy(m, dX.scaled(m.provenance.epsilon))
            if not report.satisfied:
                raise InvariantError(f"{m.kind} mechanism violates its own privacy level "
                                     f"at triple {report.worst_triple}")
        for user, name, prior in priors:
            rows.append(evaluate(m, prior, dQ, dA, dX, name, user))
    write_atomic(cfg.out / "report.csv", rows_to_csv(rows))
    _write_json(cfg.out / "report.json", rows_to_json(rows))
    log.info("wrote %d report rows", len(rows))
    return 0


def cmd_ingest(cfg: Config, traces=None) -> int:
    ing = dict(cfg.data.get("ingest", {}))
    src = traces or ing.get("traces")
    if not src:
        raise InputError("no trace path given")
    if "grid" not in ing or "ref" not in ing:
        raise InputError("ingest config needs 'grid' and 'ref' (lat, lon)")
    grid = GridSpec.from_json(ing["grid"])
    load = read_traces(cfg.path(src))
    window = ing.get("window_days", 90)
    result = run_pipeline(load.points, grid, tuple(ing["ref"]), cfg.periods(),
                          float(ing.get("utc_offset_hours", 0.0)), int(ing.get("min_points", 20)),
                          int(ing.get("per_user_top", 30)), int(ing.get("keep", 50)),
                          None if window is None else float(window))
    funnel = dict(result.funnel, malformed_lines=len(load.malformed))
    out = cfg.out
    _write_json(out / "counts.json", result.table.to_json())
    _write_json(out / "funnel.json", funnel)
    _write_json(out / "priors.json", priors_to_json(result.priors, result.selection))
    write_atomic(out / "priors.csv", priors_to_csv(result.priors, result.selection))
    if result.selection.locations is not None:
        _write_json(out / "regions.json", result.selection.locations.to_json())
    print(json.dumps(funnel))
    if funnel["users_total"] == 0:
        log.warning("no users found in %s", src)
        return 1
    if funnel["users_final"] == 0:
        log.warning("no user passed the filters")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--epsilon", type=float, help="privacy level in 1/km")
    common.add_argument("--delta", type=float, help="spanner dilation (>= 1)")
    common.add_argument("--kind", choices=BUILD_KINDS, help="mechanism kind")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="optgeo", description="Optimal geo-indistinguishable mechanisms.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("spanner", parents=[common], help="build a greedy spanner and report stats")
    sub.add_parser("build", parents=[common], help="build a mechanism")
    sub.add_parser("calibrate", parents=[common], help="calibrate Planar Laplace to a target QL")
    p = sub.add_parser("eval", parents=[common], help="evaluate mechanisms under priors")
    p.add_argument("--mechanism", action="append", default=[], help="mechanism JSON (repeatable)")
    p.add_argument("--prior", action="append", default=[], help="prior JSON/CSV (repeatable)")
    p = sub.add_parser("ingest", parents=[common], help="traces to priors and popular regions")
    p.add_argument("traces", nargs="?", help="trace CSV file or GeoLife directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = Config.load(args.config, args)
        if args.command == "spanner":
            return cmd_spanner(cfg)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.mechanism, args.prior)
        return cmd_ingest(cfg, args.traces)
    except OptGeoError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.error("input error: %s", exc)
        return 1
    except FloatingPointError as exc:
        log.error("numeric failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
