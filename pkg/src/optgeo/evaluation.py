"""Utility and privacy of mechanisms under a prior.

Quality loss is the expected distance between true and reported location.
Adversary error is the expected distance after the Bayesian adversary's
best remapping, which is always a deterministic map.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geo import Metric, as_matrix
from .mech import Mechanism, Provenance

ROW_TOL = 1e-9


def _k(mech) -> np.ndarray:
    return mech.matrix if isinstance(mech, Mechanism) else np.asarray(mech, dtype=float)


def _w(pi) -> np.ndarray:
    return np.asarray(getattr(pi, "weights", pi), dtype=float).ravel()


def _dims(k, w, d):
    n = len(w)
    if k.shape != (n, n) or d.shape != (n, n):
        raise InputError(f"dimension mismatch: mechanism {k.shape}, prior {n}, metric {d.shape}")


def expected_distance(mech, pi, d) -> float:
    """sum_{x,z} pi_x k_xz d(x, z)."""
    k, w, dm = _k(mech), _w(pi), as_matrix(d)
    _dims(k, w, dm)
    return float(np.sum(w[:, None] * k * dm))


def quality_loss(mech, pi, dQ) -> float:
    return expected_distance(mech, pi, dQ)


@dataclass(frozen=True, eq=False)
class Remapping:
    matrix: np.ndarray
    guess: np.ndarray | None = None  # x_hat for each z when deterministic

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise InputError("remapping must be square")
        if np.any(h < 0) or np.max(np.abs(h.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InputError("remapping must be row-stochastic")
        object.__setattr__(self, "matrix", h)

    @classmethod
    def deterministic(cls, guess) -> "Remapping":
        g = np.asarray(guess, dtype=int)
        h = np.zeros((len(g), len(g)))
        h[np.arange(len(g)), g] = 1.0
        return cls(h, g)


def optimal_remap(mech, pi, dA) -> Remapping:
    """For each report z, the guess minimising sum_x pi_x k_xz dA(x, guess); ties to lowest index.

    A report that never occurs (zero probability under ``pi``) gets the best
    guess from the prior alone; it carries no weight in the expected error.
    """
    k, w, d = _k(mech), _w(pi), as_matrix(dA)
    _dims(k, w, d)
    joint = k * w[:, None]
    # cost[z, g] = sum_x pi_x k_xz dA(x, g)
    cost = joint.T @ d
    guess = np.argmin(cost, axis=1)
    unreachable = joint.sum(axis=0) == 0
    if np.any(unreachable):
        guess[unreachable] = int(np.argmin(w @ d))
    return Remapping.deterministic(guess)


def adv_error(mech, pi, dA) -> float:
    h = optimal_remap(mech, pi, dA)
    return expected_distance(_k(mech) @ h.matrix, pi, dA)


def compose(mech: Mechanism, remap) -> Mechanism:
    """The mechanism K H: report with K, then post-process with H."""
    h = remap.matrix if isinstance(remap, Remapping) else np.asarray(remap, dtype=float)
    k = _k(mech)
    if h.shape != k.shape:
        raise InputError(f"cannot compose {k.shape} mechanism with {h.shape} remapping")
    kh = k @ h
    kh /= kh.sum(axis=1, keepdims=True)
    return Mechanism(mech.locations, np.clip(kh, 0.0, 1.0), Provenance("external"))


@dataclass(frozen=True)
class PrivacyReport:
    effective_epsilon: float
    worst_triple: tuple[int, int, int] | None
    satisfied: bool
    max_excess: float  # largest k_xz / (e^{d} k_x'z) over triples, 1.0 when tight

    @property
    def satisfied_at(self) -> bool:
        return self.satisfied


def verify_dx_privacy(mech, dX_scaled, slack: float = 1e-6) -> PrivacyReport:
    """Check k_xz <= e^{dX(x,x')} k_x'z (1 + slack) over all ordered triples.

    ``effective_epsilon`` is max ln(k_xz / k_x'z) / d(x, x') using the unscaled
    distance when ``dX_scaled`` is a Metric (so it reads in 1/km for a scaled
    Euclidean metric) and the given matrix otherwise. A ratio with both
    entries zero counts as 0; exactly one zero counts as infinite.
    """
    k = _k(mech)
    if isinstance(dX_scaled, Metric):
        d_level, d_base = dX_scaled.matrix, dX_scaled.base
    else:
        d_level = d_base = np.asarray(dX_scaled, dtype=float)
    n = len(k)
    if d_level.shape != (n, n):
        raise InputError("metric does not match the mechanism")
    # ratio[x, x', z] = k[x, z] / k[x', z]
    num = k[:, None, :]
    den = k[None, :, :]
    pair = ~np.eye(n, dtype=bool)
    pos = d_base > 0
    mask = (pair & pos)[:, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = np.where((num == 0) & (den == 0), 0.0,
                            np.where(den == 0, np.inf, np.log(np.where(num > 0, num, 1.0) / np.where(den > 0, den, 1.0))))
        logratio = np.where(num == 0, np.where(den == 0, 0.0, -np.inf), logratio)
        per = logratio / np.where(pos, d_base, 1.0)[:, :, None]
        per = np.where(mask, per, -np.inf)
        bound = np.exp(np.minimum(d_level, 700.0))[:, :, None] * den
        excess = np.where(mask | (pair[:, :, None] & (d_level[:, :, None] == 0)),
                          np.where(num == 0, 0.0, np.where(bound > 0, num / bound, np.inf)), 0.0)
    if n < 2:
        return PrivacyReport(0.0, None, True, 0.0)
    flat = int(np.argmax(excess))
    worst = tuple(int(v) for v in np.unravel_index(flat, excess.shape))
    max_excess = float(excess.flat[flat])
    eff = float(np.max(per))
    eff = max(eff, 0.0)
    return PrivacyReport(eff, worst, max_excess <= 1.0 + slack, max_excess)


REPORT_FIELDS = ("user_id", "prior_name", "mechanism_kind", "epsilon", "delta",
                 "ql_km", "adv_error_km", "effective_epsilon")


def evaluate(mech: Mechanism, pi, dQ, dA, dX, prior_name: str = "", user_id: str | None = None) -> dict:
    """One report row: QL, AdvError and effective epsilon of ``mech`` under ``pi``."""
    report = verify_dx_privacy(mech, dX)
    return {
        "user_id": user_id,
        "prior_name": prior_name,
        "mechanism_kind": mech.kind,
        "epsilon": mech.provenance.epsilon,
        "delta": mech.provenance.delta,
        "ql_km": quality_loss(mech, pi, dQ),
        "adv_error_km": adv_error(mech, pi, dA),
        "effective_epsilon": report.effective_epsilon,
    }


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        out = {}
        for key in REPORT_FIELDS:
            v = row.get(key)
            if v is None:
                out[key] = ""
            elif isinstance(v, float):
                out[key] = "inf" if math.isinf(v) else f"{v:.12g}"
            else:
                out[key] = v
        w.writerow(out)
    return buf.getvalue()


def rows_to_json(rows: list[dict]) -> list[dict]:
    out = []
    for row in rows:
        out.append({k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
                    for k, v in row.items()})
    return out
