"""Linear programs whose optimum is the QL-optimal dX-private mechanism.

Variable ``x * n + z`` is k_xz, the probability of reporting z from x.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp

from ..errors import InputError
from ..geo import LocationSet, as_matrix
from .model import LpModel

log = logging.getLogger(__name__)

PRIOR_TOL = 1e-9
# e^{eps*d} overflows doubles near 709; well before that the rows are
# numerically vacuous and the program badly scaled
EXPONENT_WARN = 40.0


def check_prior(pi, n: int) -> np.ndarray:
    w = np.asarray(getattr(pi, "weights", pi), dtype=float).ravel()
    if len(w) != n:
        raise InputError(f"prior has {len(w)} entries, expected {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InputError("prior weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > PRIOR_TOL:
        raise InputError(f"prior sums to {w.sum()!r}, not 1")
    return w


def _exp_factor(exponent: np.ndarray) -> np.ndarray:
    top = float(np.max(exponent, initial=0.0))
    if top > 700:
        raise InputError(f"epsilon * distance reaches {top:.1f}; e^(epsilon d) overflows")
    if top > EXPONENT_WARN:
        log.warning("epsilon * distance reaches %.1f; the LP is badly scaled", top)
    return np.exp(exponent)


def _objective(pi: np.ndarray, dq: np.ndarray) -> np.ndarray:
    return (pi[:, None] * dq).ravel()


def _stochastic_rows(n: int) -> sp.csr_matrix:
    # sum_z k_xz = 1 for every x
    rows = np.repeat(np.arange(n), n)
    return sp.csr_matrix((np.ones(n * n), (rows, np.arange(n * n))), shape=(n, n * n))


def _pair_rows(n: int, src: np.ndarray, dst: np.ndarray, coef: np.ndarray) -> sp.csr_matrix:
    """Rows k_{src,z} - coef * k_{dst,z} <= 0, ordered pair-major then z."""
    P = len(src)
    z = np.tile(np.arange(n), P)
    s = np.repeat(src, n)
    t = np.repeat(dst, n)
    cf = np.repeat(coef, n)
    r = np.arange(P * n)
    data = np.concatenate([np.ones(P * n), -cf])
    rows = np.concatenate([r, r])
    cols = np.concatenate([s * n + z, t * n + z])
    return sp.csr_matrix((data, (rows, cols)), shape=(P * n, n * n))


def _check_inputs(locs, epsilon, pi, dQ):
    n = len(locs)
    if not (epsilon > 0) or not math.isfinite(epsilon):
        raise InputError(f"epsilon must be positive, got {epsilon!r}")
    w = check_prior(pi, n)
    dq = as_matrix(dQ)
    if dq.shape != (n, n):
        raise InputError("quality metric does not match the location set")
    return n, w, dq


def build_primal_exact(locs: LocationSet, dX, epsilon: float, pi, dQ) -> LpModel:
    """One privacy row per ordered triple (x, x', z) with x != x'."""
    n, w, dq = _check_inputs(locs, epsilon, pi, dQ)
    dx = as_matrix(dX)
    if dx.shape != (n, n):
        raise InputError("privacy metric does not match the location set")
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    coef = _exp_factor(epsilon * dx[src, dst])
    A_le = _pair_rows(n, src, dst, coef)
    return LpModel(n * n, _objective(w, dq), A_le, np.zeros(A_le.shape[0]),
                   _stochastic_rows(n), np.ones(n),
                   meta={"kind": "primal-exact", "n": n, "epsilon": epsilon})


def _oriented(spanner):
    e = np.asarray(spanner.edges, dtype=np.int64).reshape(-1, 2)
    wt = np.asarray(spanner.weights, dtype=float)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    return src, dst, np.concatenate([wt, wt])


def _check_spanner(locs, spanner, delta):
    if spanner.locations != locs:
        raise InputError("spanner was built over a different location set")
    if not (delta >= 1.0):
        raise InputError(f"dilation must be >= 1, got {delta!r}")


def build_primal_spanner(locs: LocationSet, spanner, epsilon: float, delta: float, pi, dQ) -> LpModel:
    """Privacy rows only along spanner edges, at level epsilon/delta on edge weights."""
    n, w, dq = _check_inputs(locs, epsilon, pi, dQ)
    _check_spanner(locs, spanner, delta)
    src, dst, wt = _oriented(spanner)
    coef = _exp_factor((epsilon / delta) * wt)
    A_le = _pair_rows(n, src, dst, coef)
    return LpModel(n * n, _objective(w, dq), A_le, np.zeros(A_le.shape[0]),
                   _stochastic_rows(n), np.ones(n),
                   meta={"kind": "primal-spanner", "n": n, "epsilon": epsilon, "delta": delta,
                         "edges": len(spanner.edges)})


def build_dual_spanner(locs: LocationSet, spanner, epsilon: float, delta: float, pi, dQ) -> LpModel:
    """Dual of the spanner program.

    Variables: a_{x x' z} >= 0 for every oriented edge (x, x') and z, stored at
    ``o * n + z`` for orientation index o; then free b_x at ``2|E| n + x``.
    Maximize sum_x b_x subject to, for every (x, z),
    b_x + sum_{x' ~ x} (e^{(eps/delta) w(x,x')} a_{x' x z} - a_{x x' z}) <= pi_x dQ(x, z).
    """
    n, w, dq = _check_inputs(locs, epsilon, pi, dQ)
    _check_spanner(locs, spanner, delta)
    src, dst, wt = _oriented(spanner)
    coef = _exp_factor((epsilon / delta) * wt)
    O = len(src)
    n_a = O * n
    z = np.tile(np.arange(n), O)
    s = np.repeat(src, n)
    t = np.repeat(dst, n)
    cf = np.repeat(coef, n)
    a_idx = np.arange(n_a)
    # a_{s t z}: -1 in row (s, z), +e^w in row (t, z)
    rows = np.concatenate([s * n + z, t * n + z, np.repeat(np.arange(n), n) * n + np.tile(np.arange(n), n)])
    cols = np.concatenate([a_idx, a_idx, n_a + np.repeat(np.arange(n), n)])
    data = np.concatenate([-np.ones(n_a), cf, np.ones(n * n)])
    A_le = sp.csr_matrix((data, (rows, cols)), shape=(n * n, n_a + n))
    c = np.concatenate([np.zeros(n_a), np.ones(n)])
    lower = np.concatenate([np.zeros(n_a), np.full(n, -np.inf)])
    return LpModel(n_a + n, c, A_le, _objective(w, dq), lower=lower, sense="max",
                   meta={"kind": "dual-spanner", "n": n, "epsilon": epsilon, "delta": delta,
                         "edges": len(spanner.edges)})
