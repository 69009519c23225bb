"""Solve an LpModel: bound normalisation, primal or dual route, certification."""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import SolverError
from .model import BOUND_TOL, FEAS_TOL, LpModel, LpSolution
from .simplex import SingularBasis, simplex_standard

log = logging.getLogger(__name__)

_BACKENDS: dict[str, Callable] = {}


def register_backend(name: str, fn: Callable[[LpModel, dict], LpSolution]) -> None:
    """Plug in an external solver taking (model, options) and returning an LpSolution."""
    _BACKENDS[name] = fn


def backends() -> list[str]:
    return ["simplex", *sorted(_BACKENDS)]


class _Normalized:
    """min c.x s.t. A_le x <= b_le, A_eq x = b_eq, x >= 0, with v = shift + S x."""

    def __init__(self, model: LpModel):
        n = model.num_vars
        lo, hi = model.lower, model.upper
        cols, rows, vals = [], [], []
        shift = np.zeros(n)
        extra_rows, extra_rhs = [], []
        k = 0
        for j in range(n):
            if np.isfinite(lo[j]):
                shift[j] = lo[j]
                rows.append(j); cols.append(k); vals.append(1.0)
                if np.isfinite(hi[j]):
                    extra_rows.append(k)
                    extra_rhs.append(hi[j] - lo[j])
                k += 1
            elif np.isfinite(hi[j]):
                shift[j] = hi[j]
                rows.append(j); cols.append(k); vals.append(-1.0)
                k += 1
            else:
                rows += [j, j]; cols += [k, k + 1]; vals += [1.0, -1.0]
                k += 2
        S = sp.csc_matrix((vals, (rows, cols)), shape=(n, k))
        self.S, self.shift, self.k = S, shift, k
        sign = -1.0 if model.sense == "max" else 1.0
        self.c = sign * (S.T @ model.objective)
        A_le = sp.csr_matrix(model.A_le @ S)
        b_le = model.b_le - model.A_le @ shift
        if extra_rows:
            ub = sp.csr_matrix((np.ones(len(extra_rows)), (np.arange(len(extra_rows)), extra_rows)),
                               shape=(len(extra_rows), k))
            A_le = sp.vstack([A_le, ub], format="csr")
            b_le = np.concatenate([b_le, extra_rhs])
        self.A_le, self.b_le = A_le, b_le
        self.A_eq = sp.csr_matrix(model.A_eq @ S)
        self.b_eq = model.b_eq - model.A_eq @ shift

    def original(self, x):
        return self.shift + self.S @ x


def _primal_route(nm: _Normalized, max_iter):
    m_le, m_eq = nm.A_le.shape[0], nm.A_eq.shape[0]
    slack = sp.vstack([sp.identity(m_le, format="csr"), sp.csr_matrix((m_eq, m_le))], format="csr")
    A = sp.hstack([sp.vstack([nm.A_le, nm.A_eq]), slack], format="csc")
    b = np.concatenate([nm.b_le, nm.b_eq])
    c = np.concatenate([nm.c, np.zeros(m_le)])
    res = simplex_standard(A, b, c, max_iter=max_iter)
    return res.status, res.x[:nm.k], res.iterations


def _dual_route(nm: _Normalized, max_iter):
    # dual: max b_le.y + b_eq.w, A_le^T y + A_eq^T w <= c, y <= 0, w free;
    # with y = -u, w = wp - wm and a slack per primal column this is a standard
    # form whose row duals are -x.
    k = nm.k
    ATle = sp.csr_matrix(nm.A_le.T)
    ATeq = sp.csr_matrix(nm.A_eq.T)
    A = sp.hstack([-ATle, ATeq, -ATeq, sp.identity(k, format="csr")], format="csc")
    cost = np.concatenate([nm.b_le, -nm.b_eq, nm.b_eq, np.zeros(k)])
    res = simplex_standard(A, nm.c, cost, max_iter=max_iter)
    if res.status == "optimal":
        return "optimal", -res.y, res.iterations
    if res.status == "unbounded":
        return "infeasible", np.zeros(k), res.iterations
    if res.status == "infeasible":
        # primal is unbounded or infeasible; let the primal route decide
        status, x, it = _primal_route(nm, max_iter)
        return status, x, res.iterations + it
    return res.status, np.zeros(k), res.iterations


def _certify(model: LpModel, v: np.ndarray) -> np.ndarray:
    # snap values sitting within the bound tolerance onto the bound
    lo, hi = model.lower, model.upper
    v = np.where((v < lo) & (v >= lo - BOUND_TOL), lo, v)
    v = np.where((v > hi) & (v <= hi + BOUND_TOL), hi, v)
    row, bound = model.violation(v)
    if row > FEAS_TOL or bound > BOUND_TOL:
        raise SolverError(f"solution failed certification: row violation {row:.3g}, "
                          f"bound violation {bound:.3g}", status="optimal")
    return v


def solve(model: LpModel, backend: str = "simplex", max_iter: int | None = None,
          route: str = "auto", **options) -> LpSolution:
    """Solve ``model``; raises SolverError only when an 'optimal' answer fails certification.

    ``route`` picks which of the primal or its dual the simplex runs on;
    'auto' takes whichever has fewer rows, which keeps the basis at
    |X|^2 x |X|^2 for mechanism programs with |X|^3 privacy rows.
    """
    if backend != "simplex":
        if backend not in _BACKENDS:
            raise SolverError(f"unknown LP backend {backend!r}; have {backends()}")
        sol = _BACKENDS[backend](model, dict(options, max_iter=max_iter))
        if sol.optimal:
            sol.values = _certify(model, sol.values)
        return sol
    nm = _Normalized(model)
    rows = nm.A_le.shape[0] + nm.A_eq.shape[0]
    if route == "auto":
        route = "dual" if rows > nm.k else "primal"
    if max_iter is None:
        max_iter = max(100000, 50 * (rows + nm.k))
    try:
        if route == "dual":
            status, x, iters = _dual_route(nm, max_iter)
        elif route == "primal":
            status, x, iters = _primal_route(nm, max_iter)
        else:
            raise ValueError(f"route must be auto, primal or dual, not {route!r}")
    except SingularBasis as exc:
        raise SolverError(f"basis factorization failed: {exc}", status="numerical") from exc
    values = nm.original(x)
    if status == "optimal":
        values = _certify(model, values)
        obj = model.evaluate(values)
    else:
        obj = float("nan")
    log.debug("simplex route=%s status=%s iterations=%d", route, status, iters)
    return LpSolution(status, obj, values, iters, "simplex", route)


def _highs(model: LpModel, options: dict) -> LpSolution:
    from scipy.optimize import linprog

    sign = -1.0 if model.sense == "max" else 1.0
    res = linprog(sign * model.objective,
                  A_ub=model.A_le if model.num_le else None, b_ub=model.b_le if model.num_le else None,
                  A_eq=model.A_eq if model.num_eq else None, b_eq=model.b_eq if model.num_eq else None,
                  bounds=list(zip(np.where(np.isfinite(model.lower), model.lower, None),
                                  np.where(np.isfinite(model.upper), model.upper, None))),
                  method=options.get("method", "highs"),
                  options={k: v for k, v in (("maxiter", options.get("max_iter")),) if v is not None})
    status = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}.get(res.status)
    if status is None:
        raise SolverError(f"HiGHS failed: {res.message}", status="numerical")
    values = res.x if res.x is not None else np.full(model.num_vars, np.nan)
    obj = model.evaluate(values) if status == "optimal" else float("nan")
    return LpSolution(status, obj, values, int(getattr(res, "nit", 0) or 0), "highs", "")


register_backend("highs", _highs)


def check_strong_duality(primal: LpSolution, dual: LpSolution, tol: float = 1e-6) -> bool:
    """|primal - dual| <= tol * (1 + |primal|) for two optimal solutions."""
    if not (primal.optimal and dual.optimal):
        raise SolverError("strong duality check needs two optimal solutions",
                          status=f"{primal.status}/{dual.status}")
    gap = abs(primal.objective_value - dual.objective_value)
    return gap <= tol * (1.0 + abs(primal.objective_value))
