"""Revised simplex method on sparse standard-form programs.

The basis is held as a sparse LU factorization (SuperLU) plus a product-form
eta file, refactorized periodically. Pricing is Devex (approximate
steepest edge); after a run of degenerate pivots the rule switches to Bland's
smallest-index rule, which cannot cycle, and switches back after the first
pivot that makes progress. Every choice is deterministic.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

OPT_TOL = 1e-9  # reduced cost
PIVOT_TOL = 1e-9
PHASE1_TOL = 1e-9
REFACTOR_EVERY = 64
BLAND_AFTER = 50
DEVEX_RESET = 1e6


class SingularBasis(RuntimeError):
    pass


class _Factor:
    """B^{-1} as LU(B0) followed by eta transformations."""

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        self.A = A
        self.m = A.shape[0]
        self.refactor(basis)

    def refactor(self, basis):
        B = self.A[:, basis].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        self.etas = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for r, u in self.etas:
            vr = v[r] / u[r]
            v -= vr * u
            v[r] = vr
        return v

    def btran(self, cb: np.ndarray) -> np.ndarray:
        w = np.array(cb, dtype=float)
        for r, u in reversed(self.etas):
            wr = w[r]
            w[r] = (wr - (w @ u - wr * u[r])) / u[r]
        return self.lu.solve(w, trans="T")

    def push(self, r: int, u: np.ndarray):
        self.etas.append((r, u))


def _column(A: sp.csc_matrix, j: int) -> np.ndarray:
    col = np.zeros(A.shape[0])
    lo, hi = A.indptr[j], A.indptr[j + 1]
    col[A.indices[lo:hi]] = A.data[lo:hi]
    return col


class CoreResult:
    __slots__ = ("status", "x", "y", "basis", "iterations")

    def __init__(self, status, x, y, basis, iterations):
        self.status = status
        self.x = x
        self.y = y
        self.basis = basis
        self.iterations = iterations


def _iterate(A, AT, b, c, basis, fac, allowed, max_iter, it0):
    """Primal simplex from a feasible basis. Returns (status, iterations).

    Reduced costs are updated from the pivot row each iteration and
    recomputed from scratch at every refactorization and before declaring
    optimality.
    """
    m, N = A.shape
    it = it0
    degenerate = 0
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    blocked = ~allowed
    weights = np.ones(N)

    def fresh():
        x = fac.ftran(b)
        np.maximum(x, 0.0, out=x)
        dd = c - AT @ fac.btran(c[basis])
        dd[is_basic] = 0.0
        dd[blocked] = 0.0
        return x, dd

    xB, d = fresh()
    while True:
        if it - it0 >= max_iter:
            return "iteration-limit", it
        if degenerate >= BLAND_AFTER:
            cand = np.flatnonzero(d < -OPT_TOL)
            q = int(cand[0]) if len(cand) else -1
        else:
            score = np.where(d < -OPT_TOL, d * d / weights, 0.0)
            q = int(np.argmax(score))
            if score[q] <= 0.0:
                q = -1
        if q < 0:
            xB, d = fresh()
            if np.all(d >= -OPT_TOL):
                return "optimal", it
            continue
        u = fac.ftran(_column(A, q))
        rows = np.flatnonzero(u > PIVOT_TOL)
        if len(rows) == 0:
            return "unbounded", it
        ratios = xB[rows] / u[rows]
        theta = ratios.min()
        ties = rows[ratios <= theta + 1e-12 * max(1.0, theta)]
        if len(ties) == 1:
            r = int(ties[0])
        elif degenerate >= BLAND_AFTER:
            r = int(ties[np.argmin(basis[ties])])
        else:
            # largest pivot among tied rows; then lowest variable index
            best = u[ties].max()
            near = ties[u[ties] >= best * (1 - 1e-12)]
            r = int(near[np.argmin(basis[near])])
        e = np.zeros(m)
        e[r] = 1.0
        alpha = AT @ fac.btran(e)
        arq = u[r]
        theta = xB[r] / arq
        xB -= theta * u
        xB[r] = theta
        leaving = basis[r]
        dq = d[q]
        d -= (dq / arq) * alpha
        wq = weights[q]
        np.maximum(weights, (alpha / arq) ** 2 * wq, out=weights)
        weights[leaving] = max(wq / (arq * arq), 1.0)
        if weights[leaving] > DEVEX_RESET or wq > DEVEX_RESET:
            weights.fill(1.0)
        is_basic[leaving] = False
        is_basic[q] = True
        basis[r] = q
        fac.push(r, u)
        d[is_basic] = 0.0
        d[blocked] = 0.0
        degenerate = degenerate + 1 if theta <= 1e-12 else 0
        it += 1
        if len(fac.etas) >= REFACTOR_EVERY:
            fac.refactor(basis)
            xB, d = fresh()


def simplex_standard(A, b, c, max_iter: int = 200000) -> CoreResult:
    """Minimize c.x subject to A x = b, x >= 0.

    Returns status, primal x, row duals y (so that c - A^T y >= 0 at an
    optimum) and the iteration count. Phase 1 adds artificial columns only for
    rows that lack a unit slack-like column.
    """
    A = sp.csc_matrix(A, dtype=float)
    m, N = A.shape
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    flip = np.where(b < 0, -1.0, 1.0)
    if np.any(flip < 0):
        A = sp.csc_matrix(sp.diags(flip) @ A)
        b = b * flip
    A.sort_indices()
    if m == 0:
        x = np.zeros(N)
        if np.any(c < -OPT_TOL):
            return CoreResult("unbounded", x, np.zeros(0), np.zeros(0, dtype=int), 0)
        return CoreResult("optimal", x, np.zeros(0), np.zeros(0, dtype=int), 0)

    # unit columns usable as an initial basis
    nnz = np.diff(A.indptr)
    basis = np.full(m, -1, dtype=np.int64)
    single = np.flatnonzero(nnz == 1)
    for j in single.tolist():
        r = A.indices[A.indptr[j]]
        if basis[r] < 0 and A.data[A.indptr[j]] == 1.0:
            basis[r] = j
    missing = np.flatnonzero(basis < 0)
    n_art = len(missing)
    if n_art:
        art = sp.csc_matrix((np.ones(n_art), (missing, np.arange(n_art))), shape=(m, n_art))
        A_full = sp.hstack([A, art], format="csc")
        basis[missing] = N + np.arange(n_art)
    else:
        A_full = A
    A_full.sort_indices()
    AT = sp.csr_matrix(A_full.T)
    Ntot = A_full.shape[1]
    allowed = np.ones(Ntot, dtype=bool)
    fac = _Factor(A_full, basis)
    iters = 0

    if n_art:
        c1 = np.zeros(Ntot)
        c1[N:] = 1.0
        status, iters = _iterate(A_full, AT, b, c1, basis, fac, allowed, max_iter, 0)
        if status == "iteration-limit":
            return CoreResult(status, np.zeros(N), np.zeros(m), basis, iters)
        fac.refactor(basis)
        xB = fac.ftran(b)
        infeas = float(np.sum(np.where(basis >= N, xB, 0.0)))
        if infeas > PHASE1_TOL * max(1.0, float(np.abs(b).max())):
            return CoreResult("infeasible", np.zeros(N), np.zeros(m), basis, iters)
        allowed[N:] = False
        # pivot remaining zero-level artificials out of the basis where possible
        for r in np.flatnonzero(basis >= N).tolist():
            e = np.zeros(m)
            e[r] = 1.0
            rho = fac.btran(e)
            alpha = AT[:N] @ rho
            is_basic = np.zeros(N, dtype=bool)
            is_basic[basis[basis < N]] = True
            alpha[is_basic] = 0.0
            j = int(np.argmax(np.abs(alpha)))
            if abs(alpha[j]) <= 1e-9:
                continue  # redundant row: artificial stays basic at zero
            u = fac.ftran(_column(A_full, j))
            basis[r] = j
            fac.push(r, u)
        fac.refactor(basis)

    c2 = np.zeros(Ntot)
    c2[:N] = c
    status, iters = _iterate(A_full, AT, b, c2, basis, fac, allowed, max_iter, iters)
    fac.refactor(basis)
    xB = fac.ftran(b)
    y = fac.btran(c2[basis])
    x = np.zeros(Ntot)
    x[basis] = xB
    return CoreResult(status, x[:N], y * flip, basis, iters)
