"""Sparse linear program container and its JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import InputError, SolverError

FEAS_TOL = 1e-7
BOUND_TOL = 1e-9

STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit")


def _csr(rows, num_vars) -> sp.csr_matrix:
    if rows is None:
        return sp.csr_matrix((0, num_vars))
    if sp.issparse(rows):
        return sp.csr_matrix(rows, dtype=float)
    return sp.csr_matrix(np.asarray(rows, dtype=float).reshape(-1, num_vars))


@dataclass(eq=False)
class LpModel:
    """``sense`` c.v subject to A_le v <= b_le, A_eq v = b_eq, lower <= v <= upper."""

    num_vars: int
    objective: np.ndarray
    A_le: sp.csr_matrix = None
    b_le: np.ndarray = None
    A_eq: sp.csr_matrix = None
    b_eq: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    names: list[str] | None = None
    sense: str = "min"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(self.num_vars)
        self.num_vars = n
        self.objective = np.asarray(self.objective, dtype=float).reshape(n)
        self.A_le = _csr(self.A_le, n)
        self.A_eq = _csr(self.A_eq, n)
        self.b_le = np.zeros(0) if self.b_le is None else np.asarray(self.b_le, dtype=float).ravel()
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.sense not in ("min", "max"):
            raise InputError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.A_le.shape != (len(self.b_le), n) or self.A_eq.shape != (len(self.b_eq), n):
            raise InputError("constraint matrix and right-hand side sizes disagree")
        if len(self.lower) != n or len(self.upper) != n:
            raise InputError("bound vectors must have num_vars entries")
        for arr in (self.objective, self.A_le.data, self.A_eq.data, self.b_le, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise InputError("LP coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise InputError("lower bound above upper bound")
        if self.names is not None and len(self.names) != n:
            raise InputError("names must have num_vars entries")

    @property
    def num_le(self) -> int:
        return self.A_le.shape[0]

    @property
    def num_eq(self) -> int:
        return self.A_eq.shape[0]

    def evaluate(self, values) -> float:
        return float(self.objective @ np.asarray(values, dtype=float))

    def violation(self, values) -> tuple[float, float]:
        """Largest (row, bound) violation of ``values``."""
        v = np.asarray(values, dtype=float)
        row = 0.0
        if self.num_le:
            row = max(row, float(np.max(self.A_le @ v - self.b_le)))
        if self.num_eq:
            row = max(row, float(np.max(np.abs(self.A_eq @ v - self.b_eq))))
        bound = max(0.0, float(np.max(self.lower - v, initial=0.0)),
                    float(np.max(v - self.upper, initial=0.0)))
        return max(row, 0.0), bound

    def to_json(self) -> dict:
        def rows(A, b):
            out = []
            for k in range(A.shape[0]):
                lo, hi = A.indptr[k], A.indptr[k + 1]
                out.append({"coefs": [[int(i), float(c)] for i, c in zip(A.indices[lo:hi], A.data[lo:hi])],
                            "rhs": float(b[k])})
            return out

        def bound_list(arr):
            return [None if not math.isfinite(x) else float(x) for x in arr]

        nz = np.flatnonzero(self.objective)
        data = {
            "num_vars": self.num_vars,
            "sense": self.sense,
            "objective": [[int(i), float(self.objective[i])] for i in nz],
            "le_rows": rows(self.A_le, self.b_le),
            "eq_rows": rows(self.A_eq, self.b_eq),
            "lower_bounds": bound_list(self.lower),
        }
        if np.any(np.isfinite(self.upper)):
            data["upper_bounds"] = bound_list(self.upper)
        if self.names is not None:
            data["names"] = list(self.names)
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> "LpModel":
        n = int(data["num_vars"])
        c = np.zeros(n)
        for i, coef in data.get("objective", []):
            c[int(i)] += float(coef)

        def rows(items):
            r, cidx, vals, rhs = [], [], [], []
            for k, row in enumerate(items):
                for i, coef in row["coefs"]:
                    if not 0 <= int(i) < n:
                        raise InputError(f"row {k} references variable {i} >= num_vars")
                    r.append(k)
                    cidx.append(int(i))
                    vals.append(float(coef))
                rhs.append(float(row["rhs"]))
            A = sp.csr_matrix((vals, (r, cidx)), shape=(len(items), n))
            return A, np.array(rhs)

        A_le, b_le = rows(data.get("le_rows", []))
        A_eq, b_eq = rows(data.get("eq_rows", []))

        def bounds(key, missing, unbounded):
            raw = data.get(key)
            if raw is None:
                return np.full(n, missing)
            return np.array([unbounded if x is None else float(x) for x in raw])

        return cls(n, c, A_le, b_le, A_eq, b_eq, bounds("lower_bounds", 0.0, -np.inf),
                   bounds("upper_bounds", np.inf, np.inf), data.get("names"), data.get("sense", "min"))


@dataclass
class LpSolution:
    status: str
    objective_value: float
    values: np.ndarray
    iterations: int = 0
    backend: str = "simplex"
    route: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def require_optimal(self) -> "LpSolution":
        if not self.optimal:
            raise SolverError(f"LP not solved to optimality: {self.status}", status=self.status)
        return self
