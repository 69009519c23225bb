"""Mechanism linear programs, a revised simplex solver and duality checks."""
from .build import build_dual_spanner, build_primal_exact, build_primal_spanner, check_prior
from .model import LpModel, LpSolution
from .solve import backends, check_strong_duality, register_backend, solve

__all__ = [
    "LpModel", "LpSolution", "backends", "build_dual_spanner", "build_primal_exact",
    "build_primal_spanner", "check_prior", "check_strong_duality", "register_backend", "solve",
]
