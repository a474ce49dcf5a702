"""Backward martingale optimal transport with the covariance cost on discrete measures."""

from .closed_form import EllipticalSpec, elliptical_solution
from .dual import DualConfig, PotentialValues, dual_solve, recover_G
from .equilibrium import NoMapEquilibrium, extract_equilibrium, verify_best_response, verify_efficiency
from .geometry import MonotoneGraph
from .measures import DiscreteMeasure, Plan, cost, discretize_gaussian
from .oracle import map_solve_exact, plan_search
from .primal import SolveConfig, SolveReport, certify, primal_solve, solve
from .verification import random_instance, theorem_suite

__all__ = [
    "EllipticalSpec",
    "elliptical_solution",
    "DualConfig",
    "PotentialValues",
    "dual_solve",
    "recover_G",
    "NoMapEquilibrium",
    "extract_equilibrium",
    "verify_best_response",
    "verify_efficiency",
    "MonotoneGraph",
    "DiscreteMeasure",
    "Plan",
    "cost",
    "discretize_gaussian",
    "map_solve_exact",
    "plan_search",
    "SolveConfig",
    "SolveReport",
    "certify",
    "primal_solve",
    "solve",
    "random_instance",
    "theorem_suite",
]
