"""Linear model container, dense simplex, branch-and-bound and MPS export."""

from .bnb import Propagator, branch_and_bound, solve_milp
from .lp import solve_lp
from .model import (
    EQ, GAP_REACHED, GE, INF, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED,
    Indicator, LinearModel, ModelError, SolveReport, SolverError,
)
from .mps import export_mps
from .simplex import dual_bound, simplex

__all__ = [
    "LinearModel", "SolveReport", "Indicator", "ModelError", "SolverError",
    "solve_lp", "solve_milp", "branch_and_bound", "export_mps", "simplex", "dual_bound",
    "Propagator", "INF", "LE", "EQ", "GE",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "GAP_REACHED", "ITERATION_LIMIT",
]
