"""MILP model, dense simplex, branch and bound and LP-file exchange."""

from .bnb import (STATUS_INFEASIBLE, STATUS_LIMIT, STATUS_OPTIMAL, SolverConfig, SolverError,
                  SolverResult, solve)
from .lpfile import MissingValuesWarning, SolutionFormatError, export_lp, import_solution, parse_solution
from .model import BINARY, CONTINUOUS, EQ, GE, LE, LinConstraint, MilpModel, MilpVar
from .simplex import BoundedSimplex, LPResult, SimplexBreakdown, lp_relax_solve

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "BoundedSimplex", "LPResult", "LinConstraint",
    "MilpModel", "MilpVar", "MissingValuesWarning", "STATUS_INFEASIBLE", "STATUS_LIMIT",
    "STATUS_OPTIMAL", "SimplexBreakdown", "SolutionFormatError", "SolverConfig", "SolverError",
    "SolverResult", "export_lp", "import_solution", "lp_relax_solve", "parse_solution", "solve",
]
