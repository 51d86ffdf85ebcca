"""In-repo LP (simplex) and MILP (branch-and-bound) back-end."""
from ._kernel import BACKEND
from .lp import (DEFAULT_TOLERANCES, EQ, GE, LE, LpProblem, NumericalFailure,
                 SolveResult, SolverError, Status, TimeBudgetExceeded,
                 Tolerances, solve_lp)
from .milp import LinearModel, MilpProblem, encode_relu, solve_milp, write_lp

__all__ = [
    "BACKEND", "DEFAULT_TOLERANCES", "EQ", "GE", "LE", "LinearModel",
    "LpProblem", "MilpProblem", "NumericalFailure", "SolveResult",
    "SolverError", "Status", "TimeBudgetExceeded", "Tolerances",
    "encode_relu", "solve_lp", "solve_milp", "write_lp",
]
