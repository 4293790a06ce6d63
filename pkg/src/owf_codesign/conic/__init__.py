"""Conic program representation, projections and the embedded solver."""

from .cones import NONNEG, RSOC, SOC, ZERO, Cone, ProductCone, in_cone, project_cone
from .program import (ConicProgram, dump_program, load_program, make_program,
                      reformulate_quadratic)
from .simplex import project_simplex
from .solver import (INFEASIBLE, MAX_ITERATIONS, OPTIMAL, UNBOUNDED, Solution,
                     SolverConfig, SolverError, residuals, solve)

__all__ = [
    "Cone", "ProductCone", "ZERO", "NONNEG", "SOC", "RSOC", "in_cone",
    "project_cone", "ConicProgram", "make_program", "reformulate_quadratic",
    "dump_program", "load_program", "project_simplex", "Solution",
    "SolverConfig", "SolverError", "solve", "residuals", "OPTIMAL",
    "MAX_ITERATIONS", "INFEASIBLE", "UNBOUNDED",
]
