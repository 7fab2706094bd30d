"""Lowest-order virtual element solver for miscible displacement in porous media."""
from .harness import ErrorRow, compute_errors, compute_order, export_fields, run_convergence, simulate
from .mesh import FAMILIES, PolyMesh, generate
from .problems import get_problem
from .solver import Discretization, SimulationConfig, SolverError

__all__ = [
    "Discretization", "ErrorRow", "FAMILIES", "PolyMesh", "SimulationConfig", "SolverError",
    "compute_errors", "compute_order", "export_fields", "generate", "get_problem",
    "run_convergence", "simulate",
]
__version__ = "0.1.0"
