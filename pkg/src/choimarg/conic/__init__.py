"""Block semidefinite programming: program container, solver and SDPA interchange."""
from .program import Block, ConicProgram, ConicSolution, ProgramBuilder, Status
from .sdpa import export_sdpa, import_sdpa, parse_sdpa, realify_program, write_sdpa
from .solver import SolverOptions, presolve, solve

__all__ = [
    "Block",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "Status",
    "SolverOptions",
    "solve",
    "presolve",
    "export_sdpa",
    "import_sdpa",
    "parse_sdpa",
    "realify_program",
    "write_sdpa",
]
