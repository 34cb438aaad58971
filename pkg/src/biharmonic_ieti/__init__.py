"""Multi-patch isogeometric plate solver with an IETI-DP domain decomposition."""
from .domains import builtin_domain, manufactured_solution, source_function
from .exceptions import IetiError
from .ieti import IetiResult, IetiSystem, SolverConfig, monolithic_solve, solve

__all__ = [
    "IetiError",
    "IetiResult",
    "IetiSystem",
    "SolverConfig",
    "builtin_domain",
    "manufactured_solution",
    "monolithic_solve",
    "solve",
    "source_function",
]
__version__ = "0.1.0"
