"""Generic block semidefinite programming: containers, solver and SDPA I/O."""
from .embed import embed_complex, embed_hermitian, split_free_scalars, standardize, unembed_hermitian
from .problem import Block, Constraint, LinearForm, SdpProblem, SdpSolution
from .sdpa import SdpaParseError, export_sdpa, import_sdpa
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, SolverError, independent_rows, solve

__all__ = [
    "Block", "Constraint", "LinearForm", "SdpProblem", "SdpSolution", "SolverError",
    "DEFAULT_TOL", "DEFAULT_MAX_ITER", "solve", "independent_rows",
    "embed_complex", "embed_hermitian", "unembed_hermitian", "split_free_scalars", "standardize",
    "export_sdpa", "import_sdpa", "SdpaParseError",
]
