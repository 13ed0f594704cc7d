"""Auxiliary-space iterative solvers for d*d source and eigenvalue problems
on structured cubic meshes of the de Rham complex."""

from .auxscheme import (
    ClassifiedEigenpair,
    EigenType,
    SolverConfig,
    SourceSolution,
    classify_eigenpair,
    residual_propagation_check,
    solve_eigen,
    solve_source,
    spectral_radius_bound,
)
from .fem import ComplexOperators, USpec, build_auxiliary_matrix, build_operators
from .krylov import EigenReport, SolveReport, cg, lobpcg
from .mesh import DomainKind, StructuredMesh, build_mesh, coarse_fine_map, incidence
from .precond import ILU0Preconditioner, MGPreconditioner, MgHierarchy, SAITPreconditioner

__version__ = "0.1.0"

__all__ = [
    "ClassifiedEigenpair",
    "ComplexOperators",
    "DomainKind",
    "EigenReport",
    "EigenType",
    "ILU0Preconditioner",
    "MGPreconditioner",
    "MgHierarchy",
    "SAITPreconditioner",
    "SolveReport",
    "SolverConfig",
    "SourceSolution",
    "StructuredMesh",
    "USpec",
    "build_auxiliary_matrix",
    "build_mesh",
    "build_operators",
    "cg",
    "classify_eigenpair",
    "coarse_fine_map",
    "incidence",
    "lobpcg",
    "residual_propagation_check",
    "solve_eigen",
    "solve_source",
    "spectral_radius_bound",
]
