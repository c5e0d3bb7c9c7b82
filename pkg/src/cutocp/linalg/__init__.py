"""Sparse SPD linear algebra: CG, preconditioners, multigrid, condition estimates."""

from .krylov import SolveReport, cg_solve
from .multigrid import (
    MultigridHierarchy,
    MultigridPreconditioner,
    NestingError,
    galerkin_coarse,
    interface_corrected_gs_smooth,
    mg,
    prolongation,
)
from .precond import (
    Direct,
    Identity,
    Jacobi,
    Preconditioner,
    PrecondKind,
    SymmetricGaussSeidel,
    jacobi,
    make_preconditioner,
    sgs,
)
from .spectrum import ConditionEstimate, estimate_condition

__all__ = [
    "ConditionEstimate", "Direct", "Identity", "Jacobi", "MultigridHierarchy",
    "MultigridPreconditioner", "NestingError", "PrecondKind", "Preconditioner",
    "SolveReport", "SymmetricGaussSeidel", "cg_solve", "estimate_condition",
    "galerkin_coarse", "interface_corrected_gs_smooth", "jacobi", "make_preconditioner",
    "mg", "prolongation", "sgs",
]
