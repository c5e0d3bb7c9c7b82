"""Preconditioners for symmetric positive definite sparse systems.

Every preconditioner is a callable ``z = P(r)`` approximating ``K^{-1} r``.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from ._kernels import sweep


class PrecondKind(enum.Enum):
    IDENTITY = "identity"
    JACOBI = "jacobi"
    SGS = "sgs"
    MULTIGRID = "multigrid"
    DIRECT = "direct"


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sort_indices()
    return A


def _diagonal(A):
    D = A.diagonal()
    if np.any(D == 0):
        bad = np.flatnonzero(D == 0)
        raise ValueError(f"zero diagonal at rows {bad[:10].tolist()} (orphaned dof?)")
    return D


class Preconditioner:
    kind: PrecondKind

    def __call__(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, n: int) -> np.ndarray:
        """Dense matrix of the action, for small-system checks."""
        return np.column_stack([self(e) for e in np.eye(n)])


class Identity(Preconditioner):
    kind = PrecondKind.IDENTITY

    def __call__(self, r):
        return np.array(r, dtype=float, copy=True)


class Jacobi(Preconditioner):
    kind = PrecondKind.JACOBI

    def __init__(self, A):
        self.inv_diag = 1.0 / _diagonal(as_csr(A))

    def __call__(self, r):
        return self.inv_diag * r


class SymmetricGaussSeidel(Preconditioner):
    """Action of ``((D+L) D^{-1} (D+L^T))^{-1}``: a forward then a backward sweep from zero."""

    kind = PrecondKind.SGS

    def __init__(self, A):
        self.A = as_csr(A)
        _diagonal(self.A)
        n = self.A.shape[0]
        self._fwd = np.arange(n, dtype=np.int64)
        self._bwd = self._fwd[::-1].copy()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        x = np.zeros_like(r)
        sweep(self.A, x, r, self._fwd)
        sweep(self.A, x, r, self._bwd)
        return x


class Direct(Preconditioner):
    """Exact inverse through a sparse LU factorization."""

    kind = PrecondKind.DIRECT

    def __init__(self, A):
        self.lu = sla.splu(sp.csc_matrix(A))

    def __call__(self, r):
        return self.lu.solve(np.asarray(r, dtype=float))


def jacobi(A) -> Jacobi:
    return Jacobi(A)


def sgs(A) -> SymmetricGaussSeidel:
    return SymmetricGaussSeidel(A)


def make_preconditioner(kind, A, hierarchy=None) -> Preconditioner:
    kind = PrecondKind(kind)
    if kind is PrecondKind.IDENTITY:
        return Identity()
    if kind is PrecondKind.JACOBI:
        return Jacobi(A)
    if kind is PrecondKind.SGS:
        return SymmetricGaussSeidel(A)
    if kind is PrecondKind.DIRECT:
        return Direct(A)
    if hierarchy is None:
        raise ValueError("multigrid preconditioner needs a level hierarchy")
    return hierarchy.preconditioner()
