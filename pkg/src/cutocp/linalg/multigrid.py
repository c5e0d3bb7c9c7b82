"""Geometric multigrid for unfitted discretizations.

Coarse operators are Galerkin products of the finest stiffness matrix; the
smoother is Gauss-Seidel over all unknowns followed by an extra local pass
over the unknowns attached to cut elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from ._kernels import sweep
from .precond import Preconditioner, PrecondKind, as_csr


class NestingError(ValueError):
    """A fine active dof has a parent outside the coarse active set."""


def prolongation(coarse_space, fine_space, parent_map) -> sp.csr_matrix:
    """Coefficient-space embedding of nested P1 spaces.

    Inherited vertices copy the coarse value, edge midpoints average the two
    coarse endpoints.  Rows follow fine active dofs, columns coarse ones.
    """
    fine_verts = fine_space.active_dofs
    parents = np.asarray(parent_map)[fine_verts]
    cdofs = coarse_space.dof_map[parents]
    if (cdofs < 0).any():
        bad = fine_verts[(cdofs < 0).any(axis=1)]
        raise NestingError(f"{len(bad)} fine dof(s) have inactive coarse parents, e.g. {bad[:5].tolist()}")
    same = parents[:, 0] == parents[:, 1]
    rows = np.concatenate([np.flatnonzero(same), np.repeat(np.flatnonzero(~same), 2)])
    cols = np.concatenate([cdofs[same, 0], cdofs[~same].ravel()])
    vals = np.concatenate([np.ones(same.sum()), np.full(2 * (~same).sum(), 0.5)])
    R = sp.csr_matrix((vals, (rows, cols)), shape=(fine_space.ndofs, coarse_space.ndofs))
    R.sort_indices()
    return R


def galerkin_coarse(K_fine, R) -> sp.csr_matrix:
    """``R^T K R``, symmetrized to remove rounding asymmetry."""
    Kc = (R.T @ K_fine @ R).tocsr()
    Kc = (0.5 * (Kc + Kc.T)).tocsr()
    Kc.sort_indices()
    return Kc


def interface_corrected_gs_smooth(K, x, b, cut_dofs, sweeps: int = 1, backward: bool = False):
    """Gauss-Seidel on all unknowns plus one local pass over ``cut_dofs``.

    The forward variant sweeps all unknowns in increasing order and then the
    cut unknowns; ``backward=True`` runs the adjoint: the cut unknowns in
    decreasing order first, then all unknowns in decreasing order.
    """
    K = as_csr(K)
    x = np.array(x, dtype=float, copy=True)
    b = np.asarray(b, dtype=float)
    n = K.shape[0]
    cut = np.unique(np.asarray(cut_dofs, dtype=np.int64))
    full = np.arange(n, dtype=np.int64)
    for _ in range(sweeps):
        if backward:
            if cut.size:
                sweep(K, x, b, cut[::-1])
            sweep(K, x, b, full[::-1])
        else:
            sweep(K, x, b, full)
            if cut.size:
                sweep(K, x, b, cut)
    return x


@dataclass
class Level:
    K: sp.csr_matrix
    cut_dofs: np.ndarray
    R: sp.csr_matrix | None = None  # prolongation from the next coarser level


class MultigridHierarchy:
    """Levels ordered coarse to fine; ``levels[l].R`` maps level l-1 to l."""

    def __init__(self, levels: list[Level], sweeps: int = 1):
        if len(levels) < 1:
            raise ValueError("empty hierarchy")
        self.levels = levels
        self.sweeps = sweeps
        for lev in levels:
            lev.K = as_csr(lev.K)
        try:
            self._coarse = sla.splu(sp.csc_matrix(levels[0].K))
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"coarse-level factorization failed: {exc}") from exc

    @classmethod
    def from_finest(cls, K_fine, prolongations, cut_dofs, sweeps: int = 1):
        """Build Galerkin coarse operators from the finest matrix.

        ``prolongations[l]`` maps level l to level l+1 (coarse to fine order),
        ``cut_dofs[l]`` lists the interface-zone unknowns of level l.
        """
        nlev = len(prolongations) + 1
        Ks = [None] * nlev
        Ks[-1] = as_csr(K_fine)
        for l in range(nlev - 2, -1, -1):
            Ks[l] = galerkin_coarse(Ks[l + 1], prolongations[l])
        levels = [Level(Ks[0], np.asarray(cut_dofs[0]))]
        for l in range(1, nlev):
            levels.append(Level(Ks[l], np.asarray(cut_dofs[l]), prolongations[l - 1]))
        return cls(levels, sweeps)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def vcycle(self, b, level: int | None = None):
        """One V-cycle with zero initial guess."""
        if level is None:
            level = self.n_levels - 1
        b = np.asarray(b, dtype=float)
        if level == 0:
            return self._coarse.solve(b)
        lev = self.levels[level]
        x = interface_corrected_gs_smooth(lev.K, np.zeros_like(b), b, lev.cut_dofs, self.sweeps)
        r = b - lev.K @ x
        x += lev.R @ self.vcycle(lev.R.T @ r, level - 1)
        return interface_corrected_gs_smooth(lev.K, x, b, lev.cut_dofs, self.sweeps, backward=True)

    def preconditioner(self) -> "MultigridPreconditioner":
        return MultigridPreconditioner(self)


class MultigridPreconditioner(Preconditioner):
    kind = PrecondKind.MULTIGRID

    def __init__(self, hierarchy: MultigridHierarchy):
        self.hierarchy = hierarchy

    def __call__(self, r):
        return self.hierarchy.vcycle(r)


def mg(K_fine, prolongations, cut_dofs, sweeps: int = 1) -> MultigridPreconditioner:
    return MultigridHierarchy.from_finest(K_fine, prolongations, cut_dofs, sweeps).preconditioner()
