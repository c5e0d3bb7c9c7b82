"""Cut discretizations on a nested mesh hierarchy.

The finest level is assembled; coarser levels only provide index spaces for
the multigrid preconditioner.  A coarse level's space is spanned by the
parents of the next finer level's active elements, which makes the coarse
spaces nested by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import AssembledSystem, P1Space, Penalties, assemble_stiffness, assemble_system
from .geometry import CutTopology, ElementClass, LevelSet, classify_elements
from .linalg.multigrid import MultigridHierarchy, prolongation
from .mesh import MeshHierarchy, build_hierarchy


@dataclass(eq=False)
class CutLevel:
    """One mesh level classified against the level set."""

    level: int
    topology: CutTopology
    space: P1Space


def classify_hierarchy(hier: MeshHierarchy, ls: LevelSet, strict: bool = False) -> list[CutLevel]:
    out = []
    for l, mesh in enumerate(hier.meshes):
        topo = classify_elements(mesh, ls, strict=strict)
        out.append(CutLevel(l, topo, P1Space(mesh, topo)))
    return out


def coarse_spaces(hier: MeshHierarchy, levels: list[CutLevel], finest: int) -> list[P1Space]:
    """Spaces for levels ``0..finest`` used by multigrid, coarse to fine."""
    spaces = [levels[finest].space]
    elements = levels[finest].space.elements
    for l in range(finest, 0, -1):
        elements = np.unique(hier.element_parents[l][elements])
        spaces.append(P1Space(hier.meshes[l - 1], levels[l - 1].topology, elements))
    return spaces[::-1]


def cut_dofs(space: P1Space, topology: CutTopology) -> np.ndarray:
    """Dofs touching an element of ``space`` that is not classified INSIDE."""
    els = space.elements[topology.element_class[space.elements] != ElementClass.INSIDE]
    return np.unique(space.dof_map[space.mesh.triangles[els]])


def multigrid_for_level(hier: MeshHierarchy, levels: list[CutLevel], finest: int, K,
                        sweeps: int = 1) -> MultigridHierarchy:
    """Galerkin multigrid for the stiffness ``K`` assembled on level ``finest``."""
    spaces = coarse_spaces(hier, levels, finest)
    Rs = [prolongation(spaces[l - 1], spaces[l], hier.parent_maps[l]) for l in range(1, finest + 1)]
    cdofs = [cut_dofs(spaces[l], levels[l].topology) for l in range(finest + 1)]
    return MultigridHierarchy.from_finest(K, Rs, cdofs, sweeps)


def transfer(coarse: P1Space, fine: P1Space, parent_map, coeffs) -> np.ndarray:
    """Carry a coarse P1 function to the fine active dofs through the parent map.

    Fine dofs whose parents are not all coarse-active average the active
    parents; with none active the value is zero.  Used only for warm starts.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    parents = np.asarray(parent_map)[fine.active_dofs]
    cd = coarse.dof_map[parents]
    ok = cd >= 0
    vals = np.where(ok, coeffs[np.where(ok, cd, 0)], 0.0)
    cnt = ok.sum(axis=1)
    out = np.zeros(fine.ndofs)
    has = cnt > 0
    out[has] = vals[has].sum(axis=1) / cnt[has]
    return out


@dataclass(eq=False)
class Discretization:
    """A mesh hierarchy classified against one geometry, with lazy assembly."""

    hierarchy: MeshHierarchy
    levels: list[CutLevel]
    level_set: LevelSet

    @classmethod
    def build(cls, ls: LevelSet, bbox, n0, n_levels: int, strict: bool = False) -> "Discretization":
        hier = build_hierarchy(bbox, n0, n_levels - 1)
        return cls(hier, classify_hierarchy(hier, ls, strict), ls)

    def __len__(self) -> int:
        return len(self.levels)

    def space(self, level: int) -> P1Space:
        return self.levels[level].space

    def assemble(self, level: int, data, penalties: Penalties = Penalties()) -> AssembledSystem:
        return assemble_system(self.space(level), data.f, data.g_D, data.g_N, data.y_d, penalties)

    def multigrid(self, level: int, K, sweeps: int = 1) -> MultigridHierarchy:
        return multigrid_for_level(self.hierarchy, self.levels, level, K, sweeps)

    def transfer(self, level: int, coeffs) -> np.ndarray:
        """Move coefficients from ``level - 1`` to ``level``."""
        return transfer(self.space(level - 1), self.space(level),
                        self.hierarchy.parent_maps[level], coeffs)


def stiffness_only(space: P1Space, penalties: Penalties = Penalties()) -> sp.csr_matrix:
    return assemble_stiffness(space, penalties.gamma_D, penalties.gamma_N, penalties.gamma_1)
