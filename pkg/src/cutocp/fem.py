"""CutFEM assembly on the active P1 space: Nitsche + ghost penalty stiffness,
physical-domain mass matrix, load and target vectors, error norms."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import DEFAULT_ORDER, CutTopology, cell_rule, segment_quadrature
from .mesh import BackgroundMesh, facet_normals

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Penalties:
    gamma_D: float = 10.0
    gamma_N: float = 0.0
    gamma_1: float = 0.1


class Norm(enum.Enum):
    L2 = "L2"
    H1 = "H1"
    STAR = "STAR"


class P1Space:
    """Continuous P1 functions on a set of background elements.

    Without ``elements`` the active elements of ``topology`` are used.
    """

    def __init__(self, mesh: BackgroundMesh, topology: CutTopology | None = None,
                 elements: np.ndarray | None = None):
        if elements is None:
            if topology is None:
                raise ValueError("need a topology or an explicit element set")
            elements = topology.active_elements
        self.mesh = mesh
        self.topology = topology
        self.elements = np.asarray(elements, dtype=np.int64)
        self.active_dofs = np.unique(mesh.triangles[self.elements])
        self.dof_map = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.dof_map[self.active_dofs] = np.arange(len(self.active_dofs))

    @property
    def ndofs(self) -> int:
        return len(self.active_dofs)

    @property
    def h(self) -> float:
        return self.mesh.h

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """Local dof indices for every background element (-1 where inactive)."""
        return self.dof_map[self.mesh.triangles]

    @cached_property
    def _affine(self):
        x = self.mesh.coords()
        B = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        Binv = np.linalg.inv(B)
        g12 = Binv  # rows are gradients of barycentrics 1 and 2
        grads = np.concatenate([-(g12.sum(axis=1))[:, None, :], g12], axis=1)
        return x[:, 0], Binv, grads

    @property
    def gradients(self) -> np.ndarray:
        """Basis gradients per background element, shape (nt, 3, 2)."""
        return self._affine[2]

    def basis_values(self, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``points`` (m, q, 2) in ``elements`` (m,)."""
        x0, Binv, _ = self._affine
        rel = points - x0[elements][:, None, :]
        l12 = np.einsum("mij,mqj->mqi", Binv[elements], rel)
        return np.concatenate([1.0 - l12.sum(axis=2, keepdims=True), l12], axis=2)

    def interpolate(self, fn: Func) -> np.ndarray:
        return np.asarray(fn(self.mesh.vertices[self.active_dofs]), dtype=float)

    def evaluate(self, coeffs, elements, points):
        """Values and gradients of a discrete function at points grouped per element."""
        dofs = self.element_dofs[elements]
        if (dofs < 0).any():
            raise ValueError("evaluation on an element outside the space")
        c = np.asarray(coeffs)[dofs]
        lam = self.basis_values(elements, points)
        vals = np.einsum("mqk,mk->mq", lam, c)
        grads = np.einsum("mkd,mk->md", self.gradients[elements], c)
        return vals, grads


@dataclass(eq=False)
class AssembledSystem:
    space: P1Space
    K: sp.csr_matrix
    M: sp.csr_matrix
    d: np.ndarray
    b: np.ndarray
    penalties: Penalties
    h: float


def _coo_to_csr(rows, cols, vals, n):
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _symmetrize(A):
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    return A


def _pair_indices(dofs):
    m, k = dofs.shape
    rows = np.repeat(dofs[:, :, None], k, axis=2)
    cols = np.repeat(dofs[:, None, :], k, axis=1)
    return rows, cols


def assemble_stiffness(space: P1Space, gamma_D=10.0, gamma_N=0.0, gamma_1=0.1,
                       order: int = DEFAULT_ORDER) -> sp.csr_matrix:
    """Stiffness of the symmetric Nitsche form plus the gradient-jump ghost penalty."""
    topo = space.topology
    if gamma_D <= 0 or gamma_1 < 0 or gamma_N < 0:
        raise ValueError("penalties must satisfy gamma_D > 0, gamma_1 >= 0, gamma_N >= 0")
    h = space.h
    n = space.ndofs
    G = space.gradients
    edofs = space.element_dofs
    rows, cols, vals = [], [], []

    parent, _, wts = cell_rule(topo, order)
    area = wts.sum(axis=1)
    Gp = G[parent]
    loc = area[:, None, None] * np.einsum("mid,mjd->mij", Gp, Gp)
    r, c = _pair_indices(edofs[parent])
    rows.append(r), cols.append(c), vals.append(loc)

    el, pts, w, nrm = segment_quadrature(topo, order)
    if len(el):
        lam = space.basis_values(el, pts)                      # (c, q, 3)
        dn = np.einsum("mid,md->mi", G[el], nrm)               # (c, 3)
        mass = np.einsum("mq,mqi,mqj->mij", w, lam, lam)
        lin = np.einsum("mq,mqi->mi", w, lam)                  # integral of psi_i
        cons = np.einsum("mi,mj->mij", lin, dn)                # <psi_i, dn_j>
        nit = -cons - np.transpose(cons, (0, 2, 1)) + (gamma_D / h) * mass
        seglen = w.sum(axis=1)
        neu = gamma_N * h * seglen[:, None, None] * np.einsum("mi,mj->mij", dn, dn)
        dirichlet = topo.seg_dirichlet[:, None, None]
        loc = np.where(dirichlet, nit, neu)
        r, c = _pair_indices(edofs[el])
        rows.append(r), cols.append(c), vals.append(loc)

    gf = topo.ghost_facets
    if len(gf) and gamma_1 > 0:
        mesh = space.mesh
        kl, kr = mesh.facet_elements[gf, 0], mesh.facet_elements[gf, 1]
        nF = facet_normals(mesh, gf)
        p = mesh.vertices[mesh.facets[gf]]
        flen = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        jump = np.concatenate([np.einsum("mid,md->mi", G[kl], nF),
                               -np.einsum("mid,md->mi", G[kr], nF)], axis=1)
        loc = (gamma_1 * h * flen)[:, None, None] * np.einsum("mi,mj->mij", jump, jump)
        r, c = _pair_indices(np.concatenate([edofs[kl], edofs[kr]], axis=1))
        rows.append(r), cols.append(c), vals.append(loc)

    K = _coo_to_csr(np.concatenate([a.ravel() for a in rows]),
                    np.concatenate([a.ravel() for a in cols]),
                    np.concatenate([a.ravel() for a in vals]), n)
    return _symmetrize(K)


def ghost_penalty_form(space: P1Space, gamma_1=1.0) -> sp.csr_matrix:
    """The stabilization term alone (used for positivity checks)."""
    topo = space.topology
    zero = replace(topo, cell_coords=topo.cell_coords[:0], cell_parent=topo.cell_parent[:0],
                   seg_element=topo.seg_element[:0], seg_points=topo.seg_points[:0],
                   seg_normal=topo.seg_normal[:0], seg_dirichlet=topo.seg_dirichlet[:0])
    tmp = P1Space(space.mesh, zero, space.elements)
    return assemble_stiffness(tmp, gamma_D=1.0, gamma_N=0.0, gamma_1=gamma_1)


def assemble_mass(space: P1Space, order: int = DEFAULT_ORDER) -> sp.csr_matrix:
    """Mass matrix over the discrete physical domain."""
    parent, pts, wts = cell_rule(space.topology, order)
    lam = space.basis_values(parent, pts)
    loc = np.einsum("mq,mqi,mqj->mij", wts, lam, lam)
    r, c = _pair_indices(space.element_dofs[parent])
    return _symmetrize(_coo_to_csr(r, c, loc, space.ndofs))


def _volume_load(space, fn, order):
    parent, pts, wts = cell_rule(space.topology, order)
    lam = space.basis_values(parent, pts)
    fv = np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(wts.shape)
    loc = np.einsum("mq,mq,mqi->mi", wts, fv, lam)
    return np.bincount(space.element_dofs[parent].ravel(), loc.ravel(), minlength=space.ndofs)


def assemble_load(space: P1Space, f: Func | None, g_D: Func | None = None, g_N: Func | None = None,
                  gamma_D=10.0, gamma_N=0.0, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Right-hand side ``L_h(psi_i)`` including the Nitsche boundary data terms."""
    d = np.zeros(space.ndofs)
    if f is not None:
        d += _volume_load(space, f, order)
    topo = space.topology
    el, pts, w, nrm = segment_quadrature(topo, order)
    if len(el) == 0:
        return d
    h = space.h
    lam = space.basis_values(el, pts)
    dn = np.einsum("mid,md->mi", space.gradients[el], nrm)
    flat = pts.reshape(-1, 2)
    loc = np.zeros((len(el), 3))
    dmask = topo.seg_dirichlet
    if g_D is not None and dmask.any():
        g = np.asarray(g_D(flat), dtype=float).reshape(w.shape)
        term = (gamma_D / h) * np.einsum("mq,mq,mqi->mi", w, g, lam) - np.einsum(
            "mq,mq,mi->mi", w, g, dn)
        loc[dmask] += term[dmask]
    if g_N is not None and (~dmask).any():
        g = np.asarray(g_N(flat), dtype=float).reshape(w.shape)
        term = np.einsum("mq,mq,mqi->mi", w, g, lam) + gamma_N * h * np.einsum(
            "mq,mq,mi->mi", w, g, dn)
        loc[~dmask] += term[~dmask]
    d += np.bincount(space.element_dofs[el].ravel(), loc.ravel(), minlength=space.ndofs)
    return d


def assemble_target(space: P1Space, y_d: Func | None, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``b_i = -(y_d, psi_i)`` over the physical domain."""
    if y_d is None:
        return np.zeros(space.ndofs)
    return -_volume_load(space, y_d, order)


def assemble_system(space: P1Space, f=None, g_D=None, g_N=None, y_d=None,
                    penalties: Penalties = Penalties(), order: int = DEFAULT_ORDER) -> AssembledSystem:
    pen = penalties
    K = assemble_stiffness(space, pen.gamma_D, pen.gamma_N, pen.gamma_1, order)
    M = assemble_mass(space, order)
    d = assemble_load(space, f, g_D, g_N, pen.gamma_D, pen.gamma_N, order)
    b = assemble_target(space, y_d, order)
    return AssembledSystem(space, K, M, d, b, pen, space.h)


def l2_misfit(space: P1Space, coeffs, fn: Func | None, order: int = DEFAULT_ORDER + 1) -> float:
    """Squared L2 distance between a discrete function and ``fn`` on the domain."""
    parent, pts, wts = cell_rule(space.topology, order)
    vals, _ = space.evaluate(coeffs, parent, pts)
    if fn is not None:
        vals = vals - np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(wts.shape)
    return float((wts * vals**2).sum())


def measure_error(space: P1Space, coeffs, exact: Func, grad: Func | None = None,
                  norm: Norm | str = Norm.L2, gamma_D: float = 10.0,
                  order: int = DEFAULT_ORDER + 1) -> float:
    """Norm of ``u_h - exact`` over the discrete physical domain."""
    norm = Norm(norm)
    topo = space.topology
    parent, pts, wts = cell_rule(topo, order)
    vals, grads = space.evaluate(coeffs, parent, pts)
    flat = pts.reshape(-1, 2)
    err = vals - np.asarray(exact(flat), dtype=float).reshape(wts.shape)
    total = float((wts * err**2).sum())
    if norm is Norm.L2:
        return float(np.sqrt(total))
    if grad is None:
        raise ValueError(f"{norm.value} norm needs the exact gradient")
    gerr = grads[:, None, :] - np.asarray(grad(flat), dtype=float).reshape(*wts.shape, 2)
    semi = float((wts * (gerr**2).sum(axis=2)).sum())
    if norm is Norm.H1:
        return float(np.sqrt(total + semi))
    el, spts, sw, nrm = segment_quadrature(topo, order)
    h = space.h
    sv, sg = space.evaluate(coeffs, el, spts)
    sflat = spts.reshape(-1, 2)
    serr = sv - np.asarray(exact(sflat), dtype=float).reshape(sw.shape)
    sgerr = sg[:, None, :] - np.asarray(grad(sflat), dtype=float).reshape(*sw.shape, 2)
    dn = np.einsum("mqd,md->mq", sgerr, nrm)
    dmask = topo.seg_dirichlet[:, None]
    bnd = np.where(dmask, gamma_D / h * serr**2, h * dn**2)
    return float(np.sqrt(semi + float((sw * bnd).sum())))


def write_coo(A, path) -> None:
    """Dump a sparse matrix as ``row col value`` lines (0-based)."""
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"# {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        n, m = int(header[1]), int(header[2])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, m))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(n, m)).tocsr()
