"""Level-set geometries, cut-element classification and cut quadrature.

The interface is the zero set of the piecewise linear interpolant of the
level set on the background mesh, so every cut element carries exactly one
straight interface segment and its interior part is a triangle or a quad.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh import NONE, BackgroundMesh, signed_areas
from .quadrature import segment_rule, triangle_rule

SNAP_FACTOR = 1e-12
DEFAULT_ORDER = 4


class DegenerateGeometryError(ValueError):
    """The interface is not resolved by the mesh (more than one crossing per element)."""


class ElementClass(enum.IntEnum):
    OUTSIDE = 0
    CUT = 1
    INSIDE = 2


class LevelSetKind(enum.Enum):
    UNIT_CIRCLE = "unit_circle"
    GASKET = "gasket"
    USER = "user"


def _circle(x, center=(0.0, 0.0), radius=1.0):
    return (x[:, 0] - center[0]) ** 2 + (x[:, 1] - center[1]) ** 2 - radius**2


def _gasket(x, omega1, omega2):
    x1, x2 = x[:, 0], x[:, 1]
    r = np.hypot(x1, 5.0 * x2)
    # cos(arctan(5 x2 / x1)) written without the division; limit 1 at the origin
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(r > 0, np.abs(x1) / np.where(r > 0, r, 1.0), 1.0)
    return ((x1**2 + x2**2 - 1.0)
            * ((x1 - 1.5) ** 2 + x2**2 - 0.02)
            * ((x1 + 1.5) ** 2 + x2**2 - 0.02)
            * ((4.0 / 9.0) * x1**2 + 0.0625 * x2**2 - 1.0 / omega1 - omega2 * c))


@dataclass(frozen=True)
class LevelSet:
    """Parameterized level set; negative inside the physical domain.

    ``neumann`` optionally marks interface points (array (m, 2) -> bool) that
    carry a Neumann condition; all other interface points are Dirichlet.
    """

    kind: LevelSetKind
    params: tuple = ()
    func: Callable | None = None
    neumann: Callable | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind is LevelSetKind.UNIT_CIRCLE:
            center = self.params[:2] if self.params else (0.0, 0.0)
            radius = self.params[2] if len(self.params) > 2 else 1.0
            return _circle(x, center, radius)
        if self.kind is LevelSetKind.GASKET:
            return _gasket(x, *self.params)
        return np.asarray(self.func(x), dtype=float)


def unit_circle(center=(0.0, 0.0), radius: float = 1.0) -> LevelSet:
    return LevelSet(LevelSetKind.UNIT_CIRCLE, (float(center[0]), float(center[1]), float(radius)))


def gasket(omega1: float, omega2: float) -> LevelSet:
    return LevelSet(LevelSetKind.GASKET, (float(omega1), float(omega2)))


def user_level_set(func: Callable, neumann: Callable | None = None) -> LevelSet:
    return LevelSet(LevelSetKind.USER, (), func, neumann)


@dataclass(frozen=True, eq=False)
class CutTopology:
    """Classification of a background mesh against one level set.

    Volume integration runs over ``cell_coords`` (sub-triangles covering
    K intersected with the discrete domain, one per uncut INSIDE element),
    each tagged with its parent element in ``cell_parent``.  Interface
    segments live in ``seg_*`` arrays, one per CUT element.
    """

    mesh: BackgroundMesh
    phi: np.ndarray
    element_class: np.ndarray
    cell_parent: np.ndarray
    cell_coords: np.ndarray
    seg_element: np.ndarray
    seg_points: np.ndarray
    seg_normal: np.ndarray
    seg_dirichlet: np.ndarray
    ghost_facets: np.ndarray
    resolution_violations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    isolated_cut_elements: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def active_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_class != ElementClass.OUTSIDE)

    @property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_class == ElementClass.CUT)

    @property
    def inside_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_class == ElementClass.INSIDE)

    @property
    def dirichlet_segments(self) -> np.ndarray:
        return np.flatnonzero(self.seg_dirichlet)

    @property
    def neumann_segments(self) -> np.ndarray:
        return np.flatnonzero(~self.seg_dirichlet)

    def segment_of(self, element: int) -> int:
        idx = np.searchsorted(self.seg_element, element)
        if idx >= len(self.seg_element) or self.seg_element[idx] != element:
            raise ValueError(f"element {element} is not cut")
        return int(idx)

    def cells_of(self, element: int) -> np.ndarray:
        return np.flatnonzero(self.cell_parent == element)

    def interior_area(self) -> float:
        return float(signed_areas(self.cell_coords).sum())


def snap_values(phi: np.ndarray, bbox) -> np.ndarray:
    x0, x1, y0, y1 = bbox
    eps = SNAP_FACTOR * np.hypot(x1 - x0, y1 - y0)
    phi = np.array(phi, dtype=float)
    phi[np.abs(phi) < eps] = -eps
    return phi


def cut_element_decomposition(x, phi):
    """Split one triangle along the zero line of the linear interpolant.

    ``x`` is (3, 2), ``phi`` the three vertex values with mixed signs.
    Returns ``(sub_triangles, segment, normal)``: one or two positively
    oriented sub-triangles covering ``{phi_h < 0}``, the interface segment
    as a (2, 2) array and the unit normal pointing into ``phi_h > 0``.
    """
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    neg = phi < 0
    if neg.all() or not neg.any():
        raise ValueError("vertex values do not change sign")
    if signed_areas(x) < 0:
        x = x[[0, 2, 1]]
        phi = phi[[0, 2, 1]]
        neg = neg[[0, 2, 1]]
    lone = int(np.flatnonzero(neg)[0]) if neg.sum() == 1 else int(np.flatnonzero(~neg)[0])
    l, a, b = lone, (lone + 1) % 3, (lone + 2) % 3
    P = x[l] + phi[l] / (phi[l] - phi[a]) * (x[a] - x[l])
    Q = x[l] + phi[l] / (phi[l] - phi[b]) * (x[b] - x[l])
    if neg[l]:
        subs = np.array([[x[l], P, Q]])
    else:
        subs = np.array([[P, x[a], x[b]], [P, x[b], Q]])
    normal = _gradients(x[None], phi[None])[0]
    normal /= np.linalg.norm(normal)
    return subs, np.array([P, Q]), normal


def _gradients(x, vals):
    """Gradient of the linear interpolant of ``vals`` (m, 3) on triangles ``x`` (m, 3, 2)."""
    B = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)  # columns are edges
    dv = np.stack([vals[:, 1] - vals[:, 0], vals[:, 2] - vals[:, 0]], axis=1)
    # grad satisfies B^T grad = dv
    return np.linalg.solve(np.transpose(B, (0, 2, 1)), dv[..., None])[..., 0]


def classify_elements(mesh: BackgroundMesh, ls: LevelSet, *, strict: bool = False,
                      phi: np.ndarray | None = None) -> CutTopology:
    """Tag every element INSIDE / OUTSIDE / CUT and build the cut data.

    Vertex values within ``1e-12 * diam(bbox)`` of zero are moved to the
    inside.  Background edges whose end values share a sign while the level
    set changes sign at the edge midpoint indicate an interface crossing an
    edge twice; these are collected in ``resolution_violations`` and raise
    ``DegenerateGeometryError`` when ``strict`` is set.
    """
    if phi is None:
        phi = ls(mesh.vertices)
    phi = snap_values(phi, mesh.bbox)
    if not np.all(np.isfinite(phi)):
        raise ValueError("level set is not finite at every mesh vertex")
    tri = mesh.triangles
    nneg = (phi[tri] < 0).sum(axis=1)
    cls = np.full(mesh.n_triangles, ElementClass.CUT, dtype=np.int8)
    cls[nneg == 3] = ElementClass.INSIDE
    cls[nneg == 0] = ElementClass.OUTSIDE

    violations = _resolution_check(mesh, ls, phi)
    if violations.size and strict:
        raise DegenerateGeometryError(
            f"interface crosses {violations.size} element(s) more than once at this resolution")

    x_all = mesh.coords()
    inside = np.flatnonzero(cls == ElementClass.INSIDE)
    cut = np.flatnonzero(cls == ElementClass.CUT)

    # crossing point per facet, computed once so neighbours share endpoints bitwise
    fv = phi[mesh.facets]
    crossing = (fv[:, 0] < 0) != (fv[:, 1] < 0)
    p0 = mesh.vertices[mesh.facets[:, 0]]
    p1 = mesh.vertices[mesh.facets[:, 1]]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(crossing, fv[:, 0] / (fv[:, 0] - fv[:, 1]), 0.0)
    cross_pt = p0 + t[:, None] * (p1 - p0)

    xc = x_all[cut]
    pc = phi[tri[cut]]
    negc = pc < 0
    one_in = negc.sum(axis=1) == 1
    lone = np.where(one_in, np.argmax(negc, axis=1), np.argmax(~negc, axis=1))
    r = np.arange(len(cut))
    a = (lone + 1) % 3
    b = (lone + 2) % 3
    # edge l-a is opposite local vertex b, edge l-b opposite a
    P = cross_pt[mesh.element_facets[cut, b]]
    Q = cross_pt[mesh.element_facets[cut, a]]
    xl, xa, xb = xc[r, lone], xc[r, a], xc[r, b]

    sub_in = np.stack([xl, P, Q], axis=1)[one_in]
    sub_q1 = np.stack([P, xa, xb], axis=1)[~one_in]
    sub_q2 = np.stack([P, xb, Q], axis=1)[~one_in]
    cell_parent = np.concatenate([inside, cut[one_in], cut[~one_in], cut[~one_in]])
    cell_coords = np.concatenate([x_all[inside], sub_in, sub_q1, sub_q2])
    order = np.argsort(cell_parent, kind="stable")
    cell_parent = cell_parent[order]
    cell_coords = cell_coords[order]

    grads = _gradients(xc, pc)
    normals = grads / np.linalg.norm(grads, axis=1)[:, None]
    seg_points = np.stack([P, Q], axis=1)
    if ls.neumann is not None and len(cut):
        mid = seg_points.mean(axis=1)
        seg_dirichlet = ~np.asarray(ls.neumann(mid), dtype=bool)
    else:
        seg_dirichlet = np.ones(len(cut), dtype=bool)

    fe = mesh.facet_elements
    interior = fe[:, 1] != NONE
    cl = cls[fe[:, 0]]
    cr = np.where(interior, cls[np.where(interior, fe[:, 1], 0)], ElementClass.OUTSIDE)
    ghost = interior & (cl != ElementClass.OUTSIDE) & (cr != ElementClass.OUTSIDE) & (
        (cl == ElementClass.CUT) | (cr == ElementClass.CUT))

    isolated = _isolated_cut_elements(mesh, cls)

    topo = CutTopology(
        mesh=mesh, phi=phi, element_class=cls, cell_parent=cell_parent, cell_coords=cell_coords,
        seg_element=cut, seg_points=seg_points, seg_normal=normals, seg_dirichlet=seg_dirichlet,
        ghost_facets=np.flatnonzero(ghost), resolution_violations=violations,
        isolated_cut_elements=isolated,
    )
    return topo


def _resolution_check(mesh, ls, phi):
    fv = phi[mesh.facets]
    same = (fv[:, 0] < 0) == (fv[:, 1] < 0)
    if not same.any():
        return np.zeros(0, dtype=np.int64)
    mids = 0.5 * (mesh.vertices[mesh.facets[same, 0]] + mesh.vertices[mesh.facets[same, 1]])
    pm = snap_values(ls(mids), mesh.bbox)
    bad = np.flatnonzero(same)[(pm < 0) != (fv[same, 0] < 0)]
    elems = mesh.facet_elements[bad].ravel()
    return np.unique(elems[elems != NONE])


def _isolated_cut_elements(mesh, cls):
    """CUT elements whose face-connected cluster of CUT elements touches no INSIDE element."""
    fe = mesh.facet_elements
    interior = fe[:, 1] != NONE
    l, r = fe[interior, 0], fe[interior, 1]
    both_cut = (cls[l] == ElementClass.CUT) & (cls[r] == ElementClass.CUT)
    n = mesh.n_triangles
    g = coo_matrix((np.ones(both_cut.sum()), (l[both_cut], r[both_cut])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    touch = ((cls[l] == ElementClass.CUT) & (cls[r] == ElementClass.INSIDE)) | (
        (cls[r] == ElementClass.CUT) & (cls[l] == ElementClass.INSIDE))
    cut_side = np.where(cls[l[touch]] == ElementClass.CUT, l[touch], r[touch])
    good_labels = np.unique(labels[cut_side])
    cut = np.flatnonzero(cls == ElementClass.CUT)
    return cut[~np.isin(labels[cut], good_labels)]


def check_assumption_c(topo: CutTopology) -> np.ndarray:
    """Report (warn about) CUT elements without a path to an uncut active neighbour."""
    if topo.isolated_cut_elements.size:
        warnings.warn(f"{topo.isolated_cut_elements.size} cut element(s) have no uncut "
                      "active neighbour", stacklevel=2)
    return topo.isolated_cut_elements


# ----------------------------------------------------------------------------
# quadrature on cut geometry


def cell_rule(topo: CutTopology, order: int = DEFAULT_ORDER):
    """Volume quadrature over all integration cells.

    Returns ``(parent, points, weights)`` with shapes (m,), (m, q, 2), (m, q).
    """
    lam, w = triangle_rule(order)
    x = topo.cell_coords
    pts = np.einsum("qk,mkd->mqd", lam, x)
    wts = signed_areas(x)[:, None] * w[None, :]
    return topo.cell_parent, pts, wts


def segment_quadrature(topo: CutTopology, order: int = DEFAULT_ORDER):
    """Interface quadrature over all segments.

    Returns ``(element, points, weights, normals)`` with shapes
    (c,), (c, q, 2), (c, q), (c, 2).
    """
    t, w = segment_rule(order)
    P, Q = topo.seg_points[:, 0], topo.seg_points[:, 1]
    pts = P[:, None, :] + t[None, :, None] * (Q - P)[:, None, :]
    length = np.linalg.norm(Q - P, axis=1)
    return topo.seg_element, pts, length[:, None] * w[None, :], topo.seg_normal


def volume_quadrature(topo: CutTopology, element: int, order: int = DEFAULT_ORDER):
    """Points (q, 2) and weights (q,) integrating over ``K`` intersected with the domain."""
    if topo.element_class[element] == ElementClass.OUTSIDE:
        raise ValueError(f"element {element} is outside the domain")
    lam, w = triangle_rule(order)
    cells = topo.cell_coords[topo.cells_of(element)]
    pts = np.einsum("qk,mkd->mqd", lam, cells).reshape(-1, 2)
    wts = (signed_areas(cells)[:, None] * w[None, :]).ravel()
    return pts, wts


def interface_quadrature(topo: CutTopology, element: int, order: int = DEFAULT_ORDER):
    """Points (q, 2), weights (q,) and the constant outward normal on one cut element."""
    if topo.element_class[element] != ElementClass.CUT:
        raise ValueError(f"element {element} is not cut")
    s = topo.segment_of(element)
    t, w = segment_rule(order)
    P, Q = topo.seg_points[s]
    pts = P + t[:, None] * (Q - P)
    return pts, np.linalg.norm(Q - P) * w, topo.seg_normal[s].copy()


def interface_polylines(topo: CutTopology) -> list[np.ndarray]:
    """Chain interface segments into polylines.

    Neighbouring segments share bitwise-identical endpoints (crossings are
    computed once per facet), so endpoints are matched exactly.
    """
    segs = topo.seg_points
    keys = [(tuple(s[0]), tuple(s[1])) for s in segs]
    at: dict[tuple, list[int]] = {}
    for i, (k0, k1) in enumerate(keys):
        at.setdefault(k0, []).append(i)
        at.setdefault(k1, []).append(i)
    used = np.zeros(len(segs), dtype=bool)
    lines = []
    for start in range(len(segs)):
        if used[start]:
            continue
        used[start] = True
        chain = [segs[start][0], segs[start][1]]
        for forward in (True, False):
            cur = keys[start][1] if forward else keys[start][0]
            while True:
                nxt = [j for j in at[cur] if not used[j]]
                if not nxt:
                    break
                j = nxt[0]
                used[j] = True
                other = 1 if keys[j][0] == cur else 0
                cur = keys[j][other]
                if forward:
                    chain.append(segs[j][other])
                else:
                    chain.insert(0, segs[j][other])
        lines.append(np.array(chain))
    return lines
