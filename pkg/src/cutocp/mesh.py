"""Structured background triangulations and uniform red refinement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NONE = -1


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Conforming triangulation of a rectangular hold-all box.

    ``facets`` holds vertex pairs, ``facet_elements`` the incident triangles
    ``(left, right)`` with ``right == NONE`` on the box boundary.
    ``element_facets[t, i]`` is the facet opposite local vertex ``i``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_elements: np.ndarray
    element_facets: np.ndarray
    bbox: tuple[float, float, float, float]
    level: int = 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        return signed_areas(self.coords())

    def diameters(self) -> np.ndarray:
        x = self.coords()
        e = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 1], x[:, 0] - x[:, 2]], axis=1)
        return np.sqrt((e**2).sum(-1)).max(axis=1)

    @property
    def h(self) -> float:
        """Global mesh size, the largest element diameter."""
        return float(self.diameters().max())

    def is_boundary_facet(self) -> np.ndarray:
        return self.facet_elements[:, 1] == NONE


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Nested meshes ordered coarse to fine.

    ``parent_maps[l]`` (for ``l >= 1``) has shape (nv_l, 2): a fine vertex
    inherited from level ``l-1`` maps to ``[v, v]``, an edge midpoint to the
    two coarse endpoints.  ``element_parents[l]`` maps each fine triangle to
    the coarse triangle containing it.
    """

    meshes: list[BackgroundMesh]
    parent_maps: list[np.ndarray | None] = field(default_factory=list)
    element_parents: list[np.ndarray | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.meshes)

    def __getitem__(self, level: int) -> BackgroundMesh:
        return self.meshes[level]


def signed_areas(x: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as an (..., 3, 2) coordinate array."""
    d1 = x[..., 1, :] - x[..., 0, :]
    d2 = x[..., 2, :] - x[..., 0, :]
    return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


def _build_facets(triangles: np.ndarray):
    nt = len(triangles)
    # local facet i is opposite local vertex i
    local = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = triangles[:, local].reshape(-1, 2)
    key = np.sort(pairs, axis=1)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    owner = np.repeat(np.arange(nt), 3)
    nf = len(uniq)
    counts = np.bincount(inverse, minlength=nf)
    if counts.max() > 2:
        raise ValueError("non-manifold triangulation: facet shared by more than two triangles")
    facet_elements = np.full((nf, 2), NONE, dtype=np.int64)
    # stable ordering keeps the lower element index on the left
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    starts = np.searchsorted(inv_sorted, np.arange(nf))
    facet_elements[:, 0] = owner[order[starts]]
    two = counts == 2
    facet_elements[two, 1] = owner[order[starts[two] + 1]]
    return uniq.astype(np.int64), facet_elements, inverse.reshape(nt, 3)


def _make_mesh(vertices, triangles, bbox, level) -> BackgroundMesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    facets, facet_elements, element_facets = _build_facets(triangles)
    for a in (vertices, triangles, facets, facet_elements, element_facets):
        a.setflags(write=False)
    return BackgroundMesh(vertices, triangles, facets, facet_elements, element_facets,
                          tuple(float(b) for b in bbox), level)


def build_structured_mesh(bbox, n) -> BackgroundMesh:
    """Split an ``nx`` by ``ny`` grid on ``bbox = (x0, x1, y0, y1)`` into triangles.

    ``n`` is either one subdivision count for both axes or a pair.  Every
    cell is cut along its lower-left to upper-right diagonal.
    """
    x0, x1, y0, y1 = (float(b) for b in bbox)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate or inverted bounding box {bbox}")
    nx, ny = (n, n) if np.isscalar(n) else n
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivisions must be positive integers, got {n}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _make_mesh(vertices, triangles, (x0, x1, y0, y1), 0)


def refine_uniform(mesh: BackgroundMesh):
    """Red refinement: each triangle is split into four similar children.

    Returns ``(fine_mesh, parent_map, element_parent)``.  Coarse vertices keep
    their indices; midpoint vertices follow in facet order.
    """
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    parent_map = np.vstack([np.column_stack([np.arange(nv), np.arange(nv)]), mesh.facets])

    t = mesh.triangles
    m = nv + mesh.element_facets  # m[:, i] is the midpoint opposite vertex i
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m_bc, m_ca, m_ab = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ], axis=1).reshape(-1, 3)
    element_parent = np.repeat(np.arange(mesh.n_triangles), 4)
    fine = _make_mesh(vertices, children, mesh.bbox, mesh.level + 1)
    parent_map.setflags(write=False)
    element_parent.setflags(write=False)
    return fine, parent_map, element_parent


def build_hierarchy(bbox, n, levels: int) -> MeshHierarchy:
    """Coarse structured mesh plus ``levels`` red refinements."""
    meshes = [build_structured_mesh(bbox, n)]
    pmaps: list[np.ndarray | None] = [None]
    eparents: list[np.ndarray | None] = [None]
    for _ in range(levels):
        fine, pmap, epar = refine_uniform(meshes[-1])
        meshes.append(fine)
        pmaps.append(pmap)
        eparents.append(epar)
    return MeshHierarchy(meshes, pmaps, eparents)


def facet_normal(mesh: BackgroundMesh, facet: int) -> np.ndarray:
    """Unit normal of a facet pointing out of its lower-indexed element."""
    return facet_normals(mesh, np.array([facet]))[0]


def facet_normals(mesh: BackgroundMesh, facets=None) -> np.ndarray:
    if facets is None:
        facets = np.arange(mesh.n_facets)
    p = mesh.vertices[mesh.facets[facets]]
    d = p[:, 1] - p[:, 0]
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    left = mesh.facet_elements[facets, 0]
    centroid = mesh.vertices[mesh.triangles[left]].mean(axis=1)
    flip = ((p[:, 0] - centroid) * n).sum(axis=1) < 0
    n[flip] *= -1
    return n


def write_mesh(mesh: BackgroundMesh, path) -> None:
    """Plain text dump: vertex lines ``v x y`` then triangle lines ``t i j k``."""
    with open(path, "w") as fh:
        fh.write(f"# vertices {mesh.n_vertices} triangles {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")


def read_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(s) for s in line.split()[1:]])
            elif line.startswith("t "):
                tris.append([int(s) for s in line.split()[1:]])
    return np.array(verts), np.array(tris, dtype=np.int64)
