import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutocp.mesh import (NONE, build_hierarchy, build_structured_mesh, facet_normals, read_mesh,
                         refine_uniform, signed_areas, write_mesh)


def test_structured_counts_and_area():
    m = build_structured_mesh((-1.0, 2.0, 0.0, 1.0), (3, 2))
    assert m.n_vertices == 12
    assert m.n_triangles == 12
    # Euler: V - E + F = 1 for a disk-like planar triangulation
    assert m.n_vertices - m.n_facets + m.n_triangles == 1
    assert np.all(m.areas() > 0)
    assert m.areas().sum() == pytest.approx(3.0)


def test_h_is_max_diameter():
    m = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 4)
    assert m.h == pytest.approx(np.sqrt(2) / 4)


@given(n=st.integers(1, 12), m=st.integers(1, 12),
       w=st.floats(0.1, 10.0), ht=st.floats(0.1, 10.0))
def test_structured_mesh_tiles_box(n, m, w, ht):
    mesh = build_structured_mesh((0.0, w, -ht, 0.0), (n, m))
    assert mesh.areas().sum() == pytest.approx(w * ht, rel=1e-12)
    fe = mesh.facet_elements
    # every interior facet has two neighbours, boundary count equals perimeter facets
    assert (fe[:, 1] == NONE).sum() == 2 * (n + m)
    assert np.all(fe[fe[:, 1] != NONE, 0] < fe[fe[:, 1] != NONE, 1])


def test_element_facets_are_opposite_vertices():
    m = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 3)
    for t in range(m.n_triangles):
        for i in range(3):
            f = m.facets[m.element_facets[t, i]]
            assert m.triangles[t, i] not in f
            assert set(f) <= set(m.triangles[t])


def test_facet_normals_point_out_of_left_element():
    m = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 3)
    nrm = facet_normals(m)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    cl = m.vertices[m.triangles[m.facet_elements[:, 0]]].mean(axis=1)
    mid = m.vertices[m.facets].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", mid - cl, nrm) > 0)


def test_refine_is_nested():
    m = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 2)
    fine, pmap, epar = refine_uniform(m)
    assert fine.n_triangles == 4 * m.n_triangles
    assert np.allclose(fine.areas(), np.repeat(m.areas(), 4) / 4)
    mids = 0.5 * (fine.vertices[pmap[:, 0]] + fine.vertices[pmap[:, 1]])
    assert np.allclose(mids, fine.vertices)
    assert np.all(signed_areas(fine.vertices[fine.triangles]) > 0)
    # each child's centroid lies in its parent (barycentric coordinates positive)
    c = fine.vertices[fine.triangles].mean(axis=1)
    px = m.vertices[m.triangles[epar]]
    B = np.stack([px[:, 1] - px[:, 0], px[:, 2] - px[:, 0]], axis=2)
    lam = np.linalg.solve(B, (c - px[:, 0])[..., None])[..., 0]
    assert np.all(lam > 0) and np.all(lam.sum(axis=1) < 1)
    assert fine.h == pytest.approx(m.h / 2)


def test_hierarchy_levels():
    h = build_hierarchy((0.0, 1.0, 0.0, 1.0), 2, 3)
    assert len(h) == 4
    assert [mesh.level for mesh in h.meshes] == [0, 1, 2, 3]
    assert h.parent_maps[0] is None
    assert h[3].n_triangles == 8 * 64


def test_roundtrip(tmp_path):
    m = build_structured_mesh((0.0, 1.0, 0.0, 2.0), (2, 3))
    write_mesh(m, tmp_path / "m.txt")
    v, t = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(v, m.vertices)
    assert np.array_equal(t, m.triangles)


@pytest.mark.parametrize("bbox,n", [((0, 0, 0, 1), 2), ((0, 1, 0, 1), 0), ((0, 1, 0, 1), (2, -1))])
def test_bad_input(bbox, n):
    with pytest.raises(ValueError):
        build_structured_mesh(bbox, n)
