import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biot_apost.mesh import (
    BoundaryTag,
    all_gamma2,
    boundary_jump_convention,
    build_trimesh,
    edge_geometry,
    element_geometry,
    export_text,
    uniform_unit_square,
)


@pytest.mark.parametrize(
    "k,nv,nt,ne",
    [(1, 9, 8, 16), (2, 25, 32, 56), (4, 289, 512, 800)],
)
def test_uniform_counts(k, nv, nt, ne):
    m = uniform_unit_square(k)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (nv, nt, ne)


@given(k=st.integers(min_value=1, max_value=4))
@settings(max_examples=4, deadline=None)
def test_euler_formula(k):
    m = uniform_unit_square(k)
    assert m.n_vertices - m.n_edges + m.n_triangles == 1


@given(k=st.integers(min_value=1, max_value=3))
@settings(max_examples=3, deadline=None)
def test_refinement_quadruples_triangles(k):
    assert uniform_unit_square(k + 1).n_triangles == 4 * uniform_unit_square(k).n_triangles


def test_positive_areas_and_domain_area(mesh_k2):
    assert np.all(mesh_k2.areas > 0.0)
    assert abs(mesh_k2.areas.sum() - 1.0) < 1e-12


def test_edge_adjacency_counts(mesh_k2):
    m = mesh_k2
    interior = m.boundary_tag == BoundaryTag.INTERIOR
    assert np.all(m.edge_tris[interior, 1] >= 0)
    assert np.all(m.edge_tris[~interior, 1] == -1)
    # adjacency ascending, and both adjacent triangles contain the edge's vertices
    for e in range(m.n_edges):
        a, b = m.edges[e]
        assert a < b
        for t in m.edge_tris[e]:
            if t >= 0:
                assert {a, b} <= set(m.triangles[t])
        if interior[e]:
            assert m.edge_tris[e, 0] < m.edge_tris[e, 1]


def test_boundary_edges_cover_square_boundary(mesh_k2):
    m = mesh_k2
    bnd = m.boundary_edges()
    mids = m.edge_midpoints[bnd]
    on_boundary = (
        np.isclose(mids[:, 0], 0.0)
        | np.isclose(mids[:, 0], 1.0)
        | np.isclose(mids[:, 1], 0.0)
        | np.isclose(mids[:, 1], 1.0)
    )
    assert np.all(on_boundary)
    assert abs(m.edge_lengths[bnd].sum() - 4.0) < 1e-12


def test_tri_edges_reproduce_ccw_traversal(mesh_k2):
    m = mesh_k2
    for t in range(m.n_triangles):
        v = m.triangles[t]
        for i in range(3):
            e = m.tri_edges[t, i]
            sign = m.tri_edge_signs[t, i]
            a, b = v[(i + 1) % 3], v[(i + 2) % 3]
            direction = m.vertices[b] - m.vertices[a]
            canonical = m.vertices[m.edges[e, 1]] - m.vertices[m.edges[e, 0]]
            assert np.allclose(sign * canonical, direction)


def test_edge_geometry_conventions(mesh_k2):
    m = mesh_k2
    centroids = m.vertices[m.triangles].mean(axis=1)
    for e in range(m.n_edges):
        g = edge_geometry(m, e)
        assert abs(np.linalg.norm(g.normal) - 1.0) < 1e-14
        assert abs(np.linalg.norm(g.tangent) - 1.0) < 1e-14
        assert abs(g.normal @ g.tangent) < 1e-15
        t1, t2 = m.edge_tris[e]
        if t2 >= 0:
            assert g.normal @ (centroids[t2] - centroids[t1]) > 0.0
        else:
            assert g.normal @ (g.midpoint - centroids[t1]) > 0.0


def test_bottom_edge_normal_and_diagonal_length():
    k = 2
    m = uniform_unit_square(k)
    bottom = np.flatnonzero(np.isclose(m.edge_midpoints[:, 1], 0.0))
    for e in bottom:
        assert np.allclose(m.edge_normals[e], [0.0, -1.0])
    # diagonal edges have both coordinates varying
    d = m.vertices[m.edges[:, 1]] - m.vertices[m.edges[:, 0]]
    diag = np.flatnonzero((np.abs(d[:, 0]) > 1e-12) & (np.abs(d[:, 1]) > 1e-12))
    assert len(diag) > 0
    assert np.allclose(m.edge_lengths[diag], np.sqrt(2.0) * 2.0**-k)


def test_element_geometry(mesh_k2):
    g = element_geometry(mesh_k2, 0)
    assert abs(g.area - 2.0**-5) < 1e-15
    assert abs(g.h - np.sqrt(g.area)) < 1e-15
    assert np.allclose(g.inv_jac @ g.jac, np.eye(2))


def test_jump_convention_gamma1(mesh_k2):
    e = mesh_k2.boundary_edges()[0]
    assert boundary_jump_convention(mesh_k2, e, 3.7) == 0.0


def test_jump_convention_gamma2():
    m = uniform_unit_square(1, boundary_classifier=all_gamma2)
    e = m.boundary_edges()[0]
    assert boundary_jump_convention(m, e, 3.7) == 3.7
    assert np.allclose(boundary_jump_convention(m, e, np.array([1.0, -2.0])), [1.0, -2.0])


def test_jump_convention_rejects_interior(mesh_k2):
    e = mesh_k2.interior_edges()[0]
    with pytest.raises(ValueError):
        boundary_jump_convention(mesh_k2, e, 1.0)


@pytest.mark.parametrize("k", [0, -1])
def test_uniform_rejects_bad_level(k):
    with pytest.raises(ValueError):
        uniform_unit_square(k)


def test_uniform_rejects_non_integer():
    with pytest.raises(ValueError):
        uniform_unit_square(1.5)


def test_builder_rejects_clockwise_triangle():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        build_trimesh(vertices, np.array([[0, 2, 1]]))


def test_custom_classifier_tags():
    def classify(mids):
        return np.where(np.isclose(mids[:, 1], 0.0), BoundaryTag.GAMMA2, BoundaryTag.GAMMA1)

    m = uniform_unit_square(2, boundary_classifier=classify)
    bnd = m.boundary_edges()
    bottom = np.isclose(m.edge_midpoints[bnd, 1], 0.0)
    assert np.all(m.boundary_tag[bnd[bottom]] == BoundaryTag.GAMMA2)
    assert np.all(m.boundary_tag[bnd[~bottom]] == BoundaryTag.GAMMA1)


def test_export_text_roundtrip(mesh_k1):
    text = export_text(mesh_k1)
    lines = text.strip().splitlines()
    vs = [l for l in lines if l.startswith("v ")]
    ts = [l for l in lines if l.startswith("t ")]
    es = [l for l in lines if l.startswith("e ")]
    assert len(vs) == mesh_k1.n_vertices
    assert len(ts) == mesh_k1.n_triangles
    assert len(es) == mesh_k1.n_edges
    verts = np.array([[float(tok) for tok in l.split()[1:]] for l in vs])
    assert np.array_equal(verts, mesh_k1.vertices)
    assert all(l.split()[3] in ("GAMMA1", "GAMMA2", "INTERIOR") for l in es)


def test_mesh_arrays_immutable(mesh_k1):
    with pytest.raises(ValueError):
        mesh_k1.vertices[0, 0] = 5.0
