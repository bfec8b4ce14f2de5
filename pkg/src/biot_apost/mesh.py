"""Conforming triangulations of the unit square with full edge topology.

Meshes are immutable after construction (all arrays are set read-only).
Edge bookkeeping fixes the conventions the rest of the code relies on:

* edges are stored with the lower vertex index first,
* ``edge_tris`` lists adjacent triangles in ascending index order, and the
  first listed triangle defines the jump sign convention,
* the unit normal of an interior edge points from the first adjacent
  triangle into the second; boundary normals point outward.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

import numpy as np


class BoundaryTag(IntEnum):
    INTERIOR = 0
    GAMMA1 = 1
    GAMMA2 = 2


#: maps edge midpoints, shape (n, 2), to an int array of BoundaryTag values
EdgeClassifier = Callable[[np.ndarray], np.ndarray]


def all_gamma1(midpoints: np.ndarray) -> np.ndarray:
    """Default boundary classifier: the whole boundary is Gamma1."""
    return np.full(len(midpoints), int(BoundaryTag.GAMMA1))


def all_gamma2(midpoints: np.ndarray) -> np.ndarray:
    return np.full(len(midpoints), int(BoundaryTag.GAMMA2))


@dataclass(frozen=True)
class EdgeGeometry:
    """Geometry of a single edge; normal/tangent are unit and orthogonal."""

    length: float
    normal: np.ndarray
    tangent: np.ndarray
    midpoint: np.ndarray


@dataclass(frozen=True)
class ElementGeometry:
    """Geometry of one triangle, with the affine map x = coords[0] + jac @ xhat."""

    area: float
    h: float
    coords: np.ndarray
    jac: np.ndarray
    inv_jac: np.ndarray


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation with edge topology and boundary tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    edges : (ne, 2) int array, lower vertex index first
    tri_edges : (nt, 3) int array; entry i is the global edge opposite
        local vertex i
    tri_edge_signs : (nt, 3) int array; +1 where the local traversal
        direction of the edge agrees with the canonical (stored) direction
    edge_tris : (ne, 2) int array, ascending; second entry is -1 for
        boundary edges
    boundary_tag : (ne,) int array of BoundaryTag values
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_tris: np.ndarray
    boundary_tag: np.ndarray
    areas: np.ndarray
    h_K: np.ndarray
    edge_lengths: np.ndarray
    edge_normals: np.ndarray
    edge_tangents: np.ndarray
    edge_midpoints: np.ndarray
    rt0_signs: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_tag == BoundaryTag.INTERIOR)

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_tag != BoundaryTag.INTERIOR)


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def build_trimesh(
    vertices: np.ndarray,
    triangles: np.ndarray,
    boundary_classifier: Optional[EdgeClassifier] = None,
) -> TriMesh:
    """Assemble edge topology, orientations and tags for a triangulation.

    Parameters
    ----------
    vertices : (nv, 2) array of coordinates.
    triangles : (nt, 3) array of vertex triples, counterclockwise.
    boundary_classifier : optional callable mapping boundary edge midpoints
        to BoundaryTag values; defaults to tagging everything Gamma1.

    Raises
    ------
    ValueError
        On inverted/degenerate triangles, non-manifold edges, or a
        classifier returning INTERIOR for a boundary edge.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if boundary_classifier is None:
        boundary_classifier = all_gamma1

    coords = vertices[triangles]  # (nt, 3, 2)
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(signed <= 0.0):
        bad = int(np.argmin(signed))
        raise ValueError(f"triangle {bad} has non-positive signed area {signed[bad]}")
    areas = signed
    h_K = np.sqrt(areas)

    nt = len(triangles)
    edge_index: dict[tuple[int, int], int] = {}
    edge_list: list[tuple[int, int]] = []
    tri_edges = np.empty((nt, 3), dtype=np.int64)
    tri_edge_signs = np.empty((nt, 3), dtype=np.int64)
    adjacency: list[list[int]] = []

    for t in range(nt):
        v = triangles[t]
        for i in range(3):
            a, b = int(v[(i + 1) % 3]), int(v[(i + 2) % 3])  # edge opposite vertex i
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edge_list)
                edge_index[key] = e
                edge_list.append(key)
                adjacency.append([])
            if len(adjacency[e]) >= 2:
                raise ValueError(f"edge {key} shared by more than two triangles")
            adjacency[e].append(t)
            tri_edges[t, i] = e
            tri_edge_signs[t, i] = 1 if a < b else -1

    edges = np.array(edge_list, dtype=np.int64)
    ne = len(edges)
    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    for e, tris in enumerate(adjacency):
        tris = sorted(tris)
        edge_tris[e, : len(tris)] = tris

    pa = vertices[edges[:, 0]]
    pb = vertices[edges[:, 1]]
    dvec = pb - pa
    edge_lengths = np.linalg.norm(dvec, axis=1)
    edge_midpoints = 0.5 * (pa + pb)
    t_can = dvec / edge_lengths[:, None]
    normals = np.stack([t_can[:, 1], -t_can[:, 0]], axis=1)

    centroids = coords.mean(axis=1)
    first = edge_tris[:, 0]
    second = edge_tris[:, 1]
    is_interior = second >= 0
    # interior: normal points from first adjacent triangle to the second;
    # boundary: outward from the only adjacent triangle
    ref = np.where(
        is_interior[:, None],
        centroids[np.where(is_interior, second, 0)] - centroids[first],
        edge_midpoints - centroids[first],
    )
    flip = np.einsum("ij,ij->i", normals, ref) < 0.0
    normals[flip] *= -1.0
    edge_tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=1)

    boundary_tag = np.full(ne, int(BoundaryTag.INTERIOR), dtype=np.int64)
    bnd = np.flatnonzero(~is_interior)
    if len(bnd):
        tags = np.asarray(boundary_classifier(edge_midpoints[bnd]), dtype=np.int64)
        if tags.shape != (len(bnd),):
            raise ValueError("boundary classifier returned wrong shape")
        if np.any(tags == int(BoundaryTag.INTERIOR)):
            raise ValueError("boundary classifier tagged a boundary edge INTERIOR")
        boundary_tag[bnd] = tags

    rt0_signs = np.where(edge_tris[tri_edges, 0] == np.arange(nt)[:, None], 1, -1).astype(
        np.int64
    )

    arrays = (
        vertices,
        triangles,
        edges,
        tri_edges,
        tri_edge_signs,
        edge_tris,
        boundary_tag,
        areas,
        h_K,
        edge_lengths,
        normals,
        edge_tangents,
        edge_midpoints,
        rt0_signs,
    )
    _freeze(*arrays)
    return TriMesh(*arrays)


def uniform_unit_square(
    k: int, boundary_classifier: Optional[EdgeClassifier] = None
) -> TriMesh:
    """Uniform triangulation of [0,1]^2 with mesh size 2**-k.

    The square is partitioned into a 2**k x 2**k grid of cells, each split
    into two triangles by the diagonal from the lower-left to the
    upper-right corner.

    Parameters
    ----------
    k : refinement level, must be >= 1.
    boundary_classifier : optional override of the default all-Gamma1
        boundary tagging.
    """
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ValueError(f"refinement level must be an integer, got {k!r}")
    if k < 1:
        raise ValueError(f"refinement level must be >= 1, got {k}")
    n = 2**k
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def idx(i: np.ndarray, j: np.ndarray) -> np.ndarray:
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a = idx(i, j)
    b = idx(i + 1, j)
    c = idx(i + 1, j + 1)
    d = idx(i, j + 1)
    lower = np.stack([a, b, c], axis=1)
    upper = np.stack([a, c, d], axis=1)
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return build_trimesh(vertices, triangles, boundary_classifier)


def element_geometry(mesh: TriMesh, t: int) -> ElementGeometry:
    coords = mesh.vertices[mesh.triangles[t]]
    jac = np.stack([coords[1] - coords[0], coords[2] - coords[0]], axis=1)
    return ElementGeometry(
        area=float(mesh.areas[t]),
        h=float(mesh.h_K[t]),
        coords=coords,
        jac=jac,
        inv_jac=np.linalg.inv(jac),
    )


def edge_geometry(mesh: TriMesh, e: int) -> EdgeGeometry:
    return EdgeGeometry(
        length=float(mesh.edge_lengths[e]),
        normal=mesh.edge_normals[e].copy(),
        tangent=mesh.edge_tangents[e].copy(),
        midpoint=mesh.edge_midpoints[e].copy(),
    )


def boundary_jump_convention(mesh: TriMesh, e: int, trace):
    """Jump value on a boundary edge: zero on Gamma1, the trace on Gamma2."""
    tag = mesh.boundary_tag[e]
    if tag == BoundaryTag.INTERIOR:
        raise ValueError(f"edge {e} is interior; jumps there need both traces")
    trace = np.asarray(trace, dtype=float)
    if tag == BoundaryTag.GAMMA1:
        return np.zeros_like(trace)
    return trace


def export_text(mesh: TriMesh) -> str:
    """Plain-text mesh dump: 'v x y', 't i j k' and 'e i j tag' lines."""
    lines = []
    for x, y in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r}")
    for i, j, k in mesh.triangles:
        lines.append(f"t {i} {j} {k}")
    for (i, j), tag in zip(mesh.edges, mesh.boundary_tag):
        lines.append(f"e {i} {j} {BoundaryTag(tag).name}")
    return "\n".join(lines) + "\n"
