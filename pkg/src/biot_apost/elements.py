"""Reference bases, degree-of-freedom layouts and quadrature rules.

Three local spaces are supported on triangles:

* ``V``: vector P1 enriched by one edge bubble per edge (9 local shapes,
  2 dofs per vertex + 1 per edge),
* ``Q``: piecewise constants (1 dof per triangle),
* ``W``: lowest-order Raviart-Thomas, normalized to unit normal flux
  through the owning global edge (1 dof per edge).

Per-element evaluators return a :class:`BasisEval`; the ``batch_*``
functions produce the same data vectorized over all elements of a mesh and
are what assembly and the estimators use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .mesh import BoundaryTag, ElementGeometry, TriMesh


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature nodes and weights on a reference cell.

    Triangle rules store barycentric coordinates, shape (n, 3), with
    weights summing to 1/2. Interval rules store parametric coordinates in
    [0, 1], shape (n,), with weights summing to 1. ``degree`` is the
    declared polynomial exactness.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule_25() -> QuadratureRule:
    """25-point rule on the reference triangle, exact through degree 9.

    Collapsed 5x5 tensor product: Gauss-Legendre along the first Duffy
    axis, Gauss-Jacobi with weight (1 - v) along the second, mapped by
    x = u(1 - v), y = v.
    """
    u, wu = gauss01(5)
    xj, wj = roots_jacobi(5, 1.0, 0.0)
    v = 0.5 * (xj + 1.0)
    wv = 0.25 * wj  # absorbs the Duffy Jacobian (1 - v)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    weights = np.outer(wu, wv).ravel()
    points = np.stack([1.0 - x - y, x, y], axis=1)
    return QuadratureRule(points=points, weights=weights, degree=9)


def edge_rule_5() -> QuadratureRule:
    """5-point Gauss-Legendre on [0, 1], exact through degree 9."""
    p, w = gauss01(5)
    return QuadratureRule(points=p, weights=w, degree=9)


def time_rule_5() -> QuadratureRule:
    return edge_rule_5()


def time_rule(n: int) -> QuadratureRule:
    p, w = gauss01(n)
    return QuadratureRule(points=p, weights=w, degree=2 * n - 1)


@dataclass(frozen=True)
class DofLayout:
    """Global dof map for one space.

    ``cell_dofs`` has one row per triangle listing the element's global
    dofs in local order; ``essential`` flags dofs constrained to zero on
    Gamma1.
    """

    space: str
    ndof: int
    cell_dofs: np.ndarray
    essential: np.ndarray


@dataclass(frozen=True)
class SpaceLayouts:
    V: DofLayout
    Q: DofLayout
    W: DofLayout


def layout_V(mesh: TriMesh) -> DofLayout:
    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    ndof = 2 * nv + ne
    cell = np.empty((nt, 9), dtype=np.int64)
    tv = mesh.triangles
    cell[:, 0:6:2] = 2 * tv
    cell[:, 1:6:2] = 2 * tv + 1
    cell[:, 6:9] = 2 * nv + mesh.tri_edges
    essential = np.zeros(ndof, dtype=bool)
    g1 = np.flatnonzero(mesh.boundary_tag == BoundaryTag.GAMMA1)
    g1_verts = np.unique(mesh.edges[g1])
    essential[2 * g1_verts] = True
    essential[2 * g1_verts + 1] = True
    essential[2 * nv + g1] = True
    essential.setflags(write=False)
    cell.setflags(write=False)
    return DofLayout("V", ndof, cell, essential)


def layout_Q(mesh: TriMesh) -> DofLayout:
    nt = mesh.n_triangles
    cell = np.arange(nt, dtype=np.int64)[:, None]
    essential = np.zeros(nt, dtype=bool)
    essential.setflags(write=False)
    cell.setflags(write=False)
    return DofLayout("Q", nt, cell, essential)


def layout_W(mesh: TriMesh) -> DofLayout:
    ne = mesh.n_edges
    cell = mesh.tri_edges.copy()
    essential = mesh.boundary_tag == BoundaryTag.GAMMA1
    essential.setflags(write=False)
    cell.setflags(write=False)
    return DofLayout("W", ne, cell, essential)


def build_layouts(mesh: TriMesh) -> SpaceLayouts:
    return SpaceLayouts(V=layout_V(mesh), Q=layout_Q(mesh), W=layout_W(mesh))


@dataclass(frozen=True)
class BasisEval:
    """Local shape function data at quadrature points of one element.

    ``values`` is (nq, nshape) for scalar spaces and (nq, nshape, 2) for
    vector spaces. ``grads`` is (nq, nshape, 2, 2) for V (component, then
    derivative axis). ``divs`` holds the constant per-shape divergences of
    RT0. ``hessians`` is (nshape, 2, 2, 2) of constant second derivatives
    of the V shapes (zero for the P1 part).
    """

    values: np.ndarray
    grads: Optional[np.ndarray] = None
    divs: Optional[np.ndarray] = None
    hessians: Optional[np.ndarray] = None


def _barycentric_grads(geom: ElementGeometry) -> np.ndarray:
    g = np.empty((3, 2))
    g[1] = geom.inv_jac[0]
    g[2] = geom.inv_jac[1]
    g[0] = -g[1] - g[2]
    return g


def eval_V_basis(
    geom: ElementGeometry, rule: QuadratureRule, edge_normals: np.ndarray
) -> BasisEval:
    """Vector P1 + edge-bubble shapes on one physical triangle.

    Local ordering: (x, y) components at each vertex, then one bubble per
    local edge. The bubble for local edge i (opposite vertex i) is
    ``lam_{i+1} lam_{i+2} n_F`` with ``n_F`` the *global* unit normal of
    that edge, so the function is single-valued across elements.

    Parameters
    ----------
    edge_normals : (3, 2) array of the global normals of the element's
        local edges 0, 1, 2.
    """
    if geom.area <= 0.0:
        raise ValueError("degenerate triangle")
    lam = rule.points  # (nq, 3)
    nq = len(lam)
    G = _barycentric_grads(geom)

    values = np.zeros((nq, 9, 2))
    grads = np.zeros((nq, 9, 2, 2))
    hessians = np.zeros((9, 2, 2, 2))
    for v in range(3):
        for c in range(2):
            k = 2 * v + c
            values[:, k, c] = lam[:, v]
            grads[:, k, c, :] = G[v]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        phi = lam[:, a] * lam[:, b]
        gphi = lam[:, a, None] * G[b] + lam[:, b, None] * G[a]
        n = edge_normals[i]
        values[:, 6 + i] = phi[:, None] * n
        grads[:, 6 + i] = n[None, :, None] * gphi[:, None, :]
        hess = np.outer(G[a], G[b]) + np.outer(G[b], G[a])
        hessians[6 + i] = n[:, None, None] * hess[None, :, :]
    return BasisEval(values=values, grads=grads, hessians=hessians)


def eval_W_basis(
    geom: ElementGeometry, rule: QuadratureRule, signs: np.ndarray
) -> BasisEval:
    """RT0 shapes with unit normal flux through the owning global edge.

    Shape i is ``signs[i] * (x - x_i) / (2|K|)`` with ``x_i`` the vertex
    opposite local edge i; ``signs[i]`` is +1 when the global edge normal
    is outward for this element.
    """
    if geom.area <= 0.0:
        raise ValueError("degenerate triangle")
    lam = rule.points
    X = lam @ geom.coords  # (nq, 2)
    scale = np.asarray(signs, dtype=float) / (2.0 * geom.area)
    values = (X[:, None, :] - geom.coords[None, :, :]) * scale[None, :, None]
    divs = np.asarray(signs, dtype=float) / geom.area
    return BasisEval(values=values, divs=divs)


def eval_Q_basis(geom: ElementGeometry, rule: Optional[QuadratureRule] = None) -> BasisEval:
    nq = 1 if rule is None else len(rule.weights)
    values = np.ones((nq, 1))
    grads = np.zeros((nq, 1, 2))
    return BasisEval(values=values, grads=grads)


# ---------------------------------------------------------------------------
# vectorized evaluation over all elements of a mesh


def barycentric_grads(mesh: TriMesh) -> np.ndarray:
    """Gradients of the three barycentric coordinates, shape (nt, 3, 2)."""
    coords = mesh.vertices[mesh.triangles]
    jac = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    inv = np.linalg.inv(jac)
    G = np.empty((mesh.n_triangles, 3, 2))
    G[:, 1] = inv[:, 0, :]
    G[:, 2] = inv[:, 1, :]
    G[:, 0] = -G[:, 1] - G[:, 2]
    return G


def physical_points(mesh: TriMesh, rule: QuadratureRule) -> np.ndarray:
    """Quadrature points mapped to every element, shape (nt, nq, 2)."""
    coords = mesh.vertices[mesh.triangles]
    return np.einsum("qv,tvx->tqx", rule.points, coords)


def batch_V_eval(mesh: TriMesh, rule: QuadratureRule) -> BasisEval:
    """V shapes on all elements: values (nt, nq, 9, 2), grads
    (nt, nq, 9, 2, 2), hessians (nt, 9, 2, 2, 2)."""
    lam = rule.points
    nq = len(lam)
    nt = mesh.n_triangles
    G = barycentric_grads(mesh)
    normals = mesh.edge_normals[mesh.tri_edges]  # (nt, 3, 2)

    values = np.zeros((nt, nq, 9, 2))
    grads = np.zeros((nt, nq, 9, 2, 2))
    hessians = np.zeros((nt, 9, 2, 2, 2))
    for v in range(3):
        for c in range(2):
            k = 2 * v + c
            values[:, :, k, c] = lam[None, :, v]
            grads[:, :, k, c, :] = G[:, None, v, :]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        phi = lam[:, a] * lam[:, b]  # (nq,)
        gphi = lam[None, :, a, None] * G[:, None, b, :] + lam[None, :, b, None] * G[
            :, None, a, :
        ]  # (nt, nq, 2)
        n = normals[:, i]  # (nt, 2)
        values[:, :, 6 + i] = phi[None, :, None] * n[:, None, :]
        grads[:, :, 6 + i] = n[:, None, :, None] * gphi[:, :, None, :]
        hess = np.einsum("ta,tb->tab", G[:, a], G[:, b])
        hess = hess + np.swapaxes(hess, 1, 2)
        hessians[:, 6 + i] = n[:, :, None, None] * hess[:, None, :, :]
    return BasisEval(values=values, grads=grads, hessians=hessians)


def batch_W_eval(mesh: TriMesh, rule: QuadratureRule) -> BasisEval:
    """RT0 shapes on all elements: values (nt, nq, 3, 2), divs (nt, 3)."""
    coords = mesh.vertices[mesh.triangles]
    X = physical_points(mesh, rule)
    scale = mesh.rt0_signs / (2.0 * mesh.areas[:, None])  # (nt, 3)
    values = (X[:, :, None, :] - coords[:, None, :, :]) * scale[:, None, :, None]
    divs = mesh.rt0_signs / mesh.areas[:, None]
    return BasisEval(values=values, divs=divs)


def v_values_at(mesh: TriMesh, tris: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """V shape values at given barycentric points of given elements.

    ``tris`` is (m,) element indices, ``lam`` is (m, p, 3); the result has
    shape (m, p, 9, 2).
    """
    m, p = lam.shape[0], lam.shape[1]
    normals = mesh.edge_normals[mesh.tri_edges[tris]]
    values = np.zeros((m, p, 9, 2))
    for v in range(3):
        for c in range(2):
            values[:, :, 2 * v + c, c] = lam[:, :, v]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        phi = lam[:, :, a] * lam[:, :, b]
        values[:, :, 6 + i] = phi[:, :, None] * normals[:, None, i, :]
    return values


def v_grads_at(
    mesh: TriMesh, tris: np.ndarray, lam: np.ndarray, G: Optional[np.ndarray] = None
) -> np.ndarray:
    """V shape gradients at barycentric points of given elements,
    shape (m, p, 9, 2, 2)."""
    if G is None:
        G = barycentric_grads(mesh)
    Gt = G[tris]  # (m, 3, 2)
    m, p = lam.shape[0], lam.shape[1]
    normals = mesh.edge_normals[mesh.tri_edges[tris]]
    grads = np.zeros((m, p, 9, 2, 2))
    for v in range(3):
        for c in range(2):
            grads[:, :, 2 * v + c, c, :] = Gt[:, None, v, :]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        gphi = lam[:, :, a, None] * Gt[:, None, b, :] + lam[:, :, b, None] * Gt[:, None, a, :]
        grads[:, :, 6 + i] = normals[:, None, i, :, None] * gphi[:, :, None, :]
    return grads


def w_values_at(mesh: TriMesh, tris: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """RT0 shape values at barycentric points, shape (m, p, 3, 2)."""
    coords = mesh.vertices[mesh.triangles[tris]]  # (m, 3, 2)
    X = np.einsum("mpv,mvx->mpx", lam, coords)
    scale = mesh.rt0_signs[tris] / (2.0 * mesh.areas[tris, None])
    return (X[:, :, None, :] - coords[:, None, :, :]) * scale[:, None, :, None]
