"""Sparse assembly of the bilinear forms and the per-step block system.

Forms (all L2 inner products over the domain):

* ``a(u, v) = (2 mu eps(u) + lam div(u) I, eps(v))`` on V x V,
* ``b(v, q) = (alpha div v, q)`` on V x Q, assembled as B[q, v],
* ``c(p, q) = (beta p, q)`` on Q x Q,
* ``d(z, q) = (div z, q)`` on W x Q, assembled as D[q, z],
* ``e(w, z) = (K^-1 w, z)`` on W x W.

Element integrals use the 25-point triangle rule. Essential dofs (V and W
on Gamma1) are eliminated symmetrically: zeroed rows/columns, unit
diagonal, zero right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import elements
from .elements import DofLayout, QuadratureRule, SpaceLayouts, triangle_rule_25
from .mesh import TriMesh


class SolverError(RuntimeError):
    """Raised when a sparse factorization or residual check fails."""


def _identity_K() -> np.ndarray:
    return np.eye(2)


@dataclass(frozen=True)
class Coefficients:
    """Material parameters of the consolidation model.

    ``K`` is a 2x2 SPD permeability tensor, either one matrix for the whole
    domain or one per element with shape (nt, 2, 2).
    """

    mu: float
    lam: float
    alpha: float
    beta: float
    K: np.ndarray = field(default_factory=_identity_K)

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        K = np.asarray(self.K, dtype=float)
        if K.shape[-2:] != (2, 2):
            raise ValueError("K must be 2x2 (optionally per element)")
        if not np.allclose(K, np.swapaxes(K, -1, -2), atol=1e-14):
            raise ValueError("K must be symmetric")
        eigs = np.linalg.eigvalsh(K)
        if np.min(eigs) <= 0.0:
            raise ValueError("K must be positive definite")
        object.__setattr__(self, "K", K)

    def k_inv(self, nt: int) -> np.ndarray:
        """Per-element inverse permeability, shape (nt, 2, 2)."""
        Kinv = np.linalg.inv(self.K)
        if Kinv.ndim == 2:
            return np.broadcast_to(Kinv, (nt, 2, 2))
        if Kinv.shape[0] != nt:
            raise ValueError("per-element K has wrong leading dimension")
        return Kinv


def _scatter(
    rows_local: np.ndarray,
    cols_local: np.ndarray,
    vals: np.ndarray,
    shape: tuple[int, int],
) -> sp.csr_matrix:
    mat = sp.coo_matrix((vals.ravel(), (rows_local.ravel(), cols_local.ravel())), shape=shape)
    return mat.tocsr()


def _pair_indices(rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # rows: (nt, m), cols: (nt, n) -> broadcast to (nt, m, n)
    r = np.repeat(rows[:, :, None], cols.shape[1], axis=2)
    c = np.repeat(cols[:, None, :], rows.shape[1], axis=1)
    return r, c


def assemble_form(
    form: str,
    mesh: TriMesh,
    layouts: SpaceLayouts,
    coeffs: Coefficients,
    rule: Optional[QuadratureRule] = None,
) -> sp.csr_matrix:
    """Assemble one of the forms 'a', 'b', 'c', 'd', 'e' (unconstrained)."""
    if rule is None:
        rule = triangle_rule_25()
    w2A = rule.weights[None, :] * (2.0 * mesh.areas[:, None])  # (nt, nq)

    if form == "a":
        ev = elements.batch_V_eval(mesh, rule)
        g = ev.grads  # (nt, nq, 9, 2, 2)
        eps = 0.5 * (g + np.swapaxes(g, -1, -2))
        div = np.trace(g, axis1=-2, axis2=-1)  # (nt, nq, 9)
        local = 2.0 * coeffs.mu * np.einsum("tq,tqiab,tqjab->tij", w2A, eps, eps)
        local += coeffs.lam * np.einsum("tq,tqi,tqj->tij", w2A, div, div)
        r, c = _pair_indices(layouts.V.cell_dofs, layouts.V.cell_dofs)
        return _scatter(r, c, local, (layouts.V.ndof, layouts.V.ndof))

    if form == "b":
        ev = elements.batch_V_eval(mesh, rule)
        div = np.trace(ev.grads, axis1=-2, axis2=-1)
        local = coeffs.alpha * np.einsum("tq,tqj->tj", w2A, div)  # (nt, 9)
        r = np.repeat(layouts.Q.cell_dofs, 9, axis=1)
        return _scatter(r, layouts.V.cell_dofs, local, (layouts.Q.ndof, layouts.V.ndof))

    if form == "c":
        return sp.diags(coeffs.beta * mesh.areas).tocsr()

    if form == "d":
        ev = elements.batch_W_eval(mesh, rule)
        local = ev.divs * mesh.areas[:, None]  # (nt, 3); equals the exact +-1 fluxes
        r = np.repeat(layouts.Q.cell_dofs, 3, axis=1)
        return _scatter(r, layouts.W.cell_dofs, local, (layouts.Q.ndof, layouts.W.ndof))

    if form == "e":
        ev = elements.batch_W_eval(mesh, rule)
        kinv = coeffs.k_inv(mesh.n_triangles)
        kw = np.einsum("tab,tqib->tqia", kinv, ev.values)
        local = np.einsum("tq,tqia,tqja->tij", w2A, kw, ev.values)
        r, c = _pair_indices(layouts.W.cell_dofs, layouts.W.cell_dofs)
        return _scatter(r, c, local, (layouts.W.ndof, layouts.W.ndof))

    raise ValueError(f"unknown form {form!r}")


def mass_matrix(
    space: str,
    mesh: TriMesh,
    layouts: SpaceLayouts,
    rule: Optional[QuadratureRule] = None,
) -> sp.csr_matrix:
    """Plain L2 Gram matrix of a space (no coefficients)."""
    if rule is None:
        rule = triangle_rule_25()
    w2A = rule.weights[None, :] * (2.0 * mesh.areas[:, None])
    if space == "Q":
        return sp.diags(mesh.areas).tocsr()
    if space == "V":
        ev = elements.batch_V_eval(mesh, rule)
        local = np.einsum("tq,tqia,tqja->tij", w2A, ev.values, ev.values)
        r, c = _pair_indices(layouts.V.cell_dofs, layouts.V.cell_dofs)
        return _scatter(r, c, local, (layouts.V.ndof, layouts.V.ndof))
    if space == "W":
        ev = elements.batch_W_eval(mesh, rule)
        local = np.einsum("tq,tqia,tqja->tij", w2A, ev.values, ev.values)
        r, c = _pair_indices(layouts.W.cell_dofs, layouts.W.cell_dofs)
        return _scatter(r, c, local, (layouts.W.ndof, layouts.W.ndof))
    raise ValueError(f"unknown space {space!r}")


def div_gram(mesh: TriMesh, layouts: SpaceLayouts) -> sp.csr_matrix:
    """Gram matrix of (div z, div z') on W; divergences are constant per cell."""
    divs = mesh.rt0_signs / mesh.areas[:, None]
    local = np.einsum("t,ti,tj->tij", mesh.areas, divs, divs)
    r, c = _pair_indices(layouts.W.cell_dofs, layouts.W.cell_dofs)
    return _scatter(r, c, local, (layouts.W.ndof, layouts.W.ndof))


def load_vector(
    space: str,
    f: Callable[[np.ndarray], np.ndarray],
    mesh: TriMesh,
    layouts: SpaceLayouts,
    rule: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """Right-hand-side vector (f, phi_i) for the V or Q space."""
    if rule is None:
        rule = triangle_rule_25()
    X = elements.physical_points(mesh, rule)
    fx = np.asarray(f(X.reshape(-1, 2)), dtype=float)
    w2A = rule.weights[None, :] * (2.0 * mesh.areas[:, None])
    if space == "V":
        fx = fx.reshape(X.shape)
        ev = elements.batch_V_eval(mesh, rule)
        local = np.einsum("tq,tqa,tqia->ti", w2A, fx, ev.values)
        out = np.zeros(layouts.V.ndof)
        np.add.at(out, layouts.V.cell_dofs, local)
        return out
    if space == "Q":
        fx = fx.reshape(X.shape[:2])
        out = np.einsum("tq,tq->t", w2A, fx)
        return out
    raise ValueError(f"unknown space {space!r}")


def eliminate(mat: sp.csr_matrix, essential: np.ndarray) -> sp.csr_matrix:
    """Zero rows and columns of essential dofs and put 1 on the diagonal."""
    n = mat.shape[0]
    keep = sp.diags((~essential).astype(float))
    out = keep @ mat @ keep
    out = out + sp.diags(essential.astype(float))
    return out.tocsr()


def constrained_solve(mat: sp.csr_matrix, rhs: np.ndarray, essential: np.ndarray) -> np.ndarray:
    """Solve with homogeneous essential conditions imposed."""
    m = eliminate(mat, essential)
    b = np.where(essential, 0.0, rhs)
    try:
        x = spla.splu(m.tocsc()).solve(b)
    except RuntimeError as exc:  # pragma: no cover - singular mass guard
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    _check_residual(m, x, b)
    return x


def l2_project(
    layout: DofLayout,
    f: Callable[[np.ndarray], np.ndarray],
    mesh: TriMesh,
    layouts: SpaceLayouts,
    rule: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """L2 projection of an analytic field onto a discrete space.

    The target is the boundary-constrained space (functions vanishing on
    Gamma1 for V, vanishing normal trace for W), so essential dofs of the
    projection are zero. For Q this is the per-element mean.
    """
    if rule is None:
        rule = triangle_rule_25()
    if layout.space == "Q":
        X = elements.physical_points(mesh, rule)
        fx = np.asarray(f(X.reshape(-1, 2)), dtype=float).reshape(X.shape[:2])
        return np.einsum("q,tq->t", 2.0 * rule.weights, fx)
    if layout.space == "V":
        M = mass_matrix("V", mesh, layouts, rule)
        b = load_vector("V", f, mesh, layouts, rule)
        return constrained_solve(M, b, layout.essential)
    if layout.space == "W":
        M = mass_matrix("W", mesh, layouts, rule)
        X = elements.physical_points(mesh, rule)
        fx = np.asarray(f(X.reshape(-1, 2)), dtype=float).reshape(X.shape)
        ev = elements.batch_W_eval(mesh, rule)
        w2A = rule.weights[None, :] * (2.0 * mesh.areas[:, None])
        local = np.einsum("tq,tqa,tqia->ti", w2A, fx, ev.values)
        b = np.zeros(layout.ndof)
        np.add.at(b, layout.cell_dofs, local)
        return constrained_solve(M, b, layout.essential)
    raise ValueError(f"unknown space {layout.space!r}")


RESIDUAL_TOL = 1e-10


def _check_residual(mat: sp.spmatrix, x: np.ndarray, b: np.ndarray) -> None:
    res = np.linalg.norm(mat @ x - b)
    scale = np.linalg.norm(b)
    rel = res if scale == 0.0 else res / scale
    if not np.isfinite(rel) or rel > RESIDUAL_TOL:
        raise SolverError(f"algebraic residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e}")


@dataclass
class BlockSystem:
    """One backward-Euler step operator in the unknowns (u^n, p^n, w^n).

    Block rows (tau the time step, previous state on the right):

        A x_u - B^T x_p                        = F_f
        (1/tau)(C x_p + B x_u) + D x_w         = F_g + (1/tau)(C x_p' + B x_u')
        E x_w - D^T x_p                        = 0
    """

    tau: float
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    E: sp.csr_matrix
    matrix: sp.csr_matrix
    essential: np.ndarray
    slice_u: slice
    slice_p: slice
    slice_w: slice
    _lu: spla.SuperLU

    def step_rhs(
        self, prev_xu: np.ndarray, prev_xp: np.ndarray, f_load: np.ndarray, g_load: np.ndarray
    ) -> np.ndarray:
        rhs = np.concatenate(
            [
                f_load,
                g_load + (self.C @ prev_xp + self.B @ prev_xu) / self.tau,
                np.zeros(self.E.shape[0]),
            ]
        )
        rhs[self.essential] = 0.0
        return rhs

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return x[self.slice_u], x[self.slice_p], x[self.slice_w]


def build_step_system(
    mesh: TriMesh, layouts: SpaceLayouts, coeffs: Coefficients, tau: float
) -> BlockSystem:
    """Assemble and factor the monolithic step matrix for time step tau."""
    if tau <= 0.0:
        raise ValueError(f"time step must be positive, got {tau}")
    A = assemble_form("a", mesh, layouts, coeffs)
    B = assemble_form("b", mesh, layouts, coeffs)
    C = assemble_form("c", mesh, layouts, coeffs)
    D = assemble_form("d", mesh, layouts, coeffs)
    E = assemble_form("e", mesh, layouts, coeffs)

    nu, nq, nw = layouts.V.ndof, layouts.Q.ndof, layouts.W.ndof
    M = sp.bmat(
        [
            [A, -B.T, None],
            [B / tau, C / tau, D],
            [None, -D.T, E],
        ],
        format="csr",
    )
    essential = np.concatenate(
        [layouts.V.essential, layouts.Q.essential, layouts.W.essential]
    )
    M = eliminate(M, essential)
    try:
        lu = spla.splu(M.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"step system factorization failed: {exc}") from exc
    return BlockSystem(
        tau=tau,
        A=A,
        B=B,
        C=C,
        D=D,
        E=E,
        matrix=M,
        essential=essential,
        slice_u=slice(0, nu),
        slice_p=slice(nu, nu + nq),
        slice_w=slice(nu + nq, nu + nq + nw),
        _lu=lu,
    )


def solve_block(system: BlockSystem, rhs: np.ndarray) -> np.ndarray:
    """Direct solve of the factored step system with a residual check."""
    x = system._lu.solve(rhs)
    _check_residual(system.matrix, x, rhs)
    return x
