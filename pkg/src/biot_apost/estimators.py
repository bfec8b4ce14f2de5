"""Residual a posteriori indicators for the fully discrete scheme.

Spatial indicators on a stationary mesh, per element K with size
h_K = |K|^(1/2) and edges F of K:

* first-equation residual: h_K^2 ||f_h + div sigma(u_h) - alpha grad p_h||_K^2
  plus h_K ||[ (sigma(u_h) - alpha p_h I) n_F ]||_F^2 summed over the
  element's edges (each interior edge is integrated from both sides, each
  side weighted by its own element's h_K),
* mass-conservation residual: ||g_h - beta dp - alpha div du - div w_h||_K^2
  evaluated with backward differences dp, du,
* flux residual: h_K^2 ||K^-1 w_h + grad p_h||_K^2
  + h_K^2 ||rot(K^-1 w_h)||_K^2 + edge terms
  h_K ||[(K^-1 w_h) . t_F]||_F^2 + h_K ||[p_h]||_F^2.

Jumps vanish on Gamma1 edges and reduce to the one-sided trace on Gamma2.
Temporal and data-oscillation quantities follow the fully discrete
reliability bound; the h-weighted L2 surrogate replaces dual norms of the
data error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from . import assembly, elements
from .assembly import Coefficients
from .elements import QuadratureRule, SpaceLayouts, edge_rule_5, time_rule_5, triangle_rule_25
from .mesh import BoundaryTag, TriMesh
from .stepper import DiscreteState, TimeGrid


@dataclass(frozen=True)
class EstimatorOptions:
    """Toggles for the two formula ambiguities kept configurable.

    ``wnorm_squared`` selects ||z||_W^2 = ||z||_e^2 + ||div z||^2 (the
    dimensionally consistent reading); ``e2_alpha`` keeps the coupling
    coefficient on the div(du) term of the mass residual.
    """

    wnorm_squared: bool = True
    e2_alpha: bool = True


@dataclass
class EstimatorReport:
    """All indicator values at one time level."""

    n: int
    t: float
    e1_elems: np.ndarray
    e1t_elems: np.ndarray
    e2_elems: np.ndarray
    e3_elems: np.ndarray
    e3t_elems: np.ndarray
    E_time: float
    E_tilde_time: float
    E_data: float = 0.0
    E_tilde_data: float = 0.0

    @property
    def E1(self) -> float:
        return float(self.e1_elems.sum())

    @property
    def E1t(self) -> float:
        return float(self.e1t_elems.sum())

    @property
    def E2(self) -> float:
        return float(self.e2_elems.sum())

    @property
    def E3(self) -> float:
        return float(self.e3_elems.sum())

    @property
    def E3t(self) -> float:
        return float(self.e3t_elems.sum())

    @property
    def E_space(self) -> float:
        return self.E1 + self.E1t + self.E2 + self.E3 + self.E3t

    @property
    def eps(self) -> float:
        return float(np.sqrt(self.E_time + self.E_space))


class _EdgeSide:
    """Static per-side evaluation data for a set of edges."""

    def __init__(self, mesh: TriMesh, edge_ids: np.ndarray, side: int, srule: QuadratureRule):
        self.edges = edge_ids
        self.tris = mesh.edge_tris[edge_ids, side]
        s = srule.points
        va = mesh.edges[edge_ids, 0]
        vb = mesh.edges[edge_ids, 1]
        tv = mesh.triangles[self.tris]  # (m, 3)
        loc_a = np.argmax(tv == va[:, None], axis=1)
        loc_b = np.argmax(tv == vb[:, None], axis=1)
        m, p = len(edge_ids), len(s)
        lam = np.zeros((m, p, 3))
        lam[np.arange(m)[:, None], np.arange(p)[None, :], loc_a[:, None]] = 1.0 - s[None, :]
        lam[np.arange(m)[:, None], np.arange(p)[None, :], loc_b[:, None]] = s[None, :]
        self.lam = lam
        self.v_grads = elements.v_grads_at(mesh, self.tris, lam)  # (m, p, 9, 2, 2)
        self.w_vals = elements.w_values_at(mesh, self.tris, lam)  # (m, p, 3, 2)


class IndicatorEngine:
    """Evaluates every indicator on a fixed mesh/space/coefficient setup."""

    def __init__(
        self,
        mesh: TriMesh,
        layouts: SpaceLayouts,
        coeffs: Coefficients,
        options: EstimatorOptions = EstimatorOptions(),
    ):
        self.mesh = mesh
        self.layouts = layouts
        self.coeffs = coeffs
        self.options = options
        self.rule = triangle_rule_25()
        self.srule = edge_rule_5()
        self.X = elements.physical_points(mesh, self.rule)
        self.w2A = self.rule.weights[None, :] * (2.0 * mesh.areas[:, None])
        vev = elements.batch_V_eval(mesh, self.rule)
        self._vvals = vev.values
        self._vgrads = vev.grads
        self._vhess = vev.hessians  # (nt, 9, 2, 2, 2)
        wev = elements.batch_W_eval(mesh, self.rule)
        self._wvals = wev.values
        self._wdivs = wev.divs
        self._kinv = coeffs.k_inv(mesh.n_triangles)
        self._cellV = layouts.V.cell_dofs
        self._cellW = layouts.W.cell_dofs

        tag = mesh.boundary_tag
        self._int_ids = np.flatnonzero(tag == BoundaryTag.INTERIOR)
        self._g2_ids = np.flatnonzero(tag == BoundaryTag.GAMMA2)
        self._int_s0 = _EdgeSide(mesh, self._int_ids, 0, self.srule)
        self._int_s1 = _EdgeSide(mesh, self._int_ids, 1, self.srule)
        self._g2_s0 = _EdgeSide(mesh, self._g2_ids, 0, self.srule)

        # Gram matrices for the temporal terms
        self._A = assembly.assemble_form("a", mesh, layouts, coeffs)
        self._C = assembly.assemble_form("c", mesh, layouts, coeffs)
        self._E = assembly.assemble_form("e", mesh, layouts, coeffs)
        self._Gdiv = assembly.div_gram(mesh, layouts)

    # ------------------------------------------------------------------
    # field evaluation helpers

    def _v_field(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("tqka,tk->tqa", self._vvals, x[self._cellV])

    def _div_v(self, x: np.ndarray) -> np.ndarray:
        g = np.einsum("tqkab,tk->tqab", self._vgrads, x[self._cellV])
        return np.trace(g, axis1=-2, axis2=-1)

    def _div_sigma(self, x: np.ndarray) -> np.ndarray:
        """Constant per-element div(sigma(u_h)), shape (nt, 2)."""
        S = np.einsum("tkabc,tk->tabc", self._vhess, x[self._cellV])
        lap = np.einsum("tabb->ta", S)
        grad_div = np.einsum("tbba->ta", S)
        mu, lam = self.coeffs.mu, self.coeffs.lam
        return (mu + lam) * grad_div + mu * lap

    def _stress_at_side(self, side: _EdgeSide, xu: np.ndarray, xp: np.ndarray) -> np.ndarray:
        """sigma(u_h) - alpha p_h I at the side's edge points, (m, p, 2, 2)."""
        g = np.einsum("mpkab,mk->mpab", side.v_grads, xu[self._cellV[side.tris]])
        eps = 0.5 * (g + np.swapaxes(g, -1, -2))
        tr = np.trace(g, axis1=-2, axis2=-1)
        mu, lam, alpha = self.coeffs.mu, self.coeffs.lam, self.coeffs.alpha
        stress = 2.0 * mu * eps
        diag = lam * tr - alpha * xp[side.tris][:, None]
        stress[..., 0, 0] += diag
        stress[..., 1, 1] += diag
        return stress

    def _kinv_w_at_side(self, side: _EdgeSide, xw: np.ndarray) -> np.ndarray:
        wv = np.einsum("mpka,mk->mpa", side.w_vals, xw[self._cellW[side.tris]])
        return np.einsum("mab,mpb->mpa", self._kinv[side.tris], wv)

    def _edge_accumulate(
        self,
        out: np.ndarray,
        edge_ids: np.ndarray,
        tris0: np.ndarray,
        jump_sq: np.ndarray,
        tris1: Optional[np.ndarray] = None,
    ) -> None:
        """Add h_K-weighted edge integrals to the adjacent elements."""
        mesh = self.mesh
        integral = mesh.edge_lengths[edge_ids] * (jump_sq @ self.srule.weights)
        np.add.at(out, tris0, mesh.h_K[tris0] * integral)
        if tris1 is not None:
            np.add.at(out, tris1, mesh.h_K[tris1] * integral)

    # ------------------------------------------------------------------
    # spatial indicators

    def est_E1(self, xu: np.ndarray, xp: np.ndarray, xfh: np.ndarray) -> np.ndarray:
        """Per-element momentum-residual indicator.

        The pressure gradient vanishes for piecewise-constant pressure, so
        the interior residual is f_h + div sigma(u_h).
        """
        mesh = self.mesh
        resid = self._v_field(xfh) + self._div_sigma(xu)[:, None, :]
        out = mesh.h_K**2 * np.einsum("tq,tqa,tqa->t", self.w2A, resid, resid)

        if len(self._int_ids):
            s0, s1 = self._int_s0, self._int_s1
            jump = self._stress_at_side(s0, xu, xp) - self._stress_at_side(s1, xu, xp)
            jn = np.einsum("mpab,mb->mpa", jump, mesh.edge_normals[self._int_ids])
            self._edge_accumulate(
                out, self._int_ids, s0.tris, np.einsum("mpa,mpa->mp", jn, jn), s1.tris
            )
        if len(self._g2_ids):
            s0 = self._g2_s0
            trace = self._stress_at_side(s0, xu, xp)
            jn = np.einsum("mpab,mb->mpa", trace, mesh.edge_normals[self._g2_ids])
            self._edge_accumulate(
                out, self._g2_ids, s0.tris, np.einsum("mpa,mpa->mp", jn, jn)
            )
        return out

    def est_E2(
        self, dxu: np.ndarray, dxp: np.ndarray, xw: np.ndarray, gh: np.ndarray
    ) -> np.ndarray:
        """Per-element mass-conservation residual (backward differences in)."""
        coef = self.coeffs.alpha if self.options.e2_alpha else 1.0
        resid = (
            gh[:, None]
            - self.coeffs.beta * dxp[:, None]
            - coef * self._div_v(dxu)
            - self.div_w(xw)[:, None]
        )
        return np.einsum("tq,tq->t", self.w2A, resid**2)

    def est_E3(self, xp: np.ndarray, xw: np.ndarray) -> np.ndarray:
        """Per-element constitutive/flux indicator (d = 2 branch)."""
        mesh = self.mesh
        kw = np.einsum("tab,tqb->tqa", self._kinv, self.w_field(xw))
        out = mesh.h_K**2 * np.einsum("tq,tqa,tqa->t", self.w2A, kw, kw)

        # rot(K^-1 w_h) is gamma (Kinv_10 - Kinv_01) with w_h = a + gamma x
        gamma = np.einsum(
            "tk,tk->t", mesh.rt0_signs / (2.0 * mesh.areas[:, None]), xw[self._cellW]
        )
        rot = gamma * (self._kinv[:, 1, 0] - self._kinv[:, 0, 1])
        out += mesh.h_K**2 * mesh.areas * rot**2

        if len(self._int_ids):
            ids = self._int_ids
            s0, s1 = self._int_s0, self._int_s1
            tf = mesh.edge_tangents[ids]
            jt = np.einsum("mpa,ma->mp", self._kinv_w_at_side(s0, xw), tf) - np.einsum(
                "mpa,ma->mp", self._kinv_w_at_side(s1, xw), tf
            )
            self._edge_accumulate(out, ids, s0.tris, jt**2, s1.tris)
            pj = (xp[s0.tris] - xp[s1.tris])[:, None] * np.ones((1, len(self.srule.points)))
            self._edge_accumulate(out, ids, s0.tris, pj**2, s1.tris)
        if len(self._g2_ids):
            ids = self._g2_ids
            s0 = self._g2_s0
            jt = np.einsum("mpa,ma->mp", self._kinv_w_at_side(s0, xw), mesh.edge_tangents[ids])
            self._edge_accumulate(out, ids, s0.tris, jt**2)
            pj = xp[s0.tris][:, None] * np.ones((1, len(self.srule.points)))
            self._edge_accumulate(out, ids, s0.tris, pj**2)
        return out

    def w_field(self, xw: np.ndarray) -> np.ndarray:
        return np.einsum("tqka,tk->tqa", self._wvals, xw[self._cellW])

    def div_w(self, xw: np.ndarray) -> np.ndarray:
        return np.einsum("tk,tk->t", self._wdivs, xw[self._cellW])

    # ------------------------------------------------------------------
    # temporal and data terms

    def est_time(self, prev: DiscreteState, cur: DiscreteState) -> tuple[float, float]:
        """Temporal indicator pair from undivided state increments."""
        du = cur.xu - prev.xu
        dp = cur.xp - prev.xp
        dw = cur.xw - prev.xw
        div_sq = float(dw @ (self._Gdiv @ dw))
        w_part = float(dw @ (self._E @ dw))
        w_part += div_sq if self.options.wnorm_squared else np.sqrt(div_sq)
        e_time = float(du @ (self._A @ du)) + float(dp @ (self._C @ dp)) + w_part
        return e_time, float(np.sqrt(div_sq))

    def est_data(
        self,
        f: Callable[[float, np.ndarray], np.ndarray],
        df_dt: Callable[[float, np.ndarray], np.ndarray],
        g: Callable[[float, np.ndarray], np.ndarray],
        fh_n: np.ndarray,
        fh_prev: np.ndarray,
        gh_n: np.ndarray,
        t_prev: float,
        t_cur: float,
        trule: Optional[QuadratureRule] = None,
    ) -> tuple[float, float]:
        """Interval data oscillation (h-weighted surrogate for dual norms)."""
        if trule is None:
            trule = time_rule_5()
        tau = t_cur - t_prev
        h2 = self.mesh.h_K**2
        fh_vals = self._v_field(fh_n)
        dfh_vals = self._v_field((fh_n - fh_prev) / tau)
        acc = 0.0
        acc_tilde = 0.0
        for theta, wt in zip(trule.points, trule.weights):
            t = t_prev + theta * tau
            df = f(t, self.X) - fh_vals
            part = float(h2 @ np.einsum("tq,tqa,tqa->t", self.w2A, df, df))
            ddf = df_dt(t, self.X) - dfh_vals
            part += float(h2 @ np.einsum("tq,tqa,tqa->t", self.w2A, ddf, ddf))
            dg = g(t, self.X) - gh_n[:, None]
            g_sq = float(np.einsum("tq,tq->", self.w2A, dg**2))
            acc += wt * tau * (part + g_sq)
            acc_tilde += wt * tau * np.sqrt(g_sq)
        return acc, acc_tilde

    # ------------------------------------------------------------------

    def report(
        self,
        prev: DiscreteState,
        cur: DiscreteState,
        t_prev: float,
        t_cur: float,
        fh_prev: np.ndarray,
        fh_n: np.ndarray,
        gh_n: np.ndarray,
        f: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        df_dt: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        g: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
    ) -> EstimatorReport:
        """Evaluate every indicator for the step from t_prev to t_cur.

        The data terms are computed when the analytic sources are given.
        """
        tau = t_cur - t_prev
        dxu = (cur.xu - prev.xu) / tau
        dxp = (cur.xp - prev.xp) / tau
        dxw = (cur.xw - prev.xw) / tau
        dfh = (fh_n - fh_prev) / tau
        e_time, e_tilde_time = self.est_time(prev, cur)
        e_data = e_tilde_data = 0.0
        if f is not None and df_dt is not None and g is not None:
            e_data, e_tilde_data = self.est_data(
                f, df_dt, g, fh_n, fh_prev, gh_n, t_prev, t_cur
            )
        return EstimatorReport(
            n=cur.n,
            t=t_cur,
            e1_elems=self.est_E1(cur.xu, cur.xp, fh_n),
            e1t_elems=self.est_E1(dxu, dxp, dfh),
            e2_elems=self.est_E2(dxu, dxp, cur.xw, gh_n),
            e3_elems=self.est_E3(cur.xp, cur.xw),
            e3t_elems=self.est_E3(dxp, dxw),
            E_time=e_time,
            E_tilde_time=e_tilde_time,
            E_data=e_data,
            E_tilde_data=e_tilde_data,
        )


def aggregate(
    reports: Sequence[EstimatorReport], grid: TimeGrid, include_data: bool = False
) -> tuple[float, np.ndarray]:
    """Total indicator over the run and the per-step series eps_n.

    Data oscillation is excluded from the total by default; when included
    it enters without a tau weight (it is already an interval integral).
    """
    if len(reports) != grid.N:
        raise ValueError(f"expected {grid.N} reports, got {len(reports)}")
    taus = grid.taus
    total = 0.0
    eps = np.empty(len(reports))
    for i, rep in enumerate(reports):
        total += taus[i] * (rep.E_time + rep.E_space)
        if include_data:
            total += rep.E_data
        eps[i] = rep.eps
    return float(np.sqrt(total)), eps


# ---------------------------------------------------------------------------
# heat subcase


@dataclass
class HeatReport:
    """Indicator values of the mixed heat discretization at one level."""

    n: int
    t: float
    eta_time: float
    eta_tilde_space: float
    e3_elems: np.ndarray
    e3t_elems: np.ndarray
    g_data: float
    E_tilde_time: float

    @property
    def eta_space(self) -> float:
        return self.eta_tilde_space + float(self.e3_elems.sum()) + float(
            self.e3t_elems.sum()
        )

    @property
    def eps(self) -> float:
        return float(np.sqrt(self.eta_time + self.eta_space))


def heat_report(
    engine: IndicatorEngine,
    prev: DiscreteState,
    cur: DiscreteState,
    t_prev: float,
    t_cur: float,
    gh_n: np.ndarray,
    g: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
) -> HeatReport:
    """Per-step eta quantities of the heat corollary."""
    tau = t_cur - t_prev
    dxp = (cur.xp - prev.xp) / tau
    dxw = (cur.xw - prev.xw) / tau
    resid = gh_n[:, None] - engine.coeffs.beta * dxp[:, None] - engine.div_w(cur.xw)[:, None]
    eta_tilde = float(np.einsum("tq,tq->", engine.w2A, resid**2))

    dp = cur.xp - prev.xp
    dw = cur.xw - prev.xw
    div_sq = float(dw @ (engine._Gdiv @ dw))
    w_part = float(dw @ (engine._E @ dw))
    w_part += div_sq if engine.options.wnorm_squared else np.sqrt(div_sq)
    eta_time = float(dp @ (engine._C @ dp)) + w_part

    g_data = 0.0
    if g is not None:
        trule = time_rule_5()
        for theta, wt in zip(trule.points, trule.weights):
            t = t_prev + theta * tau
            dg = g(t, engine.X) - gh_n[:, None]
            g_data += wt * tau * float(np.einsum("tq,tq->", engine.w2A, dg**2))

    return HeatReport(
        n=cur.n,
        t=t_cur,
        eta_time=eta_time,
        eta_tilde_space=eta_tilde,
        e3_elems=engine.est_E3(cur.xp, cur.xw),
        e3t_elems=engine.est_E3(dxp, dxw),
        g_data=g_data,
        E_tilde_time=float(np.sqrt(div_sq)),
    )


def aggregate_heat(reports: Sequence[HeatReport], grid: TimeGrid) -> tuple[float, np.ndarray]:
    if len(reports) != grid.N:
        raise ValueError(f"expected {grid.N} reports, got {len(reports)}")
    taus = grid.taus
    total = 0.0
    eps = np.empty(len(reports))
    for i, rep in enumerate(reports):
        total += taus[i] * (rep.eta_time + rep.eta_space)
        eps[i] = rep.eps
    return float(np.sqrt(total)), eps


# ---------------------------------------------------------------------------
# serialization

SCALAR_COLUMNS = (
    "n,t_n,E_time,E_tilde_time,E1,E1t,E2,E3,E3t,E_space,eps_n,E_data,E_tilde_data"
)


def write_scalar_series(out: TextIO, reports: Sequence[EstimatorReport]) -> None:
    """One CSV row of indicator scalars per time level."""
    out.write(SCALAR_COLUMNS + "\n")
    for r in reports:
        vals = (
            r.E_time,
            r.E_tilde_time,
            r.E1,
            r.E1t,
            r.E2,
            r.E3,
            r.E3t,
            r.E_space,
            r.eps,
            r.E_data,
            r.E_tilde_data,
        )
        out.write(f"{r.n},{r.t:.6g}," + ",".join(f"{v:.6g}" for v in vals) + "\n")


def write_element_rows(out: TextIO, reports: Sequence[EstimatorReport]) -> None:
    """One CSV row per (time level, element) with the per-element values."""
    out.write("n,element,E1,E1t,E2,E3,E3t\n")
    for r in reports:
        for t in range(len(r.e1_elems)):
            out.write(
                f"{r.n},{t},{r.e1_elems[t]:.6g},{r.e1t_elems[t]:.6g},"
                f"{r.e2_elems[t]:.6g},{r.e3_elems[t]:.6g},{r.e3t_elems[t]:.6g}\n"
            )
