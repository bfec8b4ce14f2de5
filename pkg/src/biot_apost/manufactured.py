"""Closed-form benchmark fields and the discrete error norms.

The benchmark displacement/pressure/flux triple on the unit square is

    u = cos(t) (sin(pi x) sin(pi y), sin(pi x) sin(pi y)),
    p = sin(t) cos(pi x) cos(pi y),
    w = -K grad p,        K = I,

with sources derived by hand from the strong equations (and validated by
finite differences in the test suite). Instantaneous errors compare the
state at one node against the exact fields; the space-time error
integrates the linear-in-time interpolant mismatch with Gauss quadrature
per interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, TextIO

import numpy as np

from . import elements
from .assembly import Coefficients
from .elements import QuadratureRule, SpaceLayouts, time_rule_5, triangle_rule_25
from .mesh import TriMesh
from .stepper import DiscreteState, TimeGrid, interpolate_states

Scalar = Callable[[float, np.ndarray], np.ndarray]
Vector = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExactSolution:
    """Analytic fields of a space-time benchmark with derived sources.

    All callables take (t, X) with X of shape (..., 2); vector fields
    return (..., 2), gradients (..., 2, 2) with the component index first.
    """

    u: Vector
    du_dt: Vector
    grad_u: Callable[[float, np.ndarray], np.ndarray]
    grad_du_dt: Callable[[float, np.ndarray], np.ndarray]
    p: Scalar
    dp_dt: Scalar
    grad_p: Vector
    w: Vector
    div_w: Scalar
    f: Vector
    df_dt: Vector
    g: Scalar
    params: Coefficients


def benchmark_solution(
    mu: float = 0.4,
    lam: float = 0.4,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> ExactSolution:
    """The unit-square trigonometric benchmark with K = I."""
    pi = np.pi
    params = Coefficients(mu=mu, lam=lam, alpha=alpha, beta=beta)

    def trig(X):
        x, y = X[..., 0], X[..., 1]
        return np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)

    def u(t, X):
        sx, _, sy, _ = trig(X)
        s = np.cos(t) * sx * sy
        return np.stack([s, s], axis=-1)

    def du_dt(t, X):
        sx, _, sy, _ = trig(X)
        s = -np.sin(t) * sx * sy
        return np.stack([s, s], axis=-1)

    def _grad_u_shape(c, X):
        sx, cx, sy, cy = trig(X)
        gx = pi * c * cx * sy
        gy = pi * c * sx * cy
        row = np.stack([gx, gy], axis=-1)
        return np.stack([row, row], axis=-2)

    def grad_u(t, X):
        return _grad_u_shape(np.cos(t), X)

    def grad_du_dt(t, X):
        return _grad_u_shape(-np.sin(t), X)

    def p(t, X):
        _, cx, _, cy = trig(X)
        return np.sin(t) * cx * cy

    def dp_dt(t, X):
        _, cx, _, cy = trig(X)
        return np.cos(t) * cx * cy

    def grad_p(t, X):
        sx, cx, sy, cy = trig(X)
        return -pi * np.sin(t) * np.stack([sx * cy, cx * sy], axis=-1)

    def w(t, X):
        sx, cx, sy, cy = trig(X)
        return pi * np.sin(t) * np.stack([sx * cy, cx * sy], axis=-1)

    def div_w(t, X):
        _, cx, _, cy = trig(X)
        return 2.0 * pi**2 * np.sin(t) * cx * cy

    # f = -div sigma(u) + alpha grad p with
    # div sigma(u) = (mu + lam) grad(div u) + mu Laplace(u)
    def f(t, X):
        sx, cx, sy, cy = trig(X)
        bulk = pi**2 * np.cos(t) * (2.0 * mu * sx * sy - (mu + lam) * (cx * cy - sx * sy))
        fx = bulk - alpha * pi * np.sin(t) * sx * cy
        fy = bulk - alpha * pi * np.sin(t) * cx * sy
        return np.stack([fx, fy], axis=-1)

    def df_dt(t, X):
        sx, cx, sy, cy = trig(X)
        bulk = -(pi**2) * np.sin(t) * (
            2.0 * mu * sx * sy - (mu + lam) * (cx * cy - sx * sy)
        )
        fx = bulk - alpha * pi * np.cos(t) * sx * cy
        fy = bulk - alpha * pi * np.cos(t) * cx * sy
        return np.stack([fx, fy], axis=-1)

    # g = d/dt (beta p + alpha div u) + div w
    def g(t, X):
        sx, cx, sy, cy = trig(X)
        return (
            beta * np.cos(t) * cx * cy
            - alpha * pi * np.sin(t) * (cx * sy + sx * cy)
            + 2.0 * pi**2 * np.sin(t) * cx * cy
        )

    return ExactSolution(
        u=u,
        du_dt=du_dt,
        grad_u=grad_u,
        grad_du_dt=grad_du_dt,
        p=p,
        dp_dt=dp_dt,
        grad_p=grad_p,
        w=w,
        div_w=div_w,
        f=f,
        df_dt=df_dt,
        g=g,
        params=params,
    )


class ErrorEngine:
    """Quadrature-level error norms of discrete states against exact fields.

    All element integrals use the 25-point triangle rule; space-time
    integrals use 5-point Gauss per time interval by default.
    """

    def __init__(
        self,
        mesh: TriMesh,
        layouts: SpaceLayouts,
        coeffs: Coefficients,
        exact: ExactSolution,
        wnorm_squared: bool = True,
    ):
        self.mesh = mesh
        self.layouts = layouts
        self.coeffs = coeffs
        self.exact = exact
        self.wnorm_squared = wnorm_squared
        self.rule = triangle_rule_25()
        self.X = elements.physical_points(mesh, self.rule)
        self.w2A = self.rule.weights[None, :] * (2.0 * mesh.areas[:, None])
        vev = elements.batch_V_eval(mesh, self.rule)
        self._vgrads = vev.grads
        wev = elements.batch_W_eval(mesh, self.rule)
        self._wvals = wev.values
        self._wdivs = wev.divs
        self._kinv = coeffs.k_inv(mesh.n_triangles)
        self._cellV = layouts.V.cell_dofs
        self._cellW = layouts.W.cell_dofs

    # -- discrete field evaluation on the quadrature grid

    def grad_u_h(self, xu: np.ndarray) -> np.ndarray:
        return np.einsum("tqkab,tk->tqab", self._vgrads, xu[self._cellV])

    def w_h(self, xw: np.ndarray) -> np.ndarray:
        return np.einsum("tqka,tk->tqa", self._wvals, xw[self._cellW])

    def div_w_h(self, xw: np.ndarray) -> np.ndarray:
        return np.einsum("tk,tk->t", self._wdivs, xw[self._cellW])

    # -- norms of pointwise mismatch fields

    def _a_sq(self, gdiff: np.ndarray) -> float:
        eps = 0.5 * (gdiff + np.swapaxes(gdiff, -1, -2))
        tr = np.trace(gdiff, axis1=-2, axis2=-1)
        dens = 2.0 * self.coeffs.mu * np.einsum("tqab,tqab->tq", eps, eps)
        dens += self.coeffs.lam * tr**2
        return float(np.einsum("tq,tq->", self.w2A, dens))

    def _c_sq(self, vdiff: np.ndarray) -> float:
        return float(self.coeffs.beta * np.einsum("tq,tq->", self.w2A, vdiff**2))

    def _e_sq(self, wdiff: np.ndarray) -> float:
        kw = np.einsum("tab,tqb->tqa", self._kinv, wdiff)
        return float(np.einsum("tq,tqa,tqa->", self.w2A, kw, wdiff))

    def _l2_sq(self, vdiff: np.ndarray) -> float:
        return float(np.einsum("tq,tq->", self.w2A, vdiff**2))

    def _w_norm_sq(self, wdiff: np.ndarray, divdiff: np.ndarray) -> float:
        div_sq = self._l2_sq(divdiff)
        if self.wnorm_squared:
            return self._e_sq(wdiff) + div_sq
        return self._e_sq(wdiff) + np.sqrt(div_sq)

    def instant_error(
        self, prev: DiscreteState, cur: DiscreteState, t: float, tau: float
    ) -> float:
        """Instantaneous error at a node, backward differences included.

        Undefined at n = 0 (no predecessor); the caller starts the series
        at the first step.
        """
        if cur.n != prev.n + 1:
            raise ValueError("instant error needs consecutive states")
        ex = self.exact
        gu = self.grad_u_h(cur.xu)
        gdu = (self.grad_u_h(cur.xu - prev.xu)) / tau
        wh = self.w_h(cur.xw)
        divwh = self.div_w_h(cur.xw)[:, None] * np.ones_like(self.w2A)
        ph = cur.xp[:, None] * np.ones_like(self.w2A)
        dph = ((cur.xp - prev.xp) / tau)[:, None] * np.ones_like(self.w2A)

        total = self._a_sq(ex.grad_u(t, self.X) - gu)
        total += self._a_sq(ex.grad_du_dt(t, self.X) - gdu)
        total += self._c_sq(ex.p(t, self.X) - ph)
        total += self._c_sq(ex.dp_dt(t, self.X) - dph)
        total += self._w_norm_sq(
            ex.w(t, self.X) - wh, ex.div_w(t, self.X) - divwh
        )
        return float(np.sqrt(total))

    def interval_error_sq(
        self,
        prev: DiscreteState,
        cur: DiscreteState,
        t_prev: float,
        t_cur: float,
        trule: Optional[QuadratureRule] = None,
    ) -> float:
        """Squared space-time error over one interval of the trajectory.

        Integrand: the X-norm of the interpolant error with the dual-norm
        flux-rate term omitted.
        """
        if trule is None:
            trule = time_rule_5()
        tau = t_cur - t_prev
        ex = self.exact
        gdu = self.grad_u_h(cur.xu - prev.xu) / tau
        dph = ((cur.xp - prev.xp) / tau)[:, None] * np.ones_like(self.w2A)
        ones = np.ones_like(self.w2A)

        acc = 0.0
        for theta, wt in zip(trule.points, trule.weights):
            t = t_prev + theta * tau
            xu, xp, xw = interpolate_states(prev, cur, theta)
            part = self._a_sq(ex.grad_u(t, self.X) - self.grad_u_h(xu))
            part += self._a_sq(ex.grad_du_dt(t, self.X) - gdu)
            part += self._c_sq(ex.p(t, self.X) - xp[:, None] * ones)
            part += self._c_sq(ex.dp_dt(t, self.X) - dph)
            part += self._w_norm_sq(
                ex.w(t, self.X) - self.w_h(xw),
                ex.div_w(t, self.X) - self.div_w_h(xw)[:, None] * ones,
            )
            acc += wt * tau * part
        return float(acc)

    def spacetime_error(
        self,
        states: list[DiscreteState],
        grid: TimeGrid,
        trule: Optional[QuadratureRule] = None,
    ) -> float:
        """Space-time error of a fully stored trajectory."""
        if len(states) != grid.N + 1:
            raise ValueError("need one state per grid node")
        acc = 0.0
        for n in range(1, grid.N + 1):
            acc += self.interval_error_sq(
                states[n - 1], states[n], grid.times[n - 1], grid.times[n], trule
            )
        return float(np.sqrt(acc))


def write_error_series(
    out: TextIO, ns: np.ndarray, ts: np.ndarray, e: np.ndarray, eps: np.ndarray
) -> None:
    """Per-step series behind the figures: n, t_n, e_n, eps_n, eps_n/e_n."""
    out.write("n,t_n,e_n,eps_n,ratio\n")
    for n, t, en, epsn in zip(ns, ts, e, eps):
        ratio = epsn / en if en != 0.0 else float("nan")
        out.write(f"{int(n)},{t:.6g},{en:.6g},{epsn:.6g},{ratio:.6g}\n")
