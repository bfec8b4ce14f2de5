"""Mixed heat subcase wired end to end: RT0 x P0 stepping, eta indicators,
and a manufactured solution reusing the benchmark pressure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import assembly, estimators
from .assembly import Coefficients
from .elements import QuadratureRule, SpaceLayouts, build_layouts, time_rule_5
from .estimators import EstimatorOptions, HeatReport, IndicatorEngine
from .manufactured import ErrorEngine, ExactSolution
from .mesh import TriMesh, uniform_unit_square
from .stepper import DiscreteState, HeatStepper, TimeGrid, interpolate_states

Scalar = Callable[[float, np.ndarray], np.ndarray]
Vector = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HeatExact:
    """Analytic (p, w) pair with source g = beta dp/dt + div w."""

    p: Scalar
    dp_dt: Scalar
    grad_p: Vector
    w: Vector
    div_w: Scalar
    g: Scalar
    params: Coefficients


def heat_benchmark(beta: float = 1.0) -> HeatExact:
    """p = sin(t) cos(pi x) cos(pi y), w = -grad p, K = I."""
    pi = np.pi
    params = Coefficients(mu=1.0, lam=0.0, alpha=0.0, beta=beta)

    def cc(X):
        return np.cos(pi * X[..., 0]) * np.cos(pi * X[..., 1])

    def p(t, X):
        return np.sin(t) * cc(X)

    def dp_dt(t, X):
        return np.cos(t) * cc(X)

    def grad_p(t, X):
        x, y = X[..., 0], X[..., 1]
        return -pi * np.sin(t) * np.stack(
            [np.sin(pi * x) * np.cos(pi * y), np.cos(pi * x) * np.sin(pi * y)], axis=-1
        )

    def w(t, X):
        return -grad_p(t, X)

    def div_w(t, X):
        return 2.0 * pi**2 * np.sin(t) * cc(X)

    def g(t, X):
        return beta * dp_dt(t, X) + div_w(t, X)

    return HeatExact(p=p, dp_dt=dp_dt, grad_p=grad_p, w=w, div_w=div_w, g=g, params=params)


class HeatErrorEngine:
    """Space-time error of the heat trajectory in the (p, w) norm with the
    flux-rate dual term omitted."""

    def __init__(
        self,
        mesh: TriMesh,
        layouts: SpaceLayouts,
        coeffs: Coefficients,
        exact: HeatExact,
        wnorm_squared: bool = True,
    ):
        dummy = _as_exact_solution(exact)
        self._eng = ErrorEngine(mesh, layouts, coeffs, dummy, wnorm_squared)
        self.exact = exact

    def interval_error_sq(
        self,
        prev: DiscreteState,
        cur: DiscreteState,
        t_prev: float,
        t_cur: float,
        trule: Optional[QuadratureRule] = None,
    ) -> float:
        if trule is None:
            trule = time_rule_5()
        eng, ex = self._eng, self.exact
        tau = t_cur - t_prev
        dph = ((cur.xp - prev.xp) / tau)[:, None] * np.ones_like(eng.w2A)
        ones = np.ones_like(eng.w2A)
        acc = 0.0
        for theta, wt in zip(trule.points, trule.weights):
            t = t_prev + theta * tau
            xp = (1.0 - theta) * prev.xp + theta * cur.xp
            xw = (1.0 - theta) * prev.xw + theta * cur.xw
            part = eng._c_sq(ex.p(t, eng.X) - xp[:, None] * ones)
            part += eng._c_sq(ex.dp_dt(t, eng.X) - dph)
            part += eng._w_norm_sq(
                ex.w(t, eng.X) - eng.w_h(xw),
                ex.div_w(t, eng.X) - eng.div_w_h(xw)[:, None] * ones,
            )
            acc += wt * tau * part
        return float(acc)

    def init_error_sq(self, state: DiscreteState) -> float:
        """eta_init: c-norm of the initial pressure error plus e-norm of the
        initial flux error."""
        eng, ex = self._eng, self.exact
        ones = np.ones_like(eng.w2A)
        out = eng._c_sq(ex.p(0.0, eng.X) - state.xp[:, None] * ones)
        out += eng._e_sq(ex.w(0.0, eng.X) - eng.w_h(state.xw))
        return float(out)

    def instant_error(
        self, prev: DiscreteState, cur: DiscreteState, t: float, tau: float
    ) -> float:
        eng, ex = self._eng, self.exact
        ones = np.ones_like(eng.w2A)
        out = eng._c_sq(ex.p(t, eng.X) - cur.xp[:, None] * ones)
        out += eng._c_sq(ex.dp_dt(t, eng.X) - ((cur.xp - prev.xp) / tau)[:, None] * ones)
        out += eng._w_norm_sq(
            ex.w(t, eng.X) - eng.w_h(cur.xw),
            ex.div_w(t, eng.X) - eng.div_w_h(cur.xw)[:, None] * ones,
        )
        return float(np.sqrt(out))


def _as_exact_solution(exact: HeatExact) -> ExactSolution:
    zero_v = lambda t, X: np.zeros(X.shape)
    zero_g = lambda t, X: np.zeros(X.shape[:-1] + (2, 2))
    zero_s = lambda t, X: np.zeros(X.shape[:-1])
    return ExactSolution(
        u=zero_v,
        du_dt=zero_v,
        grad_u=zero_g,
        grad_du_dt=zero_g,
        p=exact.p,
        dp_dt=exact.dp_dt,
        grad_p=exact.grad_p,
        w=exact.w,
        div_w=exact.div_w,
        f=zero_v,
        df_dt=zero_v,
        g=exact.g,
        params=exact.params,
    )


@dataclass
class HeatLevelResult:
    k: int
    h: float
    tau: float
    E: float
    Est: float
    eta_init: float
    reports: list[HeatReport]
    eps: np.ndarray
    e_series: np.ndarray
    ts: np.ndarray


def run_heat_level(
    k: int,
    tau: float,
    T: float,
    exact: Optional[HeatExact] = None,
    options: EstimatorOptions = EstimatorOptions(),
) -> HeatLevelResult:
    """One mesh level of the heat study: step, estimate, measure."""
    if exact is None:
        exact = heat_benchmark()
    coeffs = exact.params
    mesh = uniform_unit_square(k)
    layouts = build_layouts(mesh)
    N = round(T / tau)
    grid = TimeGrid.uniform(T, N)
    stepper = HeatStepper(mesh, layouts, coeffs)
    engine = IndicatorEngine(mesh, layouts, coeffs, options)
    err = HeatErrorEngine(mesh, layouts, coeffs, exact, options.wnorm_squared)

    p0 = assembly.l2_project(layouts.Q, lambda X: exact.p(0.0, X), mesh, layouts)
    state = stepper.initial_state(p0)
    eta_init = err.init_error_sq(state)

    reports: list[HeatReport] = []
    e_series = np.empty(N)
    E2 = 0.0
    prev = state
    for n in range(1, N + 1):
        t_prev, t_n = grid.times[n - 1], grid.times[n]
        cur = stepper.step_heat(prev, n, grid.tau(n), lambda X: exact.g(t_n, X))
        gh_n = assembly.l2_project(layouts.Q, lambda X: exact.g(t_n, X), mesh, layouts)
        reports.append(
            estimators.heat_report(engine, prev, cur, t_prev, t_n, gh_n, exact.g)
        )
        e_series[n - 1] = err.instant_error(prev, cur, t_n, grid.tau(n))
        E2 += err.interval_error_sq(prev, cur, t_prev, t_n)
        prev = cur

    Est, eps = estimators.aggregate_heat(reports, grid)
    return HeatLevelResult(
        k=k,
        h=2.0**-k,
        tau=grid.tau(1),
        E=float(np.sqrt(E2)),
        Est=Est,
        eta_init=eta_init,
        reports=reports,
        eps=eps,
        e_series=e_series,
        ts=grid.times[1:],
    )
