import io

import numpy as np
import pytest

from biot_apost.elements import build_layouts, time_rule
from biot_apost.manufactured import ErrorEngine, benchmark_solution, write_error_series
from biot_apost.mesh import all_gamma2, uniform_unit_square
from biot_apost.stepper import BiotStepper, DiscreteState, TimeGrid

FD_H = 3e-4


def fd_grad(f, t, x):
    out = np.zeros(2)
    for d in range(2):
        dx = np.zeros(2)
        dx[d] = FD_H
        out[d] = (f(t, (x + dx)[None, :])[0] - f(t, (x - dx)[None, :])[0]) / (2 * FD_H)
    return out


def fd_dt(f, t, x):
    return (f(t + FD_H, x[None, :])[0] - f(t - FD_H, x[None, :])[0]) / (2 * FD_H)


class TestBenchmarkFields:
    def test_pressure_starts_at_zero(self, exact):
        X = np.random.default_rng(0).uniform(0, 1, size=(50, 2))
        assert np.allclose(exact.p(0.0, X), 0.0)

    def test_flux_vanishes_at_center(self, exact):
        X = np.array([[0.5, 0.5]])
        for t in (0.3, 1.0, 2.0):
            assert np.allclose(exact.w(t, X), 0.0, atol=1e-14)

    def test_g_at_quarter_period_origin(self, exact):
        # beta cos * cc - alpha pi sin ( .. ) + 2 pi^2 sin * cc at t=pi/2, x=0
        val = exact.g(np.pi / 2, np.array([[0.0, 0.0]]))[0]
        assert val == pytest.approx(2.0 * np.pi**2, rel=1e-12)
        fd = (
            exact.params.beta * fd_dt(exact.p, np.pi / 2, np.zeros(2))
            + exact.params.alpha
            * (
                fd_dt(lambda t, X: exact.grad_u(t, X)[..., 0, 0], np.pi / 2, np.zeros(2))
                + fd_dt(lambda t, X: exact.grad_u(t, X)[..., 1, 1], np.pi / 2, np.zeros(2))
            )
            + exact.div_w(np.pi / 2, np.array([[0.0, 0.0]]))[0]
        )
        assert val == pytest.approx(fd, abs=1e-6)

    def test_pde_residual_identities_fd(self, exact):
        """The three strong-form identities at random space-time samples."""
        rng = np.random.default_rng(1234)
        mu, lam, alpha, beta = (
            exact.params.mu,
            exact.params.lam,
            exact.params.alpha,
            exact.params.beta,
        )
        for _ in range(100):
            t = rng.uniform(0.05, 2.0)
            x = rng.uniform(0.05, 0.95, size=2)

            # flux law: w = -K grad p
            gp = fd_grad(exact.p, t, x)
            assert np.allclose(exact.w(t, x[None, :])[0], -gp, atol=1e-6)

            # momentum: -div sigma(u) + alpha grad p = f
            def sigma(y):
                g = np.zeros((2, 2))
                for d in range(2):
                    dx = np.zeros(2)
                    dx[d] = FD_H
                    g[:, d] = (
                        exact.u(t, (y + dx)[None, :])[0] - exact.u(t, (y - dx)[None, :])[0]
                    ) / (2 * FD_H)
                eps = 0.5 * (g + g.T)
                return 2 * mu * eps + lam * np.trace(g) * np.eye(2)

            divsig = np.zeros(2)
            for d in range(2):
                dx = np.zeros(2)
                dx[d] = FD_H
                divsig += (sigma(x + dx)[:, d] - sigma(x - dx)[:, d]) / (2 * FD_H)
            resid1 = -divsig + alpha * gp - exact.f(t, x[None, :])[0]
            assert np.allclose(resid1, 0.0, atol=1e-6)

            # mass: d/dt (beta p + alpha div u) + div w = g
            div_u = lambda tt, X: exact.grad_u(tt, X)[..., 0, 0] + exact.grad_u(tt, X)[
                ..., 1, 1
            ]
            lhs = (
                beta * fd_dt(exact.p, t, x)
                + alpha * fd_dt(div_u, t, x)
                + exact.div_w(t, x[None, :])[0]
            )
            assert lhs == pytest.approx(exact.g(t, x[None, :])[0], abs=1e-6)

    def test_time_derivative_fields_fd(self, exact):
        rng = np.random.default_rng(5)
        for _ in range(20):
            t = rng.uniform(0.1, 1.5)
            x = rng.uniform(0, 1, size=2)
            assert np.allclose(exact.du_dt(t, x[None, :])[0], fd_dt(exact.u, t, x), atol=1e-6)
            assert np.allclose(
                exact.df_dt(t, x[None, :])[0], fd_dt(exact.f, t, x), atol=2e-5
            )
            assert exact.dp_dt(t, x[None, :])[0] == pytest.approx(
                fd_dt(exact.p, t, x), abs=1e-6
            )


class TestErrorNorms:
    def test_zero_state_equals_exact_norm(self, mesh_k3, layouts_k3, coeffs, exact):
        # closed forms: ||u||_a^2 = pi^2 cos^2(t) (3 mu / 2 + lam / 2),
        # ||p||_c^2 = beta sin^2(t)/4, ||w||_e^2 = pi^2 sin^2(t)/2,
        # ||div w||^2 = pi^4 sin^2(t)
        eng = ErrorEngine(mesh_k3, layouts_k3, coeffs, exact)
        zero = DiscreteState(0, np.zeros(layouts_k3.V.ndof), np.zeros(layouts_k3.Q.ndof), np.zeros(layouts_k3.W.ndof))
        zero1 = DiscreteState(1, zero.xu, zero.xp, zero.xw)
        for t in (0.4, 1.0):
            c2, s2 = np.cos(t) ** 2, np.sin(t) ** 2
            expected = np.sqrt(
                np.pi**2 * (1.5 * coeffs.mu + 0.5 * coeffs.lam)  # u and du/dt parts
                + 0.25 * coeffs.beta
                + s2 * (np.pi**2 / 2 + np.pi**4)
            )
            got = eng.instant_error(zero, zero1, t, 1.0)
            assert got == pytest.approx(expected, rel=1e-5)

    def test_in_space_trajectory_has_zero_error(self, coeffs):
        # fields representable in the discrete spaces (no Gamma1 constraints)
        mesh = uniform_unit_square(2, boundary_classifier=all_gamma2)
        layouts = build_layouts(mesh)
        a_vec = np.array([0.3, -0.2])
        gamma = 0.7

        from biot_apost.manufactured import ExactSolution

        def u(t, X):
            base = np.stack([0.2 * X[..., 0] + 0.1 * X[..., 1], -0.3 * X[..., 1]], axis=-1)
            return (1 + t) * base

        def grad_u(t, X):
            g = np.array([[0.2, 0.1], [0.0, -0.3]])
            return (1 + t) * np.broadcast_to(g, X.shape[:-1] + (2, 2)).copy()

        def w(t, X):
            return (1 + t) * (a_vec + gamma * X)

        ex = ExactSolution(
            u=u,
            du_dt=lambda t, X: u(1.0, X) - u(0.0, X),
            grad_u=grad_u,
            grad_du_dt=lambda t, X: grad_u(1.0, X) - grad_u(0.0, X),
            p=lambda t, X: (1 + t) * np.ones(X.shape[:-1]),
            dp_dt=lambda t, X: np.ones(X.shape[:-1]),
            grad_p=lambda t, X: np.zeros(X.shape),
            w=w,
            div_w=lambda t, X: (1 + t) * 2 * gamma * np.ones(X.shape[:-1]),
            f=lambda t, X: np.zeros(X.shape),
            df_dt=lambda t, X: np.zeros(X.shape),
            g=lambda t, X: np.zeros(X.shape[:-1]),
            params=coeffs,
        )

        def interpolate(t):
            xu = np.zeros(layouts.V.ndof)
            uv = u(t, mesh.vertices)
            xu[0 : 2 * mesh.n_vertices : 2] = uv[:, 0]
            xu[1 : 2 * mesh.n_vertices : 2] = uv[:, 1]
            # edge fluxes of the linear-in-x flux field by 2-point Gauss
            from biot_apost.elements import gauss01

            s, wq = gauss01(4)
            va, vb = mesh.vertices[mesh.edges[:, 0]], mesh.vertices[mesh.edges[:, 1]]
            Xe = va[:, None, :] * (1 - s[None, :, None]) + vb[:, None, :] * s[None, :, None]
            flux = np.einsum("q,eqa,ea->e", wq, w(t, Xe), mesh.edge_normals)
            xw = flux * mesh.edge_lengths
            xp = (1 + t) * np.ones(layouts.Q.ndof)
            return xu, xp, xw

        eng = ErrorEngine(mesh, layouts, coeffs, ex)
        xu0, xp0, xw0 = interpolate(0.0)
        xu1, xp1, xw1 = interpolate(1.0)
        prev = DiscreteState(0, xu0, xp0, xw0)
        cur = DiscreteState(1, xu1, xp1, xw1)
        assert eng.instant_error(prev, cur, 1.0, 1.0) == pytest.approx(0.0, abs=1e-10)
        assert eng.interval_error_sq(prev, cur, 0.0, 1.0) == pytest.approx(0.0, abs=1e-20)

    def test_instant_error_requires_consecutive_states(self, mesh_k2, layouts_k2, coeffs, exact):
        eng = ErrorEngine(mesh_k2, layouts_k2, coeffs, exact)
        z = np.zeros
        s0 = DiscreteState(0, z(layouts_k2.V.ndof), z(layouts_k2.Q.ndof), z(layouts_k2.W.ndof))
        with pytest.raises(ValueError):
            eng.instant_error(s0, s0, 0.5, 0.1)

    def test_time_quadrature_refinement_stable(self, coeffs, exact):
        # doubling the time rule changes the space-time error by < 0.1%
        mesh = uniform_unit_square(1)
        layouts = build_layouts(mesh)
        st = BiotStepper(mesh, layouts, coeffs)
        eng = ErrorEngine(mesh, layouts, coeffs, exact)
        grid = TimeGrid.uniform(1.0, 5)
        prev = st.initial_state(lambda X: exact.f(0.0, X))
        e5 = e10 = 0.0
        for n in range(1, 6):
            t_n = grid.times[n]
            cur = st.step(prev, n, grid.tau(n), lambda X: exact.f(t_n, X), lambda X: exact.g(t_n, X))
            e5 += eng.interval_error_sq(prev, cur, grid.times[n - 1], t_n)
            e10 += eng.interval_error_sq(prev, cur, grid.times[n - 1], t_n, time_rule(10))
            prev = cur
        assert abs(np.sqrt(e5) - np.sqrt(e10)) / np.sqrt(e10) < 1e-3

    def test_one_step_regression_k3(self, coeffs, exact):
        # frozen from the first verified run: e_1 = 0.4471 at k=3, tau=0.05
        mesh = uniform_unit_square(3)
        layouts = build_layouts(mesh)
        st = BiotStepper(mesh, layouts, coeffs)
        eng = ErrorEngine(mesh, layouts, coeffs, exact)
        s0 = st.initial_state(lambda X: exact.f(0.0, X))
        s1 = st.step(s0, 1, 0.05, lambda X: exact.f(0.05, X), lambda X: exact.g(0.05, X))
        e1 = eng.instant_error(s0, s1, 0.05, 0.05)
        assert np.isfinite(e1)
        assert e1 == pytest.approx(0.44709, rel=1e-3)
        assert e1 < 0.9


def test_write_error_series_roundtrip():
    buf = io.StringIO()
    write_error_series(
        buf, np.array([1, 2]), np.array([0.1, 0.2]), np.array([0.5, 0.25]), np.array([1.0, 0.5])
    )
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "n,t_n,e_n,eps_n,ratio"
    row = lines[1].split(",")
    assert int(row[0]) == 1
    assert float(row[3]) / float(row[2]) == pytest.approx(float(row[4]), rel=1e-5)
