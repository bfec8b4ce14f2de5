import numpy as np
import pytest

from biot_apost.assembly import assemble_form
from biot_apost.elements import build_layouts
from biot_apost.manufactured import ErrorEngine
from biot_apost.mesh import uniform_unit_square
from biot_apost.stepper import (
    BiotStepper,
    DiscreteState,
    HeatStepper,
    TimeGrid,
    interpolate_states,
)

from .conftest import random_state_vectors


class TestTimeGrid:
    def test_uniform(self):
        g = TimeGrid.uniform(1.0, 5)
        assert g.N == 5
        assert g.T == 1.0
        assert np.allclose(g.taus, 0.2)
        assert g.tau(3) == pytest.approx(0.2)

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0, 0.2, 0.2]))
        with pytest.raises(ValueError):
            TimeGrid.uniform(-1.0, 3)


class TestInitialState:
    def test_zero_load_gives_zero(self, mesh_k2, layouts_k2, coeffs):
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        s = st.initial_state(None)
        assert not s.xu.any() and not s.xp.any() and not s.xw.any()

    def test_elasticity_residual(self, mesh_k2, layouts_k2, coeffs, exact):
        from biot_apost.assembly import eliminate, load_vector

        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        s = st.initial_state(lambda X: exact.f(0.0, X))
        A = eliminate(
            assemble_form("a", mesh_k2, layouts_k2, coeffs), layouts_k2.V.essential
        )
        b = load_vector("V", lambda X: exact.f(0.0, X), mesh_k2, layouts_k2)
        b[layouts_k2.V.essential] = 0.0
        assert np.linalg.norm(A @ s.xu - b) / np.linalg.norm(b) < 1e-10
        assert not s.xu[layouts_k2.V.essential].any()

    def test_elasticity_first_order_convergence(self, coeffs, exact):
        errs = {}
        for k in (2, 3):
            m = uniform_unit_square(k)
            lay = build_layouts(m)
            st = BiotStepper(m, lay, coeffs)
            s = st.initial_state(lambda X: exact.f(0.0, X))
            err = ErrorEngine(m, lay, coeffs, exact)
            errs[k] = np.sqrt(err._a_sq(exact.grad_u(0.0, err.X) - err.grad_u_h(s.xu)))
        # measured 2.11 on the benchmark; first-order rate
        assert 1.8 < errs[2] / errs[3] < 2.4


class TestStep:
    def test_zero_sources_zero_state(self, mesh_k2, layouts_k2, coeffs):
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        prev = st.initial_state(None)
        cur = st.step(prev, 1, 0.1, None, None)
        assert np.allclose(cur.xu, 0.0) and np.allclose(cur.xp, 0.0)

    def test_index_mismatch_rejected(self, mesh_k2, layouts_k2, coeffs):
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        prev = st.initial_state(None)
        with pytest.raises(ValueError):
            st.step(prev, 2, 0.1, None, None)

    @pytest.mark.parametrize("tau", [1e-3, 3e-2, 1.0])
    def test_energy_decay_without_sources(self, mesh_k2, layouts_k2, coeffs, tau):
        rng = np.random.default_rng(17)
        xu, xp, xw = random_state_vectors(layouts_k2, rng)
        A = assemble_form("a", mesh_k2, layouts_k2, coeffs)
        C = assemble_form("c", mesh_k2, layouts_k2, coeffs)
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        state = DiscreteState(0, xu, xp, xw)
        energy = lambda s: float(s.xu @ (A @ s.xu) + s.xp @ (C @ s.xp))
        prev_energy = energy(state)
        for n in range(1, 21):
            state = st.step(state, n, tau, None, None)
            e = energy(state)
            assert e <= prev_energy * (1.0 + 1e-12)
            prev_energy = e

    def test_determinism(self, mesh_k2, layouts_k2, coeffs, exact):
        def run_once():
            st = BiotStepper(mesh_k2, layouts_k2, coeffs)
            s = st.initial_state(lambda X: exact.f(0.0, X))
            for n in range(1, 4):
                t = 0.1 * n
                s = st.step(
                    s, n, 0.1, lambda X: exact.f(t, X), lambda X: exact.g(t, X)
                )
            return s

        a, b = run_once(), run_once()
        assert np.array_equal(a.xu, b.xu)
        assert np.array_equal(a.xp, b.xp)
        assert np.array_equal(a.xw, b.xw)


class TestRun:
    def test_zero_steps(self, mesh_k2, layouts_k2, coeffs):
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        initial = st.initial_state(None)
        traj = st.run(TimeGrid.uniform(1.0, 0), initial)
        assert traj.n_steps == 0
        assert traj.states == [initial]

    def test_observer_count_and_streaming(self, mesh_k2, layouts_k2, coeffs, exact):
        st = BiotStepper(mesh_k2, layouts_k2, coeffs)
        initial = st.initial_state(lambda X: exact.f(0.0, X))
        calls = []
        traj = st.run(
            TimeGrid.uniform(1.0, 5),
            initial,
            f=exact.f,
            g=exact.g,
            observers=[lambda a, b: calls.append((a.n, b.n))],
        )
        assert calls == [(n - 1, n) for n in range(1, 6)]
        assert len(traj.states) == 2  # streaming keeps initial and final
        assert traj.final.n == 5

    def test_smoke_k1_all_finite(self, coeffs, exact):
        m = uniform_unit_square(1)
        lay = build_layouts(m)
        st = BiotStepper(m, lay, coeffs)
        traj = st.run(
            TimeGrid.uniform(1.0, 5),
            st.initial_state(lambda X: exact.f(0.0, X)),
            f=exact.f,
            g=exact.g,
            keep_states=True,
        )
        assert len(traj.states) == 6
        for s in traj.states:
            assert np.all(np.isfinite(s.xu))
            assert np.all(np.isfinite(s.xp))
            assert np.all(np.isfinite(s.xw))


class TestHeatStepper:
    def test_zero(self, mesh_k2, layouts_k2, coeffs):
        st = HeatStepper(mesh_k2, layouts_k2, coeffs)
        s = st.step_heat(st.initial_state(), 1, 0.1, None)
        assert np.allclose(s.xp, 0.0) and np.allclose(s.xw, 0.0)

    def test_constant_pressure_steady_state(self, mesh_k2, layouts_k2, coeffs):
        # all-Gamma1 boundary: constants are discrete steady states for g = 0
        st = HeatStepper(mesh_k2, layouts_k2, coeffs)
        prev = st.initial_state(np.full(layouts_k2.Q.ndof, 3.25))
        cur = st.step_heat(prev, 1, 0.05, None)
        assert np.allclose(cur.xp, 3.25, atol=1e-11)
        assert np.allclose(cur.xw, 0.0, atol=1e-11)

    def test_pressure_energy_decay(self, mesh_k2, layouts_k2, coeffs):
        rng = np.random.default_rng(23)
        C = assemble_form("c", mesh_k2, layouts_k2, coeffs)
        st = HeatStepper(mesh_k2, layouts_k2, coeffs)
        state = st.initial_state(rng.standard_normal(layouts_k2.Q.ndof))
        prev_norm = float(state.xp @ (C @ state.xp))
        for n in range(1, 30):
            state = st.step_heat(state, n, 0.02, None)
            cur = float(state.xp @ (C @ state.xp))
            assert cur <= prev_norm * (1.0 + 1e-12)
            prev_norm = cur


def test_interpolant_endpoints(mesh_k2, layouts_k2):
    rng = np.random.default_rng(29)
    a = DiscreteState(0, *random_state_vectors(layouts_k2, rng))
    b = DiscreteState(1, *random_state_vectors(layouts_k2, rng))
    xu0, xp0, xw0 = interpolate_states(a, b, 0.0)
    xu1, xp1, xw1 = interpolate_states(a, b, 1.0)
    assert np.array_equal(xu0, a.xu) and np.array_equal(xu1, b.xu)
    assert np.array_equal(xp0, a.xp) and np.array_equal(xp1, b.xp)
    assert np.array_equal(xw0, a.xw) and np.array_equal(xw1, b.xw)
