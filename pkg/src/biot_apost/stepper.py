"""Backward-Euler time integration of the three-field system.

The initial data protocol matches the benchmark: p and w start at zero and
the initial displacement solves the elasticity equation with the t=0 load.
Sources are evaluated at the time nodes; no time quadrature enters a step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .assembly import BlockSystem, Coefficients, SolverError
from .elements import SpaceLayouts
from .mesh import TriMesh

VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 = 0 < ... < t_N = T."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1 or t[0] != 0.0:
            raise ValueError("time grid must start at t = 0")
        if len(t) > 1 and np.any(np.diff(t) <= 0.0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if N < 0 or T <= 0.0:
            raise ValueError("need T > 0 and N >= 0")
        return cls(np.linspace(0.0, T, N + 1))

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.times)

    def tau(self, n: int) -> float:
        return float(self.times[n] - self.times[n - 1])


@dataclass(frozen=True)
class DiscreteState:
    """Coefficient vectors of (u_h, p_h, w_h) at one time level."""

    n: int
    xu: np.ndarray
    xp: np.ndarray
    xw: np.ndarray


@dataclass
class Trajectory:
    """Result of a time loop; ``states`` holds every level only when the
    run was asked to keep them, otherwise the initial and final state."""

    states: list[DiscreteState]
    n_steps: int
    kept_all: bool

    @property
    def final(self) -> DiscreteState:
        return self.states[-1]


def interpolate_states(prev: DiscreteState, cur: DiscreteState, theta: float) -> tuple[
    np.ndarray, np.ndarray, np.ndarray
]:
    """Continuous linear interpolant at local coordinate theta in [0, 1];
    theta = 0 gives the previous state, theta = 1 the current one."""
    xu = (1.0 - theta) * prev.xu + theta * cur.xu
    xp = (1.0 - theta) * prev.xp + theta * cur.xp
    xw = (1.0 - theta) * prev.xw + theta * cur.xw
    return xu, xp, xw


class BiotStepper:
    """Drives the coupled (u, p, w) scheme on a fixed mesh.

    The factored step matrix is cached per time step size, so uniform grids
    factor exactly once.
    """

    def __init__(self, mesh: TriMesh, layouts: SpaceLayouts, coeffs: Coefficients):
        self.mesh = mesh
        self.layouts = layouts
        self.coeffs = coeffs
        self._systems: dict[float, BlockSystem] = {}
        self._A_elim: Optional[sp.csr_matrix] = None
        self._A_lu: Optional[spla.SuperLU] = None

    def system(self, tau: float) -> BlockSystem:
        if tau not in self._systems:
            self._systems[tau] = assembly.build_step_system(
                self.mesh, self.layouts, self.coeffs, tau
            )
        return self._systems[tau]

    def initial_state(self, f0: Optional[VectorField]) -> DiscreteState:
        """p = 0, w = 0, and u solving the elasticity equation at t = 0."""
        nV = self.layouts.V.ndof
        xp = np.zeros(self.layouts.Q.ndof)
        xw = np.zeros(self.layouts.W.ndof)
        if f0 is None:
            return DiscreteState(0, np.zeros(nV), xp, xw)
        if self._A_lu is None:
            A = assembly.assemble_form("a", self.mesh, self.layouts, self.coeffs)
            self._A_elim = assembly.eliminate(A, self.layouts.V.essential)
            self._A_lu = spla.splu(self._A_elim.tocsc())
        b = assembly.load_vector("V", f0, self.mesh, self.layouts)
        b[self.layouts.V.essential] = 0.0
        xu = self._A_lu.solve(b)
        assembly._check_residual(self._A_elim, xu, b)
        return DiscreteState(0, xu, xp, xw)

    def step(
        self,
        prev: DiscreteState,
        n: int,
        tau: float,
        f_n: Optional[VectorField],
        g_n: Optional[VectorField],
    ) -> DiscreteState:
        if prev.n != n - 1:
            raise ValueError(f"state has index {prev.n}, expected {n - 1}")
        sysm = self.system(tau)
        f_load = (
            np.zeros(self.layouts.V.ndof)
            if f_n is None
            else assembly.load_vector("V", f_n, self.mesh, self.layouts)
        )
        g_load = (
            np.zeros(self.layouts.Q.ndof)
            if g_n is None
            else assembly.load_vector("Q", g_n, self.mesh, self.layouts)
        )
        rhs = sysm.step_rhs(prev.xu, prev.xp, f_load, g_load)
        try:
            x = assembly.solve_block(sysm, rhs)
        except SolverError as exc:
            raise SolverError(f"step n={n}: {exc}") from exc
        xu, xp, xw = sysm.split(x)
        return DiscreteState(n, xu, xp, xw)

    def run(
        self,
        grid: TimeGrid,
        initial: DiscreteState,
        f: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        g: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        observers: Sequence[Callable[[DiscreteState, DiscreteState], None]] = (),
        keep_states: bool = False,
    ) -> Trajectory:
        """Advance the scheme over the grid, notifying observers with each
        consecutive state pair. Streaming mode (default) retains O(1) states."""
        states = [initial]
        prev = initial
        for n in range(1, grid.N + 1):
            t_n = grid.times[n]
            f_n = None if f is None else (lambda X, t=t_n: f(t, X))
            g_n = None if g is None else (lambda X, t=t_n: g(t, X))
            cur = self.step(prev, n, grid.tau(n), f_n, g_n)
            for obs in observers:
                obs(prev, cur)
            if keep_states:
                states.append(cur)
            else:
                states = [initial, cur]
            prev = cur
        return Trajectory(states=states, n_steps=grid.N, kept_all=keep_states)


class HeatStepper:
    """Mixed heat subcase: the (p, w) block with the u-coupling removed."""

    def __init__(self, mesh: TriMesh, layouts: SpaceLayouts, coeffs: Coefficients):
        self.mesh = mesh
        self.layouts = layouts
        self.coeffs = coeffs
        self._cache: dict[float, tuple[sp.csr_matrix, np.ndarray, spla.SuperLU]] = {}
        self.C = assembly.assemble_form("c", mesh, layouts, coeffs)
        self.D = assembly.assemble_form("d", mesh, layouts, coeffs)
        self.E = assembly.assemble_form("e", mesh, layouts, coeffs)

    def _system(self, tau: float):
        if tau not in self._cache:
            M = sp.bmat(
                [[self.C / tau, self.D], [-self.D.T, self.E]], format="csr"
            )
            essential = np.concatenate(
                [self.layouts.Q.essential, self.layouts.W.essential]
            )
            M = assembly.eliminate(M, essential)
            try:
                lu = spla.splu(M.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"heat system factorization failed: {exc}") from exc
            self._cache[tau] = (M, essential, lu)
        return self._cache[tau]

    def initial_state(self, p0_coeffs: Optional[np.ndarray] = None) -> DiscreteState:
        xp = np.zeros(self.layouts.Q.ndof) if p0_coeffs is None else np.asarray(p0_coeffs)
        return DiscreteState(0, np.zeros(0), xp, np.zeros(self.layouts.W.ndof))

    def step_heat(
        self, prev: DiscreteState, n: int, tau: float, g_n: Optional[VectorField]
    ) -> DiscreteState:
        if prev.n != n - 1:
            raise ValueError(f"state has index {prev.n}, expected {n - 1}")
        M, essential, lu = self._system(tau)
        g_load = (
            np.zeros(self.layouts.Q.ndof)
            if g_n is None
            else assembly.load_vector("Q", g_n, self.mesh, self.layouts)
        )
        rhs = np.concatenate(
            [g_load + (self.C @ prev.xp) / tau, np.zeros(self.layouts.W.ndof)]
        )
        rhs[essential] = 0.0
        x = lu.solve(rhs)
        assembly._check_residual(M, x, rhs)
        nq = self.layouts.Q.ndof
        return DiscreteState(n, np.zeros(0), x[:nq], x[nq:])

    def run(
        self,
        grid: TimeGrid,
        initial: DiscreteState,
        g: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        observers: Sequence[Callable[[DiscreteState, DiscreteState], None]] = (),
        keep_states: bool = False,
    ) -> Trajectory:
        states = [initial]
        prev = initial
        for n in range(1, grid.N + 1):
            t_n = grid.times[n]
            g_n = None if g is None else (lambda X, t=t_n: g(t, X))
            cur = self.step_heat(prev, n, grid.tau(n), g_n)
            for obs in observers:
                obs(prev, cur)
            if keep_states:
                states.append(cur)
            else:
                states = [initial, cur]
            prev = cur
        return Trajectory(states=states, n_steps=grid.N, kept_all=keep_states)
