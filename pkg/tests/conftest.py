import numpy as np
import pytest

from biot_apost.assembly import Coefficients
from biot_apost.elements import build_layouts
from biot_apost.manufactured import benchmark_solution
from biot_apost.mesh import uniform_unit_square


@pytest.fixture(scope="session")
def coeffs():
    return Coefficients(mu=0.4, lam=0.4, alpha=1.0, beta=1.0)


@pytest.fixture(scope="session")
def exact():
    return benchmark_solution()


@pytest.fixture(scope="session")
def mesh_k1():
    return uniform_unit_square(1)


@pytest.fixture(scope="session")
def mesh_k2():
    return uniform_unit_square(2)


@pytest.fixture(scope="session")
def mesh_k3():
    return uniform_unit_square(3)


@pytest.fixture(scope="session")
def layouts_k2(mesh_k2):
    return build_layouts(mesh_k2)


@pytest.fixture(scope="session")
def layouts_k3(mesh_k3):
    return build_layouts(mesh_k3)


def random_state_vectors(layouts, rng, zero_essential=True):
    """Random coefficient vectors for (V, Q, W), essential dofs zeroed."""
    xu = rng.standard_normal(layouts.V.ndof)
    xp = rng.standard_normal(layouts.Q.ndof)
    xw = rng.standard_normal(layouts.W.ndof)
    if zero_essential:
        xu[layouts.V.essential] = 0.0
        xw[layouts.W.essential] = 0.0
    return xu, xp, xw
