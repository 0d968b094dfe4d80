import numpy as np
import pytest

from snrom import (
    DGSpace,
    ParameterSpace,
    ProblemFamily,
    chebyshev_legendre,
    gauss_legendre,
    interval_mesh,
    rectangle_mesh,
    simple_problem,
)
from snrom.discretization import MaterialTerm


@pytest.fixture(scope="session")
def slab_small():
    """8 cells on [0,1], K=1, 4 ordinates: the dense-verifiable workhorse."""
    mesh = interval_mesh([0.0, 1.0], [1.0 / 8.0])
    space = DGSpace(mesh, 1)
    quad = gauss_legendre(4)
    return simple_problem(
        space,
        quad,
        sigma_a=0.3,
        sigma_s=0.6,
        source=lambda x: 1.0 + 0.2 * np.sin(2.0 * x),
    )


@pytest.fixture(scope="session")
def grid2d_small():
    """4x3 rectangle, K=1, 8 ordinates; small enough for dense checks."""
    mesh = rectangle_mesh(4, 3, (0.0, 1.0, 0.0, 0.75))
    space = DGSpace(mesh, 1)
    quad = chebyshev_legendre(4, 2)
    return simple_problem(
        space,
        quad,
        sigma_a=0.2,
        sigma_s=0.9,
        source=lambda x, y: np.exp(-3.0 * ((x - 0.4) ** 2 + y**2)),
    )


def make_mini_two_material(n_coarse=20, n_fine=10, quad_n=4):
    """Miniature parametric slab with the absorber/scatterer split."""
    mesh = interval_mesh([0.0, 1.0, 11.0], [1.0 / n_fine, 10.0 / n_coarse])
    space = DGSpace(mesh, 1)
    quad = gauss_legendre(quad_n)
    centers = mesh.cell_centers()[:, 0]
    absorber = (centers <= 1.0).astype(float)
    materials = [
        MaterialTerm(
            lambda mu: float(mu[0]), "mu_a", absorption=space.coefficient_blocks(absorber)
        ),
        MaterialTerm(
            lambda mu: float(mu[1]),
            "mu_s",
            scattering=space.coefficient_blocks(1.0 - absorber),
        ),
    ]
    return ProblemFamily(
        space,
        quad,
        materials,
        inflow=lambda x: np.where(np.asarray(x) < 6.0, 5.0, 0.0),
        parameter_space=ParameterSpace(("mu_a", "mu_s"), (0.5, 10.0), (1.5, 50.0)),
        name="mini_two_material",
    )


@pytest.fixture(scope="session")
def mini_family():
    return make_mini_two_material()


@pytest.fixture(scope="session")
def mini_train_set():
    mu_a = np.linspace(0.6, 1.4, 1)
    mu_s = np.linspace(12.0, 48.0, 5)
    ga, gs = np.meshgrid(mu_a, mu_s, indexing="ij")
    return np.column_stack([ga.ravel(), gs.ravel()])
