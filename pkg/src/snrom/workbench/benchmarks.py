"""Benchmark problem registry: meshes, cross sections, sources, training grids."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..discretization import (
    DGSpace,
    DiscreteProblem,
    MaterialTerm,
    ParameterSpace,
    ProblemFamily,
    constant_theta,
)
from ..mesh import build_mesh
from ..quadrature import chebyshev_legendre, gauss_legendre

DEFAULT_METHODS = (
    "si-dsa",
    "romsad",
    "tar-ig",
    "pgmres",
    "pgmres-ig",
    "fgmres-tar-ig",
)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Everything needed to reproduce one benchmark study."""

    problem: str
    mesh: dict
    quadrature: tuple  # ("gl", n) or ("cl", n_alpha, n_z)
    degree: int
    parameter_space: ParameterSpace
    train_grid: np.ndarray
    n_test: int
    seed: int
    tol: float
    max_iter: int
    eps_pod: float
    n_w: int
    n_w_fgmres: int
    romsad_window: int
    romsad_switch: int
    methods: tuple = DEFAULT_METHODS

    @property
    def n_train(self) -> int:
        return self.train_grid.shape[0]

    def with_methods(self, methods) -> "BenchmarkSpec":
        return replace(self, methods=tuple(methods))


def _mu0(mu) -> float:
    return float(np.atleast_1d(mu)[0])


def _mu1(mu) -> float:
    return float(np.atleast_1d(mu)[1])


def _grid2(a_vals, s_vals) -> np.ndarray:
    ga, gs = np.meshgrid(np.asarray(a_vals), np.asarray(s_vals), indexing="ij")
    return np.column_stack([ga.ravel(), gs.ravel()])


def two_material(
    *,
    quad_n: int = 16,
    eps_pod: float = 1e-7,
    n_w: int = 2,
    n_w_fgmres: int = 1,
    romsad_window: int = 3,
    romsad_switch: int = 3,
    tol: float = 1e-12,
    max_iter: int = 50,
    seed: int = 20250810,
    n_test: int = 20,
    n_train_a: int = 11,
    n_train_s: int = 41,
    methods=DEFAULT_METHODS,
) -> BenchmarkSpec:
    """Slab with an absorbing inlet region and a thick scattering region.

    Absorption strength on (0, 1] and scattering strength on (1, 11) are
    the two parameters; a fixed isotropic inflow of 5 enters at the left.
    The mesh is refined in the absorber (1/100) and coarse in the
    scatterer (1/10).
    """
    train = _grid2(
        np.linspace(0.5, 1.5, n_train_a), np.linspace(10.0, 50.0, n_train_s)
    )
    return BenchmarkSpec(
        problem="two_material",
        mesh={"breakpoints": [0.0, 1.0, 11.0], "dx": [0.01, 0.1]},
        quadrature=("gl", quad_n),
        degree=1,
        parameter_space=ParameterSpace(("mu_a", "mu_s"), (0.5, 10.0), (1.5, 50.0)),
        train_grid=train,
        n_test=n_test,
        seed=seed,
        tol=tol,
        max_iter=max_iter,
        eps_pod=eps_pod,
        n_w=n_w,
        n_w_fgmres=n_w_fgmres if n_w_fgmres is not None else n_w,
        romsad_window=romsad_window,
        romsad_switch=romsad_switch,
        methods=tuple(methods),
    )


def variable_scattering(
    *,
    nx: int = 80,
    ny: int | None = None,
    n_alpha: int = 30,
    n_z: int = 6,
    n_train: int = 50,
    eps_pod: float = 1e-7,
    n_w: int = 1,
    n_w_fgmres: int | None = None,
    romsad_window: int = 2,
    romsad_switch: int = 3,
    tol: float = 1e-11,
    max_iter: int = 50,
    seed: int = 20250810,
    n_test: int = 10,
    methods=DEFAULT_METHODS,
) -> BenchmarkSpec:
    """Square with a scattering cross section growing smoothly from the center.

    One parameter scales the radial profile ``r^4 (2 - r^4)^2`` on top of a
    0.1 floor; a Gaussian source sits at the origin with zero inflow.
    """
    ny = nx if ny is None else ny
    train = np.linspace(49.9, 99.9, n_train).reshape(-1, 1)
    return BenchmarkSpec(
        problem="variable_scattering",
        mesh={"nx": nx, "ny": ny, "bounds": (-1.0, 1.0, -1.0, 1.0)},
        quadrature=("cl", n_alpha, n_z),
        degree=1,
        parameter_space=ParameterSpace(("mu_s",), (49.9,), (99.9,)),
        train_grid=train,
        n_test=n_test,
        seed=seed,
        tol=tol,
        max_iter=max_iter,
        eps_pod=eps_pod,
        n_w=n_w,
        n_w_fgmres=n_w_fgmres if n_w_fgmres is not None else n_w,
        romsad_window=romsad_window,
        romsad_switch=romsad_switch,
        methods=tuple(methods),
    )


def pin_cell(
    *,
    nx: int = 80,
    ny: int | None = None,
    n_alpha: int = 30,
    n_z: int = 6,
    n_train_a: int = 5,
    n_train_s: int = 5,
    eps_pod: float = 1e-6,
    n_w: int = 2,
    n_w_fgmres: int | None = None,
    romsad_window: int = 3,
    romsad_switch: int = 3,
    tol: float = 1e-11,
    max_iter: int = 50,
    seed: int = 20250810,
    n_test: int = 10,
    methods=DEFAULT_METHODS,
) -> BenchmarkSpec:
    """Weakly interacting square pin inside a thick scattering jacket.

    The outer region scatters with strength 100; the inner quarter-size
    square carries the two parameters.  The training grid follows the
    published multiples-of-0.05 pattern.
    """
    ny = nx if ny is None else ny
    train = _grid2(
        0.05 * np.arange(1, n_train_a + 1), 0.05 * np.arange(1, n_train_s + 1)
    )
    return BenchmarkSpec(
        problem="pin_cell",
        mesh={"nx": nx, "ny": ny, "bounds": (-1.0, 1.0, -1.0, 1.0)},
        quadrature=("cl", n_alpha, n_z),
        degree=1,
        parameter_space=ParameterSpace(("mu_a", "mu_s"), (0.05, 0.05), (0.5, 0.5)),
        train_grid=train,
        n_test=n_test,
        seed=seed,
        tol=tol,
        max_iter=max_iter,
        eps_pod=eps_pod,
        n_w=n_w,
        n_w_fgmres=n_w_fgmres if n_w_fgmres is not None else n_w,
        romsad_window=romsad_window,
        romsad_switch=romsad_switch,
        methods=tuple(methods),
    )


# Unit cells (i, j) of the 5x5 lattice layout holding pure absorbers: the
# even-parity checkerboard minus the center source cell and the cell two
# above it (the escape column).
LATTICE_ABSORBERS = frozenset(
    (i, j)
    for i in range(5)
    for j in range(5)
    if (i + j) % 2 == 0 and (i, j) not in ((2, 2), (2, 4))
)


def lattice(
    *,
    nx: int = 50,
    ny: int | None = None,
    n_alpha: int = 40,
    n_z: int = 6,
    n_train_a: int = 11,
    n_train_s: int = 11,
    eps_pod: float = 1e-7,
    n_w: int = 1,
    n_w_fgmres: int | None = None,
    romsad_window: int = 3,
    romsad_switch: int = 3,
    tol: float = 1e-12,
    max_iter: int = 50,
    seed: int = 20250810,
    n_test: int = 10,
    methods=DEFAULT_METHODS,
) -> BenchmarkSpec:
    """Checkerboard of strong absorbers in a weak scatterer with a central source."""
    ny = nx if ny is None else ny
    train = _grid2(
        np.linspace(95.0, 105.0, n_train_a), np.linspace(0.5, 1.5, n_train_s)
    )
    return BenchmarkSpec(
        problem="lattice",
        mesh={"nx": nx, "ny": ny, "bounds": (0.0, 5.0, 0.0, 5.0)},
        quadrature=("cl", n_alpha, n_z),
        degree=1,
        parameter_space=ParameterSpace(("mu_a", "mu_s"), (95.0, 0.5), (105.0, 1.5)),
        train_grid=train,
        n_test=n_test,
        seed=seed,
        tol=tol,
        max_iter=max_iter,
        eps_pod=eps_pod,
        n_w=n_w,
        n_w_fgmres=n_w_fgmres if n_w_fgmres is not None else n_w,
        romsad_window=romsad_window,
        romsad_switch=romsad_switch,
        methods=tuple(methods),
    )


PROBLEMS = {
    "two_material": two_material,
    "variable_scattering": variable_scattering,
    "pin_cell": pin_cell,
    "lattice": lattice,
}


def get_spec(name: str, **overrides) -> BenchmarkSpec:
    if name not in PROBLEMS:
        raise ValueError(f"unknown benchmark {name!r}; have {sorted(PROBLEMS)}")
    return PROBLEMS[name](**overrides)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


def _quadrature(spec: BenchmarkSpec):
    kind = spec.quadrature[0]
    if kind == "gl":
        return gauss_legendre(spec.quadrature[1])
    if kind == "cl":
        return chebyshev_legendre(spec.quadrature[1], spec.quadrature[2])
    raise ValueError(f"unknown quadrature kind {kind!r}")


def build_family(spec: BenchmarkSpec) -> ProblemFamily:
    """Assemble the parametric problem family for a benchmark."""
    mesh = build_mesh(spec.mesh)
    space = DGSpace(mesh, spec.degree)
    quadrature = _quadrature(spec)
    centers = mesh.cell_centers()

    if spec.problem == "two_material":
        absorber = (centers[:, 0] <= 1.0).astype(float)
        scatterer = 1.0 - absorber
        materials = [
            MaterialTerm(_mu0, "mu_a*absorber", absorption=space.coefficient_blocks(absorber)),
            MaterialTerm(_mu1, "mu_s*scatterer", scattering=space.coefficient_blocks(scatterer)),
        ]
        source = None
        inflow = lambda x: np.where(np.asarray(x) < 6.0, 5.0, 0.0)  # noqa: E731
    elif spec.problem == "variable_scattering":
        def shape(x, y):
            r4 = (x**2 + y**2) ** 2
            return np.where(r4 <= 1.0, r4 * (2.0 - r4) ** 2, 1.0)

        materials = [
            MaterialTerm(constant_theta, "floor", scattering=space.coefficient_blocks(0.1)),
            MaterialTerm(_mu0, "mu_s*profile", scattering=space.coefficient_blocks(shape)),
        ]
        source = lambda x, y: (10.0 / np.pi) * np.exp(-100.0 * (x**2 + y**2))  # noqa: E731
        inflow = None
    elif spec.problem == "pin_cell":
        inner = (
            (np.abs(centers[:, 0]) <= 0.5) & (np.abs(centers[:, 1]) <= 0.5)
        ).astype(float)
        materials = [
            MaterialTerm(
                constant_theta, "jacket", scattering=space.coefficient_blocks(100.0 * (1.0 - inner))
            ),
            MaterialTerm(_mu0, "mu_a*pin", absorption=space.coefficient_blocks(inner)),
            MaterialTerm(_mu1, "mu_s*pin", scattering=space.coefficient_blocks(inner)),
        ]
        source = lambda x, y: np.exp(-100.0 * (x**2 + y**2))  # noqa: E731
        inflow = None
    elif spec.problem == "lattice":
        cell_i = np.floor(centers[:, 0]).astype(int)
        cell_j = np.floor(centers[:, 1]).astype(int)
        absorber = np.array(
            [(i, j) in LATTICE_ABSORBERS for i, j in zip(cell_i, cell_j)], dtype=float
        )
        materials = [
            MaterialTerm(_mu0, "mu_a*absorbers", absorption=space.coefficient_blocks(absorber)),
            MaterialTerm(_mu1, "mu_s*scatterers", scattering=space.coefficient_blocks(1.0 - absorber)),
        ]
        source = lambda x, y: np.where(  # noqa: E731
            (np.abs(x - 2.5) < 0.5) & (np.abs(y - 2.5) < 0.5), 1.0, 0.0
        )
        inflow = None
    else:
        raise ValueError(f"unknown benchmark {spec.problem!r}")

    return ProblemFamily(
        space,
        quadrature,
        materials,
        source=source,
        inflow=inflow,
        parameter_space=spec.parameter_space,
        name=spec.problem,
    )


def make_problem(spec: BenchmarkSpec, mu, family: ProblemFamily | None = None) -> DiscreteProblem:
    """Problem instance at ``mu``; rejects parameters outside the declared box."""
    family = family if family is not None else build_family(spec)
    return family.problem(mu)
