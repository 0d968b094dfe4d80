"""Angular quadrature sets for discrete-ordinates transport."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

SLAB = "slab-1d"
SPHERE = "sphere-2d"


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete ordinate set: directions and normalized weights.

    In slab mode ``directions`` holds the direction cosines in (-1, 1); in
    sphere mode it is an (n, 3) array of unit vectors.  Weights always sum
    to one, so the direction-weighted sum of the angular flux is the
    macroscopic density directly.
    """

    directions: np.ndarray
    weights: np.ndarray
    mode: str

    @property
    def n_dirs(self) -> int:
        return self.weights.shape[0]

    def streaming(self, dim: int) -> np.ndarray:
        """Direction components entering the spatial streaming term, (n, dim)."""
        if self.mode == SLAB:
            if dim != 1:
                raise ValueError("slab quadrature only streams along one axis")
            return self.directions.reshape(-1, 1)
        if dim > 3:
            raise ValueError(f"invalid spatial dimension {dim}")
        return self.directions[:, :dim]

    def second_moments(self) -> np.ndarray:
        """Diagonal of the discrete Eddington tensor, ``sum_j w_j v_{j,a}^2``."""
        if self.mode == SLAB:
            return np.array([self.weights @ self.directions**2])
        return np.einsum("j,ja,ja->a", self.weights, self.directions, self.directions)


def gauss_legendre(n: int) -> AngularQuadrature:
    """Gauss-Legendre ordinates on [-1, 1] with weights normalized to sum 1."""
    if n < 1:
        raise ValueError("quadrature order must be at least 1")
    nodes, weights = npleg.leggauss(n)
    return AngularQuadrature(directions=nodes, weights=weights / 2.0, mode=SLAB)


def chebyshev_legendre(n_alpha: int, n_z: int) -> AngularQuadrature:
    """Tensor-product ordinates on the unit sphere.

    Combines the ``n_alpha``-point uniform (Chebyshev) rule on the azimuthal
    circle, ``alpha_j = (2j - 1) pi / n_alpha`` with weight ``1 / n_alpha``,
    with the normalized ``n_z``-point Gauss-Legendre rule for the polar
    cosine.  Point ``j = (j2 - 1) * n_alpha + j1`` pairs azimuth ``j1`` with
    polar node ``j2``.
    """
    if n_alpha < 1 or n_z < 1:
        raise ValueError("quadrature orders must be at least 1")
    j1 = np.arange(1, n_alpha + 1)
    alphas = (2.0 * j1 - 1.0) * np.pi / n_alpha
    w_alpha = np.full(n_alpha, 1.0 / n_alpha)
    vz, wz = npleg.leggauss(n_z)
    wz = wz / 2.0

    n_total = n_alpha * n_z
    directions = np.empty((n_total, 3))
    weights = np.empty(n_total)
    for j2 in range(n_z):
        sin_polar = np.sqrt(1.0 - vz[j2] ** 2)
        rows = slice(j2 * n_alpha, (j2 + 1) * n_alpha)
        directions[rows, 0] = np.cos(alphas) * sin_polar
        directions[rows, 1] = np.sin(alphas) * sin_polar
        directions[rows, 2] = vz[j2]
        weights[rows] = w_alpha * wz[j2]
    return AngularQuadrature(directions=directions, weights=weights, mode=SPHERE)
