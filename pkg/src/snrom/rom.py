"""POD compression, affine operator projection, and reduced correction solves.

A reduced basis stores, besides the orthonormal modes over the stacked
angular-flux space, the two density-space projections needed to apply the
reduced correction without any work on full-size operators: the
direction-weighted row sum (density output map) and the unweighted row sum
(isotropic input map).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .discretization import AffineDecomposition, DiscreteProblem
from .quadrature import AngularQuadrature

CONDITION_LIMIT = 1e14
ZERO_COLUMN_RTOL = 1e-14


class ReducedSolveError(RuntimeError):
    """Reduced operator is singular or too ill-conditioned to trust."""


@dataclass
class ReducedBasis:
    """Orthonormal basis with density projections and projected affine blocks."""

    u: np.ndarray  # (n_h, r)
    singular_values: np.ndarray
    discarded_values: np.ndarray
    n_dirs: int
    u_rho: np.ndarray  # (n_dof, r), direction-weighted row-block sum
    u_iso: np.ndarray  # (n_dof, r), plain row-block sum
    op_blocks: list | None = None  # r x r per affine operator term
    rhs_blocks: list | None = None  # r per affine rhs term
    affine: AffineDecomposition | None = None

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @property
    def n_dof(self) -> int:
        return self.u_rho.shape[0]


def pod(
    snapshots: np.ndarray, eps_svd: float, quadrature: AngularQuadrature
) -> ReducedBasis:
    """Truncated SVD basis of a snapshot matrix.

    The rank is the smallest ``r`` whose leading singular-value sum reaches
    the fraction ``1 - eps_svd`` of the total sum.  Columns with negligible
    norm are dropped before the decomposition.
    """
    if not 0.0 < eps_svd <= 1.0:
        raise ValueError("eps_svd must lie in (0, 1]")
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 2 or snapshots.shape[1] == 0:
        raise ValueError("snapshot matrix needs at least one column")
    norms = np.linalg.norm(snapshots, axis=0)
    max_norm = norms.max(initial=0.0)
    if max_norm == 0.0:
        warnings.warn("all snapshot columns are zero; returning an empty basis")
        return _empty_basis(snapshots.shape[0], quadrature)
    keep = norms >= ZERO_COLUMN_RTOL * max_norm
    u, s, _ = np.linalg.svd(snapshots[:, keep], full_matrices=False)
    total = s.sum()
    fractions = np.cumsum(s) / total
    rank = int(np.searchsorted(fractions, 1.0 - eps_svd) + 1)
    rank = min(rank, s.size)
    return _make_basis(u[:, :rank], s[:rank], s[rank:], quadrature)


def _empty_basis(n_h: int, quadrature: AngularQuadrature) -> ReducedBasis:
    n_dof = n_h // quadrature.n_dirs
    return ReducedBasis(
        u=np.zeros((n_h, 0)),
        singular_values=np.zeros(0),
        discarded_values=np.zeros(0),
        n_dirs=quadrature.n_dirs,
        u_rho=np.zeros((n_dof, 0)),
        u_iso=np.zeros((n_dof, 0)),
    )


def _make_basis(u, s, s_disc, quadrature: AngularQuadrature) -> ReducedBasis:
    n_dirs = quadrature.n_dirs
    n_dof = u.shape[0] // n_dirs
    blocks = u.reshape(n_dirs, n_dof, -1)
    u_rho = np.einsum("j,jnr->nr", quadrature.weights, blocks)
    u_iso = blocks.sum(axis=0)
    return ReducedBasis(
        u=u,
        singular_values=np.asarray(s),
        discarded_values=np.asarray(s_disc),
        n_dirs=n_dirs,
        u_rho=u_rho,
        u_iso=u_iso,
    )


def basis_from_modes(u: np.ndarray, quadrature: AngularQuadrature) -> ReducedBasis:
    """Wrap precomputed orthonormal modes (artifact loading, tests)."""
    return _make_basis(u, np.zeros(u.shape[1]), np.zeros(0), quadrature)


def project_operators(basis: ReducedBasis, affine: AffineDecomposition) -> ReducedBasis:
    """Precompute ``U^T A_q U`` and ``U^T b_p`` for every affine term."""
    u = basis.u
    n_dirs = basis.n_dirs
    op_blocks = []
    for term in affine.terms:
        if basis.rank == 0:
            op_blocks.append(np.zeros((0, 0)))
            continue
        au = np.column_stack(
            [term.matvec(u[:, k].reshape(n_dirs, -1)).ravel() for k in range(basis.rank)]
        )
        op_blocks.append(u.T @ au)
    rhs_blocks = [u.T @ b.ravel() for _, _, b in affine.rhs_terms]
    basis.op_blocks = op_blocks
    basis.rhs_blocks = rhs_blocks
    basis.affine = affine
    return basis


def reduced_operator(basis: ReducedBasis, mu) -> np.ndarray:
    """Assembled reduced operator at ``mu`` from the projected affine blocks."""
    if basis.op_blocks is None:
        raise ValueError("basis has no projected operator blocks")
    out = np.zeros((basis.rank, basis.rank))
    for term, block in zip(basis.affine.terms, basis.op_blocks):
        out += term.theta(mu) * block
    return out


def reduced_rhs(basis: ReducedBasis, mu) -> np.ndarray:
    if basis.rhs_blocks is None:
        raise ValueError("basis has no projected rhs blocks")
    out = np.zeros(basis.rank)
    for (theta, _, _), block in zip(basis.affine.rhs_terms, basis.rhs_blocks):
        out += theta(mu) * block
    return out


def reduced_solve(basis: ReducedBasis, mu, rhs_r: np.ndarray) -> np.ndarray:
    """Dense solve of the reduced system; fails loudly on bad conditioning.

    Conditioning is estimated in the 1-norm from the pivoted factorization
    (LAPACK ``gecon``), so the guard costs O(r^2) on top of the O(r^3)
    factorization.
    """
    if basis.rank == 0:
        return np.zeros(0)
    a = reduced_operator(basis, mu)
    norm_1 = float(np.linalg.norm(a, 1))
    if not np.isfinite(norm_1) or norm_1 == 0.0:
        raise ReducedSolveError("reduced operator vanishes or is not finite")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a)
    rcond = scipy.linalg.lapack.dgecon(lu, norm_1, norm="1")[0]
    if rcond <= 1.0 / CONDITION_LIMIT:
        estimate = np.inf if rcond == 0.0 else 1.0 / rcond
        raise ReducedSolveError(f"reduced operator condition {estimate:.3e} too large")
    return scipy.linalg.lu_solve((lu, piv), rhs_r)


def rom_initial_guess(basis: ReducedBasis, mu) -> np.ndarray:
    """Density initial guess from the reduced solve of the full problem."""
    if basis.rank == 0:
        return np.zeros(basis.n_dof)
    coeffs = reduced_solve(basis, mu, reduced_rhs(basis, mu))
    return basis.u_rho @ coeffs


def apply_rom_correction(
    basis: ReducedBasis, problem: DiscreteProblem, q: np.ndarray
) -> np.ndarray:
    """Reduced density correction ``C_rom^{-1} Sigma_s q``.

    Four steps, never touching a full-size matrix: scatter-weight the
    input, restrict with the isotropic map, solve the reduced system, and
    expand with the density map.
    """
    if basis.rank == 0:
        return np.zeros_like(q)
    y = problem.apply_sigma_s(q)
    y_r = basis.u_iso.T @ y
    coeffs = reduced_solve(basis, problem.mu, y_r)
    return basis.u_rho @ coeffs


def build_solution_basis(
    snapshots: np.ndarray,
    eps_svd: float,
    quadrature: AngularQuadrature,
    affine: AffineDecomposition,
) -> ReducedBasis:
    """POD basis over solution snapshots with projections attached."""
    basis = pod(snapshots, eps_svd, quadrature)
    return project_operators(basis, affine)
