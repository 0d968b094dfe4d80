"""Matrix-free transport sweeps and the source-iteration driver.

The angular flux is an ``(n_dirs, n_dof)`` array of DG coefficients per
ordinate; the macroscopic density is the direction-weighted sum, an
``(n_dof,)`` vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sweep
from .discretization import DiscreteProblem
from .quadrature import AngularQuadrature


@dataclass
class SolveReport:
    """Outcome of one iterative solve.

    ``sweep_count`` counts full transport sweeps (one pass over all
    ordinates); preconditioner applications cost none.  For Krylov solves
    the residual history holds least-squares residual norms, for source
    iteration the sup norm of the density increment.
    """

    converged: bool
    iterations: int
    sweep_count: int
    residual_history: list
    final_density: np.ndarray
    final_flux: np.ndarray | None = None
    method: str = ""
    krylov: object | None = None
    iterates: list | None = None
    window_fluxes: list | None = None


def compute_density(flux: np.ndarray, quadrature: AngularQuadrature) -> np.ndarray:
    """Direction-weighted angular sum, ``rho = sum_j w_j f_j``."""
    return quadrature.weights @ flux


def sweep_all(problem: DiscreteProblem, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(D_j + Sigma_t) f_j = rhs_j`` for every ordinate (one sweep).

    ``rhs`` is either a shared ``(n_dof,)`` vector or per-direction rows
    ``(n_dirs, n_dof)``.
    """
    n_dirs, n_dof = problem.n_dirs, problem.n_dof
    nb = problem.space.n_loc
    n_cells = n_dof // nb
    if rhs.ndim == 1:
        rhs = np.broadcast_to(rhs, (n_dirs, n_dof))
    flux = np.empty((n_dirs, n_dof))
    for grp, t_inv in zip(problem.geometry, problem.t_inv_groups):
        nd = len(grp.dir_ids)
        block_rhs = np.ascontiguousarray(
            rhs[grp.dir_ids].reshape(nd, n_cells, nb)
        )
        out = np.empty((nd, n_cells, nb))
        sweep.solve_lower_block(
            t_inv,
            grp.coup_x,
            grp.up_x,
            grp.coup_y,
            grp.up_y,
            grp.order,
            block_rhs,
            out,
        )
        flux[grp.dir_ids] = out.reshape(nd, n_dof)
    return flux


def transport_sweep(problem: DiscreteProblem, j: int, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(D_j + Sigma_t) x = rhs`` for a single ordinate."""
    if not 0 <= j < problem.n_dirs:
        raise IndexError(f"direction index {j} out of range")
    if rhs.shape != (problem.n_dof,):
        raise ValueError("rhs length must equal the DG dof count")
    nb = problem.space.n_loc
    n_cells = problem.n_dof // nb
    for grp, t_inv in zip(problem.geometry, problem.t_inv_groups):
        pos = np.nonzero(grp.dir_ids == j)[0]
        if pos.size:
            d = int(pos[0])
            out = np.empty((1, n_cells, nb))
            sweep.solve_lower_block(
                np.ascontiguousarray(t_inv[d : d + 1]),
                np.ascontiguousarray(grp.coup_x[d : d + 1]),
                grp.up_x,
                None if grp.coup_y is None else np.ascontiguousarray(grp.coup_y[d : d + 1]),
                grp.up_y,
                grp.order,
                np.ascontiguousarray(rhs.reshape(1, n_cells, nb)),
                out,
            )
            return out.ravel()
    raise IndexError(f"direction index {j} not found")


def si_step(problem: DiscreteProblem, rho_prev: np.ndarray):
    """One source iteration: freeze the density, sweep all ordinates.

    Returns the updated angular flux and the post-sweep density.
    """
    scattering = problem.apply_sigma_s(rho_prev)
    flux = sweep_all(problem, scattering[None, :] + problem.qtilde)
    return flux, compute_density(flux, problem.quadrature)


def apply_lhs_tilde(problem: DiscreteProblem, rho: np.ndarray) -> np.ndarray:
    """Apply the density-space operator ``I - K Sigma_s`` (one sweep)."""
    scattering = problem.apply_sigma_s(rho)
    flux = sweep_all(problem, scattering)
    return rho - compute_density(flux, problem.quadrature)


def rhs_tilde(problem: DiscreteProblem) -> np.ndarray:
    """Density-space right side ``K Qtilde`` (one sweep)."""
    flux = sweep_all(problem, problem.qtilde)
    return compute_density(flux, problem.quadrature)


def source_iteration(
    problem: DiscreteProblem,
    correction=None,
    rho0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    collect_iterates: bool = False,
    flux_window: int = 0,
    method: str = "si",
) -> SolveReport:
    """Source iteration with a pluggable density-correction step.

    Each iteration sweeps once and checks ``||rho_star - rho_prev||_inf``
    against ``tol`` before any correction; on continuation the correction
    ``delta = correction(rho_star - rho_prev, iteration)`` is added.
    ``flux_window`` keeps copies of the first few post-sweep angular fluxes
    (snapshot recording for the windowed corrector).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    rho = np.zeros(problem.n_dof) if rho0 is None else np.asarray(rho0, dtype=float)
    history: list[float] = []
    iterates: list[np.ndarray] | None = [] if collect_iterates else None
    window: list[np.ndarray] | None = [] if flux_window > 0 else None
    flux = None
    converged = False
    sweeps = 0
    it = 0
    for it in range(1, max_iter + 1):
        flux, rho_star = si_step(problem, rho)
        sweeps += 1
        if window is not None and it <= flux_window:
            window.append(flux.copy())
        increment = rho_star - rho
        err = float(np.linalg.norm(increment, ord=np.inf))
        history.append(err)
        if err < tol:
            rho = rho_star
            converged = True
            if iterates is not None:
                iterates.append(rho.copy())
            break
        if correction is not None:
            rho = rho_star + correction(increment, it)
        else:
            rho = rho_star
        if iterates is not None:
            iterates.append(rho.copy())
    return SolveReport(
        converged=converged,
        iterations=it,
        sweep_count=sweeps,
        residual_history=history,
        final_density=rho,
        final_flux=flux,
        method=method,
        iterates=iterates,
        window_fluxes=window,
    )
