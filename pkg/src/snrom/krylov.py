"""Flexible GMRES on the density-space transport operator.

The operator ``I - K Sigma_s`` is applied matrix-free (one transport sweep
per application); the right preconditioner may change every iteration,
which is what admits the per-iteration reduced-order corrections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .discretization import DiscreteProblem
from .transport import SolveReport, apply_lhs_tilde, rhs_tilde

BREAKDOWN_RTOL = 1e-14
# selective reorthogonalization trigger (norm-drop factor)
REORTH_DROP = 2.0**0.5


@dataclass
class KrylovState:
    """Arnoldi data collected during a solve (testing and eta recovery)."""

    qs: list  # orthonormal Krylov vectors, length m+1
    zs: list  # preconditioned vectors, length m
    h: np.ndarray  # (m+1, m) upper Hessenberg
    beta: float


def hessenberg_lsq(h: np.ndarray, beta: float):
    """Least-squares solve of ``min || beta e1 - h y ||`` via Givens rotations."""
    h = np.asarray(h, dtype=float)
    m = h.shape[1]
    if m < 1:
        raise ValueError("need at least one column")
    r = h.copy()
    g = np.zeros(m + 1)
    g[0] = beta
    for i in range(m):
        a, b = r[i, i], r[i + 1, i]
        denom = np.hypot(a, b)
        if denom == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = a / denom, b / denom
        upper = r[i, i:].copy()
        lower = r[i + 1, i:].copy()
        r[i, i:] = c * upper + s * lower
        r[i + 1, i:] = -s * upper + c * lower
        g[i], g[i + 1] = c * g[i] + s * g[i + 1], -s * g[i] + c * g[i + 1]
    y = scipy.linalg.solve_triangular(r[:m, :m], g[:m])
    return y, abs(g[m])


def fgmres(
    problem: DiscreteProblem,
    preconditioner=None,
    rho0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    collect_state: bool = False,
    method: str = "fgmres",
) -> SolveReport:
    """Flexible GMRES with a per-iteration right preconditioner.

    ``preconditioner(l, q)`` returns the preconditioned vector for
    iteration ``l`` (1-based); ``None`` means the identity.  Stops when the
    least-squares residual norm drops below the absolute tolerance.

    Sweep accounting: one sweep builds the right side, one more computes
    the initial residual when the initial guess is nonzero, and each
    Arnoldi step costs one; preconditioner applications cost none.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if max_iter < 1:
        raise ValueError("need at least one iteration")
    n = problem.n_dof
    sweeps = 0
    b = rhs_tilde(problem)
    sweeps += 1
    b_norm = float(np.linalg.norm(b))

    if rho0 is None:
        rho0 = np.zeros(n)
        r0 = b.copy()
    else:
        rho0 = np.asarray(rho0, dtype=float)
        if np.any(rho0):
            r0 = b - apply_lhs_tilde(problem, rho0)
            sweeps += 1
        else:
            r0 = b.copy()

    beta = float(np.linalg.norm(r0))
    history: list[float] = []
    if beta < tol:
        state = KrylovState(qs=[], zs=[], h=np.zeros((1, 0)), beta=beta)
        return SolveReport(
            converged=True,
            iterations=0,
            sweep_count=sweeps,
            residual_history=history,
            final_density=rho0.copy(),
            method=method,
            krylov=state if collect_state else None,
        )

    max_iter = min(max_iter, n)
    qs = [r0 / beta]
    zs: list[np.ndarray] = []
    h_raw = np.zeros((max_iter + 1, max_iter))
    h_rot = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta

    breakdown_tol = BREAKDOWN_RTOL * max(b_norm, 1.0)
    converged = False
    m = 0
    for l in range(1, max_iter + 1):
        i = l - 1
        q = qs[i]
        z = q.copy() if preconditioner is None else preconditioner(l, q)
        zs.append(z)
        w = apply_lhs_tilde(problem, z)
        sweeps += 1

        norm_before = float(np.linalg.norm(w))
        for k in range(l):
            h_raw[k, i] = w @ qs[k]
            w -= h_raw[k, i] * qs[k]
        if float(np.linalg.norm(w)) < norm_before / REORTH_DROP:
            for k in range(l):
                extra = w @ qs[k]
                h_raw[k, i] += extra
                w -= extra * qs[k]
        h_next = float(np.linalg.norm(w))
        h_raw[l, i] = h_next

        col = h_raw[: l + 1, i].copy()
        for k in range(i):
            t1, t2 = col[k], col[k + 1]
            col[k] = cs[k] * t1 + sn[k] * t2
            col[k + 1] = -sn[k] * t1 + cs[k] * t2
        denom = np.hypot(col[i], col[l])
        if denom == 0.0:
            cs[i], sn[i] = 1.0, 0.0
        else:
            cs[i], sn[i] = col[i] / denom, col[l] / denom
        col[i] = cs[i] * col[i] + sn[i] * col[l]
        col[l] = 0.0
        h_rot[: l + 1, i] = col
        g[i], g[i + 1] = cs[i] * g[i] + sn[i] * g[i + 1], -sn[i] * g[i] + cs[i] * g[i + 1]

        residual = abs(g[l])
        history.append(residual)
        m = l
        if h_next <= breakdown_tol:
            # happy breakdown: the Krylov space contains the exact solution
            converged = residual < max(tol, 10 * breakdown_tol)
            break
        qs.append(w / h_next)
        if residual < tol:
            converged = True
            break

    y = scipy.linalg.solve_triangular(h_rot[:m, :m], g[:m], check_finite=False)
    rho = rho0 + np.column_stack(zs[:m]) @ y

    state = None
    if collect_state:
        state = KrylovState(qs=qs[: m + 1], zs=zs[:m], h=h_raw[: m + 1, :m].copy(), beta=beta)

    return SolveReport(
        converged=converged,
        iterations=m,
        sweep_count=sweeps,
        residual_history=history,
        final_density=rho,
        method=method,
        krylov=state,
    )
