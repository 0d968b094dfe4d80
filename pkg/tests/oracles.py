"""Independent oracles for the test suite.

Everything here re-derives quantities from first principles (explicit
Legendre recurrences, brute-force quadrature, dense linear algebra) so the
production assembly and solver paths are checked against arithmetic that
shares no code with them.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# Legendre utilities via explicit recurrences (no numpy.polynomial)
# ---------------------------------------------------------------------------


def legendre_value_deriv(n: int, x):
    """Values and derivatives of P_n via the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    denom = x**2 - 1.0
    interior = np.abs(denom) > 1e-14
    dp = np.empty_like(x)
    dp[interior] = n * (x[interior] * p[interior] - p_prev[interior]) / denom[interior]
    # endpoint values: P'_n(+-1) = (+-1)^{n+1} n (n+1) / 2
    edge = ~interior
    dp[edge] = np.sign(x[edge]) ** (n + 1) * n * (n + 1) / 2.0
    return p, dp


def newton_legendre_nodes(n: int, sweeps: int = 100):
    """Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration."""
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (4 * k - 1) / (4 * n + 2))  # standard initial guess
    for _ in range(sweeps):
        p, dp = legendre_value_deriv(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    _, dp = legendre_value_deriv(n, x)
    w = 2.0 / ((1.0 - x**2) * dp**2)
    return np.sort(x), w[np.argsort(x)]


def orthonormal_basis_1d(k_max: int, s):
    """Orthonormal Legendre values on [-1, 1], rebuilt from the recurrence."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    rows = []
    for k in range(k_max + 1):
        p, _ = legendre_value_deriv(k, s)
        rows.append(np.sqrt((2 * k + 1) / 2.0) * p)
    return np.vstack(rows)


def orthonormal_deriv_1d(k_max: int, s):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    rows = [np.zeros_like(s)]
    for k in range(1, k_max + 1):
        _, dp = legendre_value_deriv(k, s)
        rows.append(np.sqrt((2 * k + 1) / 2.0) * dp)
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# Basis evaluation on physical cells
# ---------------------------------------------------------------------------


def _cell_basis_1d(space, cell, x):
    lo, hi = space.mesh.cell_bounds(cell)
    h = hi - lo
    s = 2.0 * (np.asarray(x, dtype=float) - lo) / h - 1.0
    vals = orthonormal_basis_1d(space.degree, s) * np.sqrt(2.0 / h)
    derivs = orthonormal_deriv_1d(space.degree, s) * np.sqrt(2.0 / h) * (2.0 / h)
    return vals, derivs


def _cell_basis_2d(space, cell, x, y):
    x0, x1, y0, y1 = space.mesh.cell_bounds(cell)
    hx, hy = x1 - x0, y1 - y0
    sx = 2.0 * (np.asarray(x, dtype=float) - x0) / hx - 1.0
    sy = 2.0 * (np.asarray(y, dtype=float) - y0) / hy - 1.0
    vx = orthonormal_basis_1d(space.degree, sx) * np.sqrt(2.0 / hx)
    vy = orthonormal_basis_1d(space.degree, sy) * np.sqrt(2.0 / hy)
    dvx = orthonormal_deriv_1d(space.degree, sx) * np.sqrt(2.0 / hx) * (2.0 / hx)
    dvy = orthonormal_deriv_1d(space.degree, sy) * np.sqrt(2.0 / hy) * (2.0 / hy)
    k1 = space.degree + 1
    nq = np.asarray(x).size
    vals = np.empty((k1 * k1, nq))
    gx = np.empty((k1 * k1, nq))
    gy = np.empty((k1 * k1, nq))
    for mx in range(k1):
        for my in range(k1):
            m = mx * k1 + my
            vals[m] = vx[mx] * vy[my]
            gx[m] = dvx[mx] * vy[my]
            gy[m] = vx[mx] * dvy[my]
    return vals, gx, gy


def _field_values(fld, *coords):
    if callable(fld):
        return np.asarray(fld(*coords), dtype=float)
    return np.full_like(np.asarray(coords[0], dtype=float), float(fld))


# ---------------------------------------------------------------------------
# Dense operator assembly by quadrature (the Eq.-by-quadrature oracle)
# ---------------------------------------------------------------------------


def dense_direction_matrix(space, quadrature, sigma_t_field, j, quad_order=12):
    """Streaming + total matrix for ordinate ``j`` by brute-force quadrature."""
    mesh = space.mesh
    dim = mesh.dimension
    nb = space.n_loc
    n = space.n_dof
    gl_x, gl_w = newton_legendre_nodes(quad_order)
    comps = quadrature.streaming(dim)[j]
    a = np.zeros((n, n))

    for cell in range(mesh.n_cells):
        sl = slice(cell * nb, (cell + 1) * nb)
        if dim == 1:
            lo, hi = mesh.cell_bounds(cell)
            h = hi - lo
            xq = lo + 0.5 * h * (gl_x + 1.0)
            vals, derivs = _cell_basis_1d(space, cell, xq)
            wq = 0.5 * h * gl_w
            sig = _field_values(sigma_t_field, xq)
            a[sl, sl] += -comps[0] * (derivs * wq) @ vals.T
            a[sl, sl] += (vals * (wq * sig)) @ vals.T
        else:
            x0, x1, y0, y1 = mesh.cell_bounds(cell)
            hx, hy = x1 - x0, y1 - y0
            xg, yg = np.meshgrid(
                x0 + 0.5 * hx * (gl_x + 1.0), y0 + 0.5 * hy * (gl_x + 1.0), indexing="ij"
            )
            wg = 0.25 * hx * hy * np.outer(gl_w, gl_w)
            xf, yf, wf = xg.ravel(), yg.ravel(), wg.ravel()
            vals, gx, gy = _cell_basis_2d(space, cell, xf, yf)
            sig = _field_values(sigma_t_field, xf, yf)
            a[sl, sl] += -(comps[0] * gx + comps[1] * gy) * wf @ vals.T
            a[sl, sl] += (vals * (wf * sig)) @ vals.T

    # face terms: upwind flux, one face at a time
    def face_quad(cell, axis, at_plus):
        """Points, weights, and traces along one face of a cell."""
        if dim == 1:
            lo, hi = mesh.cell_bounds(cell)
            x = np.array([hi if at_plus else lo])
            vals, _ = _cell_basis_1d(space, cell, x)
            return vals, np.array([1.0])
        x0, x1, y0, y1 = mesh.cell_bounds(cell)
        if axis == 0:
            x = np.full(quad_order, x1 if at_plus else x0)
            y = y0 + 0.5 * (y1 - y0) * (gl_x + 1.0)
            w = 0.5 * (y1 - y0) * gl_w
        else:
            y = np.full(quad_order, y1 if at_plus else y0)
            x = x0 + 0.5 * (x1 - x0) * (gl_x + 1.0)
            w = 0.5 * (x1 - x0) * gl_w
        vals, _, _ = _cell_basis_2d(space, cell, x, y)
        return vals, w

    for c_minus, c_plus, axis, _area in mesh.interior_faces():
        v_n = comps[axis]  # normal from minus to plus along +axis
        tr_minus, w = face_quad(c_minus, axis, True)
        tr_plus, _ = face_quad(c_plus, axis, False)
        up = tr_minus if v_n >= 0.0 else tr_plus
        up_cell = c_minus if v_n >= 0.0 else c_plus
        su = slice(up_cell * nb, (up_cell + 1) * nb)
        sm = slice(c_minus * nb, (c_minus + 1) * nb)
        sp_ = slice(c_plus * nb, (c_plus + 1) * nb)
        a[sm, su] += v_n * (tr_minus * w) @ up.T
        a[sp_, su] += -v_n * (tr_plus * w) @ up.T

    for cell, axis, side, _area in mesh.boundary_faces():
        v_n = comps[axis] * side
        if v_n <= 0.0:
            continue  # inflow faces contribute to the rhs only
        tr, w = face_quad(cell, axis, side > 0)
        sl = slice(cell * nb, (cell + 1) * nb)
        a[sl, sl] += v_n * (tr * w) @ tr.T
    return a


def dense_coefficient_blocks(space, fld, quad_order=20):
    """Weighted mass matrix blocks integrated with a fine rule."""
    mesh = space.mesh
    nb = space.n_loc
    gl_x, gl_w = newton_legendre_nodes(quad_order)
    out = np.zeros((mesh.n_cells, nb, nb))
    for cell in range(mesh.n_cells):
        if mesh.dimension == 1:
            lo, hi = mesh.cell_bounds(cell)
            h = hi - lo
            xq = lo + 0.5 * h * (gl_x + 1.0)
            vals, _ = _cell_basis_1d(space, cell, xq)
            wq = 0.5 * h * gl_w
            out[cell] = (vals * (wq * _field_values(fld, xq))) @ vals.T
        else:
            x0, x1, y0, y1 = mesh.cell_bounds(cell)
            hx, hy = x1 - x0, y1 - y0
            xg, yg = np.meshgrid(
                x0 + 0.5 * hx * (gl_x + 1.0), y0 + 0.5 * hy * (gl_x + 1.0), indexing="ij"
            )
            wf = (0.25 * hx * hy * np.outer(gl_w, gl_w)).ravel()
            vals, _, _ = _cell_basis_2d(space, cell, xg.ravel(), yg.ravel())
            out[cell] = (vals * (wf * _field_values(fld, xg.ravel(), yg.ravel()))) @ vals.T
    return out


def dense_source_vector(space, fld, quad_order=20):
    """Load vector of a source field integrated with a fine rule."""
    mesh = space.mesh
    nb = space.n_loc
    gl_x, gl_w = newton_legendre_nodes(quad_order)
    out = np.zeros(space.n_dof)
    for cell in range(mesh.n_cells):
        sl = slice(cell * nb, (cell + 1) * nb)
        if mesh.dimension == 1:
            lo, hi = mesh.cell_bounds(cell)
            h = hi - lo
            xq = lo + 0.5 * h * (gl_x + 1.0)
            vals, _ = _cell_basis_1d(space, cell, xq)
            out[sl] = vals @ (0.5 * h * gl_w * _field_values(fld, xq))
        else:
            x0, x1, y0, y1 = mesh.cell_bounds(cell)
            hx, hy = x1 - x0, y1 - y0
            xg, yg = np.meshgrid(
                x0 + 0.5 * hx * (gl_x + 1.0), y0 + 0.5 * hy * (gl_x + 1.0), indexing="ij"
            )
            wf = (0.25 * hx * hy * np.outer(gl_w, gl_w)).ravel()
            vals, _, _ = _cell_basis_2d(space, cell, xg.ravel(), yg.ravel())
            out[sl] = vals @ (wf * _field_values(fld, xg.ravel(), yg.ravel()))
    return out


# ---------------------------------------------------------------------------
# Dense density-space operators (built from the production dense system)
# ---------------------------------------------------------------------------


def dense_density_operators(problem):
    """Dense ``I - K Sigma_s``, ``K``, and the density right side.

    Uses per-direction dense inverses; independent of the sweep kernels.
    """
    from snrom.discretization import (
        BlockDiagonalOperator,
        assemble_direction_operator,
    )

    n = problem.n_dof
    weights = problem.quadrature.weights
    k_mat = np.zeros((n, n))
    b = np.zeros(n)
    for j in range(problem.n_dirs):
        d = assemble_direction_operator(problem, j).to_dense()
        inv = np.linalg.inv(d)
        k_mat += weights[j] * inv
        b += weights[j] * (inv @ problem.qtilde[j])
    sig_s = BlockDiagonalOperator(problem.sigma_s_blocks).to_dense()
    a_tilde = np.eye(n) - k_mat @ sig_s
    return a_tilde, k_mat, b, sig_s


def dense_ideal_correction(problem, increment):
    """Exact density correction: dense solve of the coupled correction system."""
    from snrom.discretization import assemble_dense_full_system

    a, _ = assemble_dense_full_system(problem)
    rhs = np.tile(problem.apply_sigma_s(increment), problem.n_dirs)
    delta_f = np.linalg.solve(a, rhs)
    return problem.quadrature.weights @ delta_f.reshape(problem.n_dirs, -1)


def reference_gmres_right(a, b, m_inv, x0, tol, max_iter):
    """Textbook right-preconditioned GMRES on dense matrices (test oracle)."""
    n = b.shape[0]
    x0 = np.zeros(n) if x0 is None else x0
    r0 = b - a @ x0
    beta = np.linalg.norm(r0)
    if beta < tol:
        return x0, [beta]
    qs = [r0 / beta]
    h = np.zeros((max_iter + 1, max_iter))
    residuals = []
    m = 0
    for l in range(1, max_iter + 1):
        i = l - 1
        w = a @ (m_inv @ qs[i])
        for k in range(l):
            h[k, i] = w @ qs[k]
            w -= h[k, i] * qs[k]
        h[l, i] = np.linalg.norm(w)
        e1 = np.zeros(l + 1)
        e1[0] = beta
        y, res, *_ = np.linalg.lstsq(h[: l + 1, :l], e1, rcond=None)
        r_norm = np.linalg.norm(e1 - h[: l + 1, :l] @ y)
        residuals.append(r_norm)
        m = l
        if r_norm < tol or h[l, i] < 1e-14:
            break
        qs.append(w / h[l, i])
    e1 = np.zeros(m + 1)
    e1[0] = beta
    y, *_ = np.linalg.lstsq(h[: m + 1, :m], e1, rcond=None)
    x = x0 + m_inv @ (np.column_stack(qs[:m]) @ y)
    return x, residuals
