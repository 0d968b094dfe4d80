"""Diffusion-limit density correction operators.

Two flavors of the low-order correction solve are provided:

``consistent`` (default): a mixed density/current system whose volume and
face terms are discrete angular moments of the upwind numerical flux under
a linear-in-angle closure.  Because its dissipation matches the transport
discretization, it stays effective for optically thick cells.

``sip``: a symmetric interior-penalty discretization of the scalar
diffusion-reaction equation with penalty ``4 (K+1)^2 kappa / h`` and
penalty-enforced homogeneous Dirichlet boundary values.

Both use ``sigma_d = max(sigma_t, SIGMA_FLOOR)`` in the diffusion
coefficient so pure absorbers (``sigma_s = 0``) keep a bounded
coefficient, and both expose the same interface: a cached direct sparse
factorization mapping a density-space right side to a density correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DiscreteProblem

SIGMA_FLOOR = 1e-8
PENALTY_SCALE = 4.0


@dataclass
class DiffusionOperator:
    """Assembled correction operator with a cached sparse factorization."""

    matrix: sp.csc_matrix
    eddington: np.ndarray
    kind: str
    n_density: int  # density unknowns; the mixed flavor carries extra current dofs

    def __post_init__(self):
        try:
            self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # singular factorization
            raise RuntimeError(f"diffusion factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Density correction for a density-space right side."""
        if self.matrix.shape[0] == self.n_density:
            return self._lu.solve(rhs)
        full = np.zeros(self.matrix.shape[0])
        full[: self.n_density] = rhs
        return self._lu.solve(full)[: self.n_density]


class _BlockCollector:
    def __init__(self, n_loc: int):
        self.n_loc = n_loc
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, row_start: int, col_start: int, block) -> None:
        nb_r, nb_c = block.shape
        r = np.arange(row_start, row_start + nb_r)
        c = np.arange(col_start, col_start + nb_c)
        rr, cc = np.meshgrid(r, c, indexing="ij")
        self.rows.append(rr.ravel())
        self.cols.append(cc.ravel())
        self.vals.append(np.asarray(block, dtype=float).ravel())

    def add_batch(self, row_starts, col_starts, blocks) -> None:
        """Add one ``nb x nb`` block per entry of the offset arrays.

        ``blocks`` is (n, nb, nb) or a single (nb, nb) matrix shared by all.
        """
        row_starts = np.asarray(row_starts, dtype=np.int64)
        col_starts = np.asarray(col_starts, dtype=np.int64)
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim == 2:
            blocks = np.broadcast_to(blocks, (row_starts.size, *blocks.shape))
        nb_r, nb_c = blocks.shape[1:]
        local_r = np.arange(nb_r)[None, :, None]
        local_c = np.arange(nb_c)[None, None, :]
        self.rows.append((row_starts[:, None, None] + local_r + 0 * local_c).ravel())
        self.cols.append((col_starts[:, None, None] + local_c + 0 * local_r).ravel())
        self.vals.append(np.ascontiguousarray(blocks).ravel())

    def matrix(self, n: int) -> sp.csc_matrix:
        return sp.csc_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n, n),
        )


def _face_lift(space, block_perp: np.ndarray, axis: int) -> np.ndarray:
    """Lift a perpendicular-axis face block by the tangential identity."""
    if space.mesh.dimension == 1:
        return block_perp
    eye1 = np.eye(space.n_loc_1d)
    if axis == 0:
        return np.kron(block_perp, eye1)
    return np.kron(eye1, block_perp)


def _trace(space, cell_size: float, at_plus: bool) -> np.ndarray:
    return np.sqrt(2.0 / cell_size) * (space.edge_plus if at_plus else space.edge_minus)


def _grad_layout(space, axis: int) -> np.ndarray:
    """Reference matrix of ``integral(d_axis phi_m phi_n)`` modulo the 2/h scale."""
    if space.mesh.dimension == 1:
        return space.grad_ref
    eye1 = np.eye(space.n_loc_1d)
    if axis == 0:
        return np.kron(space.grad_ref, eye1)
    return np.kron(eye1, space.grad_ref)


def assemble_dsa(
    problem: DiscreteProblem,
    flavor: str = "consistent",
    penalty_scale: float = PENALTY_SCALE,
) -> DiffusionOperator:
    """Assemble the diffusion-limit correction operator for one problem."""
    if flavor == "consistent":
        return _assemble_consistent(problem)
    if flavor == "sip":
        return _assemble_sip(problem, penalty_scale)
    raise ValueError(f"unknown flavor {flavor!r}")


# ---------------------------------------------------------------------------
# Consistent mixed density/current flavor
# ---------------------------------------------------------------------------


def _half_moments(quadrature, dim: int, axis: int, positive: bool):
    """Angular moments of ``w * v_axis`` over one half space of ordinates.

    Returns (scalar, vector over spatial axes, matrix over spatial axes)
    weighting the closure values (density, 3x current).
    """
    comps = quadrature.streaming(dim)  # (n, dim)
    v_axis = comps[:, axis]
    mask = v_axis > 0.0 if positive else v_axis < 0.0
    w = quadrature.weights[mask]
    va = v_axis[mask]
    vs = comps[mask]
    q0 = float(np.sum(w * va))
    q1 = np.einsum("j,ja->a", w * va, vs)
    q2 = np.einsum("j,ja,jc->ac", w * va, vs, vs)
    return q0, q1, q2


def _coupling(q0, q1, q2) -> np.ndarray:
    """Face coupling across (density, current) components for one side."""
    dim = q1.shape[0]
    n = np.empty((dim + 1, dim + 1))
    n[0, 0] = q0
    n[0, 1:] = 3.0 * q1
    n[1:, 0] = 3.0 * q1
    n[1:, 1:] = 9.0 * q2
    return n


def _assemble_consistent(problem: DiscreteProblem) -> DiffusionOperator:
    space = problem.space
    mesh = space.mesh
    dim = mesh.dimension
    nb = space.n_loc
    n_dof = space.n_dof
    quadrature = problem.quadrature

    comps = quadrature.streaming(dim)
    second = np.einsum("j,ja,jc->ac", quadrature.weights, comps, comps)  # (dim, dim)
    sizes = mesh.cell_sizes()
    sigma_a_blocks = problem.sigma_t_blocks - problem.sigma_s_blocks
    sigma_t_blocks = np.maximum(problem.sigma_t_blocks, 0.0)
    # keep the current equation invertible in voids
    floor_eye = SIGMA_FLOOR * np.eye(nb)

    n_comp = dim + 1
    n_total = n_comp * n_dof
    coll = _BlockCollector(nb)

    def comp_offsets(component: int, cells) -> np.ndarray:
        return component * n_dof + np.asarray(cells, dtype=np.int64) * nb

    grads = [_grad_layout(space, axis) for axis in range(dim)]
    all_cells = np.arange(mesh.n_cells, dtype=np.int64)
    scale = 2.0 / sizes  # (n_cells, dim)

    # density row: reaction + current divergence
    coll.add_batch(comp_offsets(0, all_cells), comp_offsets(0, all_cells), sigma_a_blocks)
    for c_axis in range(dim):
        blk = sum(
            -3.0 * second[b, c_axis] * scale[:, b, None, None] * grads[b][None]
            for b in range(dim)
        )
        coll.add_batch(comp_offsets(0, all_cells), comp_offsets(1 + c_axis, all_cells), blk)
    # current rows: density gradient + removal
    for a_axis in range(dim):
        blk = sum(
            -3.0 * second[a_axis, b] * scale[:, b, None, None] * grads[b][None]
            for b in range(dim)
        )
        coll.add_batch(comp_offsets(1 + a_axis, all_cells), comp_offsets(0, all_cells), blk)
        for c_axis in range(dim):
            mass = 9.0 * second[a_axis, c_axis] * (sigma_t_blocks + floor_eye[None])
            coll.add_batch(
                comp_offsets(1 + a_axis, all_cells), comp_offsets(1 + c_axis, all_cells), mass
            )

    pos_moments = [_coupling(*_half_moments(quadrature, dim, d, True)) for d in range(dim)]
    neg_moments = [_coupling(*_half_moments(quadrature, dim, d, False)) for d in range(dim)]
    edge_p, edge_m = space.edge_plus, space.edge_minus

    def add_face_batch(test_cells, test_plus, sign, src_cells, src_plus, n_matrix, axis):
        """Batched face coupling; traces carry per-cell 2/sqrt(h h') scaling."""
        e_test = edge_p if test_plus else edge_m
        e_src = edge_p if src_plus else edge_m
        base = _face_lift(space, np.outer(e_test, e_src), axis)
        scal = sign * 2.0 / np.sqrt(sizes[test_cells, axis] * sizes[src_cells, axis])
        for i in range(n_comp):
            for j in range(n_comp):
                coeff = n_matrix[i, j]
                if coeff == 0.0:
                    continue
                coll.add_batch(
                    comp_offsets(i, test_cells),
                    comp_offsets(j, src_cells),
                    (coeff * scal)[:, None, None] * base[None],
                )

    for axis in range(dim):
        minus, plus = mesh.interior_face_arrays(axis)
        n_pos, n_neg = pos_moments[axis], neg_moments[axis]
        # flux as seen from the minus element (outward +axis); reversed for plus
        add_face_batch(minus, True, +1.0, minus, True, n_pos, axis)
        add_face_batch(minus, True, +1.0, plus, False, n_neg, axis)
        add_face_batch(plus, False, -1.0, minus, True, n_pos, axis)
        add_face_batch(plus, False, -1.0, plus, False, n_neg, axis)
        for side in (-1, +1):
            cells = mesh.boundary_face_arrays(axis, side)
            # zero inflow: only outgoing ordinates contribute, v.n = side * v_axis
            if side > 0:
                n_bc = pos_moments[axis]
            else:
                n_bc = -neg_moments[axis]
            add_face_batch(cells, side > 0, +1.0, cells, side > 0, n_bc, axis)

    matrix = coll.matrix(n_total)
    return DiffusionOperator(
        matrix=matrix,
        eddington=quadrature.second_moments(),
        kind="consistent",
        n_density=n_dof,
    )


# ---------------------------------------------------------------------------
# Symmetric interior-penalty flavor
# ---------------------------------------------------------------------------


def _assemble_sip(problem: DiscreteProblem, penalty_scale: float) -> DiffusionOperator:
    space = problem.space
    mesh = space.mesh
    dim = mesh.dimension
    nb = space.n_loc
    eye1 = np.eye(space.n_loc_1d)

    eddington = problem.quadrature.second_moments()
    sigma_d = np.maximum(problem.sigma_t_cell, SIGMA_FLOOR)
    kappa = eddington[None, :dim] / sigma_d[:, None]  # (n_cells, dim)

    sizes = mesh.cell_sizes()
    sigma_a_blocks = problem.sigma_t_blocks - problem.sigma_s_blocks
    coll = _BlockCollector(nb)

    s_ref = space.stiff_ref
    for c in range(mesh.n_cells):
        if dim == 1:
            block = kappa[c, 0] * (2.0 / sizes[c, 0]) ** 2 * s_ref
        else:
            block = kappa[c, 0] * (2.0 / sizes[c, 0]) ** 2 * np.kron(s_ref, eye1)
            block = block + kappa[c, 1] * (2.0 / sizes[c, 1]) ** 2 * np.kron(eye1, s_ref)
        coll.add(c * nb, c * nb, block + sigma_a_blocks[c])

    def face_vectors(cell, axis, at_plus):
        h = sizes[cell, axis]
        val = _trace(space, h, at_plus)
        der = (
            np.sqrt(2.0 / h)
            * (2.0 / h)
            * (space.edge_dplus if at_plus else space.edge_dminus)
        )
        return val, der

    penalty_base = penalty_scale * (space.degree + 1) ** 2

    for c_minus, c_plus, axis, _area in mesh.interior_faces():
        val_m, der_m = face_vectors(c_minus, axis, at_plus=True)
        val_p, der_p = face_vectors(c_plus, axis, at_plus=False)
        k_m, k_p = kappa[c_minus, axis], kappa[c_plus, axis]
        h_face = 0.5 * (sizes[c_minus, axis] + sizes[c_plus, axis])
        eta = penalty_base * 0.5 * (k_m + k_p) / h_face
        sides = [(c_minus, val_m, k_m * der_m, +1.0), (c_plus, val_p, k_p * der_p, -1.0)]
        for ci, vi, kdi, si in sides:
            for cj, vj, kdj, sj in sides:
                block = eta * si * sj * _face_lift(space, np.outer(vi, vj), axis)
                block -= 0.5 * si * _face_lift(space, np.outer(vi, kdj), axis)
                block -= 0.5 * sj * _face_lift(space, np.outer(kdi, vj), axis)
                coll.add(ci * nb, cj * nb, block)

    for cell, axis, side, _area in mesh.boundary_faces():
        val, der = face_vectors(cell, axis, at_plus=side > 0)
        normal_der = side * der
        k = kappa[cell, axis]
        eta = penalty_base * k / sizes[cell, axis]
        block = eta * _face_lift(space, np.outer(val, val), axis)
        block -= k * _face_lift(space, np.outer(val, normal_der), axis)
        block -= k * _face_lift(space, np.outer(normal_der, val), axis)
        coll.add(cell * nb, cell * nb, block)

    matrix = coll.matrix(space.n_dof)
    return DiffusionOperator(
        matrix=matrix, eddington=eddington, kind="sip", n_density=space.n_dof
    )


# ---------------------------------------------------------------------------
# Correction interfaces
# ---------------------------------------------------------------------------


def dsa_correct(
    dsa: DiffusionOperator, residual: np.ndarray, problem: DiscreteProblem
) -> np.ndarray:
    """Density correction for a given increment ``rho_star - rho_prev``."""
    return dsa.solve(problem.apply_sigma_s(residual))


def dsa_correction(problem: DiscreteProblem, dsa: DiffusionOperator | None = None):
    """Correction strategy for ``source_iteration`` backed by the diffusion solve."""
    op = dsa if dsa is not None else assemble_dsa(problem)

    def correction(increment: np.ndarray, _iteration: int) -> np.ndarray:
        return dsa_correct(op, increment, problem)

    return correction


class DsaPreconditioner:
    """Constant right preconditioner ``q -> q + C^-1 Sigma_s q`` for Krylov solves."""

    def __init__(self, problem: DiscreteProblem, dsa: DiffusionOperator | None = None):
        self.problem = problem
        self._dsa = dsa

    def _op(self) -> DiffusionOperator:
        if self._dsa is None:
            self._dsa = assemble_dsa(self.problem)
        return self._dsa

    def __call__(self, _iteration: int, q: np.ndarray) -> np.ndarray:
        return q + dsa_correct(self._op(), q, self.problem)
