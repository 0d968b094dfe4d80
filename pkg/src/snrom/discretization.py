"""DG spaces, transport operator assembly, and affine parametric problems.

Spatial discretization is an upwind discontinuous Galerkin method on
tensor-product Legendre bases that are orthonormal per cell, so weighted
mass matrices of cellwise-constant coefficients are scaled identities and
the streaming operator of each ordinate is block lower triangular in the
upwind cell ordering.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import basis, sweep
from .mesh import SpatialMesh
from .quadrature import AngularQuadrature

DENSE_SYSTEM_CAP = 20000


# ---------------------------------------------------------------------------
# DG space
# ---------------------------------------------------------------------------


class DGSpace:
    """Discontinuous tensor-product polynomial space of degree ``degree``.

    Local degrees of freedom are cell-major; within a cell the index is
    ``mx * (degree + 1) + my`` in 2D (x factor first, matching ``np.kron``).
    """

    def __init__(self, mesh: SpatialMesh, degree: int):
        if degree < 0 or degree > 2:
            raise ValueError("polynomial degree must be 0, 1, or 2")
        self.mesh = mesh
        self.degree = degree
        self.n_loc_1d = degree + 1
        self.n_loc = (degree + 1) ** mesh.dimension
        self.n_dof = mesh.n_cells * self.n_loc
        self.grad_ref = basis.gradient_matrix(degree)
        self.stiff_ref = basis.stiffness_matrix(degree)
        self.edge_minus, self.edge_plus = basis.edge_values(degree)
        self.edge_dminus, self.edge_dplus = basis.edge_derivs(degree)
        self._sizes = mesh.cell_sizes()
        self._centers = mesh.cell_centers()

    def cell_dofs(self, cell: int) -> slice:
        return slice(cell * self.n_loc, (cell + 1) * self.n_loc)

    def default_order(self) -> int:
        return self.degree + 2

    def _quad_1d(self, order):
        pts, wts = basis.gauss_rule(order)
        vals = basis.eval_orthonormal(self.degree, pts)
        return pts, wts, vals

    def cell_points(self, order: int | None = None):
        """Quadrature points per cell: (points, weights, ref_values).

        ``points`` is (n_cells, nq, dim); ``weights`` are reference weights
        (product rule) and ``ref_values`` the (n_loc, nq) basis values.
        """
        order = order or self.default_order()
        pts, wts, vals = self._quad_1d(order)
        centers, sizes = self._centers, self._sizes
        if self.mesh.dimension == 1:
            points = centers[:, :1] + 0.5 * sizes[:, :1] * pts[None, :]
            return points[:, :, None], wts, vals
        px, py = np.meshgrid(pts, pts, indexing="ij")
        sx, sy = px.ravel(), py.ravel()
        x = centers[:, 0:1] + 0.5 * sizes[:, 0:1] * sx[None, :]
        y = centers[:, 1:2] + 0.5 * sizes[:, 1:2] * sy[None, :]
        points = np.stack([x, y], axis=-1)
        wx, wy = np.meshgrid(wts, wts, indexing="ij")
        weights2 = (wx * wy).ravel()
        # local index m = mx*(K+1)+my and point q = qx*nq+qy, i.e. kron layout
        vals2 = np.kron(vals, vals)
        return points, weights2, vals2

    def _field_at(self, fld, points):
        if callable(fld):
            if self.mesh.dimension == 1:
                return np.asarray(fld(points[:, :, 0]), dtype=float)
            return np.asarray(fld(points[:, :, 0], points[:, :, 1]), dtype=float)
        values = np.asarray(fld, dtype=float)
        if values.ndim == 0:
            return np.full(points.shape[:2], float(values))
        return np.broadcast_to(values[:, None], points.shape[:2])

    def project(self, f, order: int | None = None) -> np.ndarray:
        """L2 projection coefficients of ``f`` (callable or per-cell values)."""
        points, wts, vals = self.cell_points(order)
        fvals = self._field_at(f, points)
        volumes = np.prod(self._sizes, axis=1)
        if self.mesh.dimension == 1:
            scale = np.sqrt(volumes / 2.0)
        else:
            scale = np.sqrt(volumes) / 2.0
        coeffs = np.einsum("cq,q,mq->cm", fvals, wts, vals)
        return (coeffs * scale[:, None]).ravel()

    def coefficient_blocks(self, fld, order: int | None = None) -> np.ndarray:
        """Per-cell weighted mass blocks ``B[c, m, n] = integral(fld phi_m phi_n)``."""
        if not callable(fld):
            values = np.asarray(fld, dtype=float)
            if values.ndim == 0:
                values = np.full(self.mesh.n_cells, float(values))
            eye = np.eye(self.n_loc)
            return values[:, None, None] * eye[None, :, :]
        points, wts, vals = self.cell_points(order)
        fvals = self._field_at(fld, points)
        return np.einsum("cq,q,mq,nq->cmn", fvals, wts, vals, vals)

    def evaluate(self, coeffs: np.ndarray, order: int | None = None):
        """Evaluate a DG function at the cell quadrature points (for diagnostics)."""
        points, _, vals = self.cell_points(order)
        volumes = np.prod(self._sizes, axis=1)
        scale = np.sqrt(2.0**self.mesh.dimension / volumes)
        local = coeffs.reshape(self.mesh.n_cells, self.n_loc)
        return points, scale[:, None] * (local @ vals)


# ---------------------------------------------------------------------------
# Sweep geometry (parameter independent)
# ---------------------------------------------------------------------------


@dataclass
class GeometryGroup:
    """Per-octant sweep structure shared by all directions in the group."""

    dir_ids: np.ndarray
    order: np.ndarray
    up_x: np.ndarray
    up_y: np.ndarray | None
    t0: np.ndarray  # advection diagonal blocks, (n_dir, n_cells, nb, nb)
    coup_x: np.ndarray
    coup_y: np.ndarray | None


def _outer(a, b):
    return np.outer(a, b)


def build_geometry(space: DGSpace, quadrature: AngularQuadrature) -> list[GeometryGroup]:
    """Group directions by sweep octant and assemble advection blocks."""
    mesh = space.mesh
    dim = mesh.dimension
    comps = quadrature.streaming(dim)
    nb1 = space.n_loc_1d
    eye1 = np.eye(nb1)
    groups: list[GeometryGroup] = []

    signs = comps >= 0.0  # zero components sweep as positive
    if dim == 1:
        keys = [(True,), (False,)]
    else:
        keys = [(sx, sy) for sx in (True, False) for sy in (True, False)]

    sizes = mesh.cell_sizes()
    n_cells = mesh.n_cells

    for key in keys:
        mask = np.all(signs == np.array(key), axis=1)
        dir_ids = np.nonzero(mask)[0]
        if dir_ids.size == 0:
            continue
        sx = key[0]
        ex_out = space.edge_plus if sx else space.edge_minus
        ex_in = space.edge_minus if sx else space.edge_plus

        # upwind neighbors and sweep order
        up_x = np.full(n_cells, -1, dtype=np.int64)
        up_y = np.full(n_cells, -1, dtype=np.int64) if dim == 2 else None
        nx, ny = mesh.nx, mesh.ny
        xr = range(nx) if sx else range(nx - 1, -1, -1)
        if dim == 1:
            order = np.fromiter(xr, dtype=np.int64)
            for ix in range(nx):
                ux = ix - 1 if sx else ix + 1
                up_x[ix] = ux if 0 <= ux < nx else -1
        else:
            sy = key[1]
            yr = range(ny) if sy else range(ny - 1, -1, -1)
            order = np.array(
                [iy * nx + ix for iy in yr for ix in xr], dtype=np.int64
            )
            for iy in range(ny):
                for ix in range(nx):
                    c = iy * nx + ix
                    ux = ix - 1 if sx else ix + 1
                    uy = iy - 1 if sy else iy + 1
                    up_x[c] = iy * nx + ux if 0 <= ux < nx else -1
                    up_y[c] = uy * nx + ix if 0 <= uy < ny else -1

        vx = comps[dir_ids, 0]
        hx = sizes[:, 0]
        if dim == 1:
            grad_c = -np.multiply.outer(vx, 2.0 / hx)  # (nd, nc)
            flux_c = np.multiply.outer(np.abs(vx), 2.0 / hx)
            t0 = (
                grad_c[:, :, None, None] * space.grad_ref
                + flux_c[:, :, None, None] * _outer(ex_out, ex_out)
            )
            hup = np.where(up_x >= 0, hx[np.clip(up_x, 0, None)], 1.0)
            coup_c = -np.multiply.outer(np.abs(vx), 2.0 / np.sqrt(hx * hup))
            coup_x = coup_c[:, :, None, None] * _outer(ex_in, ex_out)
            coup_y = None
        else:
            sy = key[1]
            ey_out = space.edge_plus if sy else space.edge_minus
            ey_in = space.edge_minus if sy else space.edge_plus
            vy = comps[dir_ids, 1]
            hy = sizes[:, 1]
            kg_x = np.kron(space.grad_ref, eye1)
            kg_y = np.kron(eye1, space.grad_ref)
            ke_x = np.kron(_outer(ex_out, ex_out), eye1)
            ke_y = np.kron(eye1, _outer(ey_out, ey_out))
            t0 = (
                -np.multiply.outer(vx, 2.0 / hx)[:, :, None, None] * kg_x
                + np.multiply.outer(np.abs(vx), 2.0 / hx)[:, :, None, None] * ke_x
                - np.multiply.outer(vy, 2.0 / hy)[:, :, None, None] * kg_y
                + np.multiply.outer(np.abs(vy), 2.0 / hy)[:, :, None, None] * ke_y
            )
            kc_x = np.kron(_outer(ex_in, ex_out), eye1)
            kc_y = np.kron(eye1, _outer(ey_in, ey_out))
            hx_up = np.where(up_x >= 0, hx[np.clip(up_x, 0, None)], 1.0)
            hy_up = np.where(up_y >= 0, hy[np.clip(up_y, 0, None)], 1.0)
            coup_x = (
                -np.multiply.outer(np.abs(vx), 2.0 / np.sqrt(hx * hx_up))[
                    :, :, None, None
                ]
                * kc_x
            )
            coup_y = (
                -np.multiply.outer(np.abs(vy), 2.0 / np.sqrt(hy * hy_up))[
                    :, :, None, None
                ]
                * kc_y
            )

        groups.append(
            GeometryGroup(
                dir_ids=dir_ids,
                order=order,
                up_x=up_x,
                up_y=up_y,
                t0=np.ascontiguousarray(t0),
                coup_x=np.ascontiguousarray(coup_x),
                coup_y=None if coup_y is None else np.ascontiguousarray(coup_y),
            )
        )
    return groups


def build_inflow_rhs(space: DGSpace, quadrature: AngularQuadrature, g) -> np.ndarray:
    """Boundary source vectors per direction, ``(g_j)_m = -int g phi_m (v.n)``.

    Only inflow faces (``v . n < 0``) contribute; ``g`` is a callable of the
    boundary point (or a constant).  Returns (n_dirs, n_dof).
    """
    mesh = space.mesh
    dim = mesh.dimension
    comps = quadrature.streaming(dim)
    out = np.zeros((quadrature.n_dirs, space.n_dof))
    if g is None:
        return out
    gfun = g if callable(g) else (lambda *args: np.full_like(args[0], float(g)))

    if dim == 1:
        x0, x1 = mesh.x_edges[0], mesh.x_edges[-1]
        h_first, h_last = mesh.hx[0], mesh.hx[-1]
        g0 = float(np.asarray(gfun(np.array([x0]))).ravel()[0])
        g1 = float(np.asarray(gfun(np.array([x1]))).ravel()[0])
        for j in range(quadrature.n_dirs):
            xi = comps[j, 0]
            if xi > 0.0:
                m = space.cell_dofs(0)
                out[j, m] = xi * g0 * np.sqrt(2.0 / h_first) * space.edge_minus
            elif xi < 0.0:
                m = space.cell_dofs(mesh.n_cells - 1)
                out[j, m] = -xi * g1 * np.sqrt(2.0 / h_last) * space.edge_plus
        return out

    pts, wts = basis.gauss_rule(space.default_order())
    vals = basis.eval_orthonormal(space.degree, pts)
    nb1 = space.n_loc_1d
    for cell, axis, side, area in mesh.boundary_faces():
        ix, iy = mesh.cell_coords(cell)
        hx, hy = mesh.hx[ix], mesh.hy[iy]
        if axis == 0:
            x = mesh.x_edges[ix + 1 if side > 0 else ix]
            yc = 0.5 * (mesh.y_edges[iy] + mesh.y_edges[iy + 1])
            y = yc + 0.5 * hy * pts
            gv = np.asarray(gfun(np.full_like(y, x), y), dtype=float)
            tang = np.sqrt(hy / 2.0) * (vals * wts) @ gv  # integral g phi_my dy
            perp = np.sqrt(2.0 / hx) * (space.edge_plus if side > 0 else space.edge_minus)
            local = np.kron(perp, tang)
        else:
            y = mesh.y_edges[iy + 1 if side > 0 else iy]
            xc = 0.5 * (mesh.x_edges[ix] + mesh.x_edges[ix + 1])
            x = xc + 0.5 * hx * pts
            gv = np.asarray(gfun(x, np.full_like(x, y)), dtype=float)
            tang = np.sqrt(hx / 2.0) * (vals * wts) @ gv
            perp = np.sqrt(2.0 / hy) * (space.edge_plus if side > 0 else space.edge_minus)
            local = np.kron(tang, perp)
        vdotn = comps[:, axis] * side
        inflow = vdotn < 0.0
        if not np.any(inflow):
            continue
        dofs = space.cell_dofs(cell)
        out[inflow, dofs] += -vdotn[inflow, None] * local[None, :]
    return out


# ---------------------------------------------------------------------------
# Parametric families and problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned box of admissible parameter vectors."""

    names: tuple[str, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.names)

    def contains(self, mu) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return (
            mu.shape == (self.dim,)
            and bool(np.all(mu >= np.asarray(self.lows) - 1e-12))
            and bool(np.all(mu <= np.asarray(self.highs) + 1e-12))
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lows = np.asarray(self.lows)
        highs = np.asarray(self.highs)
        return rng.uniform(lows, highs, size=(n, self.dim))


@dataclass
class MaterialTerm:
    """One affine material contribution: ``theta(mu)`` times fixed region blocks."""

    theta: Callable
    label: str
    absorption: np.ndarray | None = None  # (n_cells, nb, nb) or None
    scattering: np.ndarray | None = None


def constant_theta(_mu) -> float:
    return 1.0


@dataclass
class AffineTerm:
    theta: Callable
    label: str
    matvec: Callable  # flux (n_dirs, n_dof) -> (n_dirs, n_dof)


class AffineDecomposition:
    """Parameter-separable form of the full transport operator and right side."""

    def __init__(self, terms, rhs_terms, parameter_space=None):
        self.terms: list[AffineTerm] = list(terms)
        self.rhs_terms = list(rhs_terms)  # (theta, label, (n_dirs, n_dof) array)
        self.parameter_space = parameter_space

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def thetas(self, mu) -> np.ndarray:
        return np.array([t.theta(mu) for t in self.terms])

    def operator_apply(self, mu, flux: np.ndarray) -> np.ndarray:
        out = np.zeros_like(flux)
        for term in self.terms:
            out += term.theta(mu) * term.matvec(flux)
        return out

    def rhs(self, mu) -> np.ndarray:
        theta0, _, b0 = self.rhs_terms[0]
        out = theta0(mu) * b0
        for theta, _, b in self.rhs_terms[1:]:
            out = out + theta(mu) * b
        return out


class ProblemFamily:
    """A parametric transport problem sharing geometry across parameters."""

    def __init__(
        self,
        space: DGSpace,
        quadrature: AngularQuadrature,
        materials: Sequence[MaterialTerm],
        source=None,
        inflow=None,
        parameter_space: ParameterSpace | None = None,
        name: str = "",
        cache_size: int = 8,
    ):
        self.space = space
        self.quadrature = quadrature
        self.materials = list(materials)
        self.parameter_space = parameter_space
        self.name = name
        self.geometry = build_geometry(space, quadrature)
        q_vec = (
            space.project(source) if source is not None else np.zeros(space.n_dof)
        )
        self.source_vector = q_vec
        g_bc = build_inflow_rhs(space, quadrature, inflow)
        self._base_rhs = q_vec[None, :] + g_bc
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.affine = self._build_affine()

    # -- affine terms -------------------------------------------------
    def _build_affine(self) -> AffineDecomposition:
        terms = [AffineTerm(constant_theta, "advection", self.apply_advection)]
        weights = self.quadrature.weights
        for mat in self.materials:
            terms.append(
                AffineTerm(mat.theta, mat.label, _material_matvec(mat, weights))
            )
        rhs_terms = [(constant_theta, "source+inflow", self._base_rhs)]
        return AffineDecomposition(terms, rhs_terms, self.parameter_space)

    def apply_advection(self, flux: np.ndarray) -> np.ndarray:
        """Apply the per-direction streaming operators (no cross sections)."""
        out = np.zeros_like(flux)
        nb = self.space.n_loc
        n_cells = self.space.mesh.n_cells
        for grp in self.geometry:
            f = flux[grp.dir_ids].reshape(len(grp.dir_ids), n_cells, nb)
            o = np.einsum("dcmn,dcn->dcm", grp.t0, f)
            valid = grp.up_x >= 0
            o[:, valid] += np.einsum(
                "dcmn,dcn->dcm", grp.coup_x[:, valid], f[:, grp.up_x[valid]]
            )
            if grp.up_y is not None:
                valid = grp.up_y >= 0
                o[:, valid] += np.einsum(
                    "dcmn,dcn->dcm", grp.coup_y[:, valid], f[:, grp.up_y[valid]]
                )
            out[grp.dir_ids] = o.reshape(len(grp.dir_ids), -1)
        return out

    # -- problems -----------------------------------------------------
    def problem(self, mu) -> "DiscreteProblem":
        """Assembled problem at parameter ``mu`` (small LRU cache)."""
        mu = tuple(np.atleast_1d(np.asarray(mu, dtype=float)))
        if self.parameter_space is not None and not self.parameter_space.contains(mu):
            raise ValueError(f"parameter {mu} outside {self.parameter_space}")
        if mu in self._cache:
            self._cache.move_to_end(mu)
            return self._cache[mu]
        prob = self._assemble(mu)
        self._cache[mu] = prob
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return prob

    def _assemble(self, mu) -> "DiscreteProblem":
        nb = self.space.n_loc
        n_cells = self.space.mesh.n_cells
        sigma_t = np.zeros((n_cells, nb, nb))
        sigma_s = np.zeros((n_cells, nb, nb))
        for mat in self.materials:
            coeff = mat.theta(mu)
            if mat.absorption is not None:
                sigma_t += coeff * mat.absorption
            if mat.scattering is not None:
                sigma_t += coeff * mat.scattering
                sigma_s += coeff * mat.scattering
        qtilde = self.affine.rhs(mu)
        t_inv_groups = []
        for grp in self.geometry:
            t_full = grp.t0 + sigma_t[None, :, :, :]
            t_inv_groups.append(np.ascontiguousarray(np.linalg.inv(t_full)))
        return DiscreteProblem(
            family=self,
            mu=mu,
            sigma_t_blocks=sigma_t,
            sigma_s_blocks=sigma_s,
            qtilde=np.ascontiguousarray(qtilde),
            t_inv_groups=t_inv_groups,
        )


def _material_matvec(mat: MaterialTerm, weights: np.ndarray):
    def matvec(flux: np.ndarray) -> np.ndarray:
        n_dirs = flux.shape[0]
        out = np.zeros_like(flux)
        if mat.absorption is not None:
            f = flux.reshape(n_dirs, -1, mat.absorption.shape[1])
            out += np.einsum("cmn,dcn->dcm", mat.absorption, f).reshape(n_dirs, -1)
        if mat.scattering is not None:
            nb = mat.scattering.shape[1]
            f = flux.reshape(n_dirs, -1, nb)
            rho = np.einsum("d,dcn->cn", weights, f)
            scat = np.einsum("cmn,dcn->dcm", mat.scattering, f)
            scat -= np.einsum("cmn,cn->cm", mat.scattering, rho)[None, :, :]
            out += scat.reshape(n_dirs, -1)
        return out

    return matvec


@dataclass
class DiscreteProblem:
    """One fully discrete transport problem at a fixed parameter."""

    family: ProblemFamily
    mu: tuple
    sigma_t_blocks: np.ndarray
    sigma_s_blocks: np.ndarray
    qtilde: np.ndarray  # (n_dirs, n_dof)
    t_inv_groups: list

    def __post_init__(self):
        self.sigma_t_cell = self.sigma_t_blocks[:, 0, 0].copy()
        self.sigma_s_cell = self.sigma_s_blocks[:, 0, 0].copy()
        self.sigma_a_cell = self.sigma_t_cell - self.sigma_s_cell

    @property
    def space(self) -> DGSpace:
        return self.family.space

    @property
    def quadrature(self) -> AngularQuadrature:
        return self.family.quadrature

    @property
    def geometry(self) -> list[GeometryGroup]:
        return self.family.geometry

    @property
    def n_dof(self) -> int:
        return self.space.n_dof

    @property
    def n_dirs(self) -> int:
        return self.quadrature.n_dirs

    @property
    def affine(self) -> AffineDecomposition:
        return self.family.affine

    def apply_sigma_s(self, v: np.ndarray) -> np.ndarray:
        nb = self.space.n_loc
        return np.einsum(
            "cmn,cn->cm", self.sigma_s_blocks, v.reshape(-1, nb)
        ).ravel()

    def apply_sigma_t(self, v: np.ndarray) -> np.ndarray:
        nb = self.space.n_loc
        return np.einsum(
            "cmn,cn->cm", self.sigma_t_blocks, v.reshape(-1, nb)
        ).ravel()


def simple_family(
    space: DGSpace,
    quadrature: AngularQuadrature,
    sigma_a=0.0,
    sigma_s=0.0,
    source=None,
    inflow=None,
    name: str = "fixed",
) -> ProblemFamily:
    """Single-parameter-free family for plain (non-parametric) problems."""
    materials = [
        MaterialTerm(
            constant_theta,
            "material",
            absorption=space.coefficient_blocks(sigma_a),
            scattering=space.coefficient_blocks(sigma_s),
        )
    ]
    return ProblemFamily(
        space, quadrature, materials, source=source, inflow=inflow, name=name
    )


def simple_problem(space, quadrature, sigma_a=0.0, sigma_s=0.0, source=None, inflow=None):
    """Assembled problem for fixed coefficient fields."""
    return simple_family(
        space, quadrature, sigma_a=sigma_a, sigma_s=sigma_s, source=source, inflow=inflow
    ).problem(())


# ---------------------------------------------------------------------------
# Per-direction operators and dense assembly
# ---------------------------------------------------------------------------


@dataclass
class SweepOperator:
    """Streaming-plus-total operator of a single ordinate.

    Exposes the upwind cell ordering under which the blocked matrix is
    lower triangular, the per-cell diagonal blocks (factorized as explicit
    inverses), and the off-diagonal upwind coupling blocks.
    """

    order: np.ndarray
    up_x: np.ndarray
    up_y: np.ndarray | None
    diag: np.ndarray  # (n_cells, nb, nb)
    diag_inv: np.ndarray
    coup_x: np.ndarray
    coup_y: np.ndarray | None
    n_loc: int

    @property
    def n_cells(self) -> int:
        return self.order.shape[0]

    @property
    def n_dof(self) -> int:
        return self.n_cells * self.n_loc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(D_j + Sigma_t) x = rhs`` by block forward substitution."""
        out = np.empty((1, self.n_cells, self.n_loc))
        sweep.solve_lower_block(
            self.diag_inv[None, :, :, :],
            self.coup_x[None, :, :, :],
            self.up_x,
            None if self.coup_y is None else self.coup_y[None, :, :, :],
            self.up_y,
            self.order,
            np.ascontiguousarray(rhs.reshape(1, self.n_cells, self.n_loc)),
            out,
        )
        return out.ravel()

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply ``D_j + Sigma_t`` to a coefficient vector."""
        xb = x.reshape(self.n_cells, self.n_loc)
        out = np.einsum("cmn,cn->cm", self.diag, xb)
        valid = self.up_x >= 0
        out[valid] += np.einsum(
            "cmn,cn->cm", self.coup_x[valid], xb[self.up_x[valid]]
        )
        if self.up_y is not None:
            valid = self.up_y >= 0
            out[valid] += np.einsum(
                "cmn,cn->cm", self.coup_y[valid], xb[self.up_y[valid]]
            )
        return out.ravel()

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n_dof, self.n_dof))
        nb = self.n_loc
        for c in range(self.n_cells):
            rows = slice(c * nb, (c + 1) * nb)
            a[rows, rows] = self.diag[c]
            if self.up_x[c] >= 0:
                u = self.up_x[c]
                a[rows, u * nb : (u + 1) * nb] = self.coup_x[c]
            if self.up_y is not None and self.up_y[c] >= 0:
                u = self.up_y[c]
                a[rows, u * nb : (u + 1) * nb] += self.coup_y[c]
        return a


def assemble_direction_operator(problem: DiscreteProblem, j: int) -> SweepOperator:
    """Sweep operator for ordinate ``j`` of the assembled problem."""
    if not 0 <= j < problem.n_dirs:
        raise IndexError(f"direction index {j} out of range")
    for grp, t_inv in zip(problem.geometry, problem.t_inv_groups):
        pos = np.nonzero(grp.dir_ids == j)[0]
        if pos.size:
            d = int(pos[0])
            diag = grp.t0[d] + problem.sigma_t_blocks
            return SweepOperator(
                order=grp.order,
                up_x=grp.up_x,
                up_y=grp.up_y,
                diag=diag,
                diag_inv=t_inv[d],
                coup_x=grp.coup_x[d],
                coup_y=None if grp.coup_y is None else grp.coup_y[d],
                n_loc=problem.space.n_loc,
            )
    raise IndexError(f"direction index {j} not found in sweep groups")


@dataclass
class BlockDiagonalOperator:
    """Block-diagonal weighted mass operator on the density space."""

    blocks: np.ndarray  # (n_cells, nb, nb)

    def apply(self, v: np.ndarray) -> np.ndarray:
        nb = self.blocks.shape[1]
        return np.einsum("cmn,cn->cm", self.blocks, v.reshape(-1, nb)).ravel()

    def to_dense(self) -> np.ndarray:
        n_cells, nb, _ = self.blocks.shape
        a = np.zeros((n_cells * nb, n_cells * nb))
        for c in range(n_cells):
            a[c * nb : (c + 1) * nb, c * nb : (c + 1) * nb] = self.blocks[c]
        return a


def assemble_coefficient_mass(
    problem: DiscreteProblem, fld, order: int | None = None
) -> BlockDiagonalOperator:
    """Weighted mass operator of a coefficient field on the problem's space."""
    return BlockDiagonalOperator(problem.space.coefficient_blocks(fld, order))


def assemble_rhs(problem: DiscreteProblem, j: int) -> np.ndarray:
    """Per-direction right-hand side (source plus inflow boundary term)."""
    if not 0 <= j < problem.n_dirs:
        raise IndexError(f"direction index {j} out of range")
    return problem.qtilde[j].copy()


def apply_full_operator(problem: DiscreteProblem, flux: np.ndarray) -> np.ndarray:
    """Apply the coupled transport operator to a stacked angular flux."""
    weights = problem.quadrature.weights
    nb = problem.space.n_loc
    f = flux.reshape(problem.n_dirs, -1)
    out = problem.family.apply_advection(f)
    fb = f.reshape(problem.n_dirs, -1, nb)
    out += np.einsum("cmn,dcn->dcm", problem.sigma_t_blocks, fb).reshape(
        problem.n_dirs, -1
    )
    rho = np.einsum("d,dcn->cn", weights, fb)
    out -= np.einsum("cmn,cn->cm", problem.sigma_s_blocks, rho).reshape(1, -1)
    return out.reshape(flux.shape)


def assemble_dense_full_system(problem: DiscreteProblem):
    """Dense coupled system ``A f = b`` over all ordinates (test oracle).

    Refuses systems larger than ``DENSE_SYSTEM_CAP`` unknowns.
    """
    n_h = problem.n_dirs * problem.n_dof
    if n_h > DENSE_SYSTEM_CAP:
        raise ValueError(f"dense system size {n_h} exceeds cap {DENSE_SYSTEM_CAP}")
    n = problem.n_dof
    weights = problem.quadrature.weights
    sig_s = BlockDiagonalOperator(problem.sigma_s_blocks).to_dense()
    a = np.zeros((n_h, n_h))
    for j in range(problem.n_dirs):
        rows = slice(j * n, (j + 1) * n)
        a[rows, rows] = assemble_direction_operator(problem, j).to_dense()
        for k in range(problem.n_dirs):
            cols = slice(k * n, (k + 1) * n)
            a[rows, cols] -= weights[k] * sig_s
    return a, problem.qtilde.ravel().copy()
