"""Tensor-product interval and rectangle meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpatialMesh:
    """Structured mesh of intervals (1D) or axis-aligned rectangles (2D).

    Cells are ordered lexicographically with the x index fastest:
    ``cell = iy * nx + ix``.  Edge coordinates may be nonuniform per axis.
    """

    dimension: int
    x_edges: np.ndarray
    y_edges: np.ndarray | None = None

    @property
    def nx(self) -> int:
        return self.x_edges.shape[0] - 1

    @property
    def ny(self) -> int:
        return 1 if self.y_edges is None else self.y_edges.shape[0] - 1

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> np.ndarray:
        return np.diff(self.x_edges)

    @property
    def hy(self) -> np.ndarray:
        if self.y_edges is None:
            raise ValueError("1D mesh has no y sizes")
        return np.diff(self.y_edges)

    def cell_index(self, ix: int, iy: int = 0) -> int:
        return iy * self.nx + ix

    def cell_coords(self, cell: int) -> tuple[int, int]:
        return cell % self.nx, cell // self.nx

    def cell_bounds(self, cell: int) -> tuple:
        ix, iy = self.cell_coords(cell)
        if self.dimension == 1:
            return (self.x_edges[ix], self.x_edges[ix + 1])
        return (
            self.x_edges[ix],
            self.x_edges[ix + 1],
            self.y_edges[iy],
            self.y_edges[iy + 1],
        )

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells, shape (n_cells, dimension)."""
        cx = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        if self.dimension == 1:
            return cx.reshape(-1, 1)
        cy = 0.5 * (self.y_edges[:-1] + self.y_edges[1:])
        gx, gy = np.meshgrid(cx, cy)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_sizes(self) -> np.ndarray:
        """Per-cell extents, shape (n_cells, dimension)."""
        if self.dimension == 1:
            return self.hx.reshape(-1, 1)
        gx, gy = np.meshgrid(self.hx, self.hy)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def interior_faces(self):
        """Yield (cell_minus, cell_plus, axis, area); normal points from minus to plus."""
        if self.dimension == 1:
            for ix in range(self.nx - 1):
                yield ix, ix + 1, 0, 1.0
            return
        hy = self.hy
        hx = self.hx
        for iy in range(self.ny):
            for ix in range(self.nx - 1):
                yield self.cell_index(ix, iy), self.cell_index(ix + 1, iy), 0, hy[iy]
        for iy in range(self.ny - 1):
            for ix in range(self.nx):
                yield self.cell_index(ix, iy), self.cell_index(ix, iy + 1), 1, hx[ix]

    def boundary_faces(self):
        """Yield (cell, axis, side, area); ``side`` is the outward normal sign."""
        if self.dimension == 1:
            yield 0, 0, -1, 1.0
            yield self.nx - 1, 0, +1, 1.0
            return
        hy = self.hy
        hx = self.hx
        for iy in range(self.ny):
            yield self.cell_index(0, iy), 0, -1, hy[iy]
            yield self.cell_index(self.nx - 1, iy), 0, +1, hy[iy]
        for ix in range(self.nx):
            yield self.cell_index(ix, 0), 1, -1, hx[ix]
            yield self.cell_index(ix, self.ny - 1), 1, +1, hx[ix]

    def interior_face_arrays(self, axis: int):
        """Vectorized interior faces: (minus_cells, plus_cells) along ``axis``."""
        if self.dimension == 1:
            if axis != 0:
                raise ValueError("1D mesh has only axis 0")
            minus = np.arange(self.nx - 1, dtype=np.int64)
            return minus, minus + 1
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        if axis == 0:
            gx, gy = np.meshgrid(ix[:-1], iy, indexing="ij")
            minus = gy.ravel() * self.nx + gx.ravel()
            return minus, minus + 1
        gx, gy = np.meshgrid(ix, iy[:-1], indexing="ij")
        minus = gy.ravel() * self.nx + gx.ravel()
        return minus, minus + self.nx

    def boundary_face_arrays(self, axis: int, side: int):
        """Vectorized boundary cells on the ``side`` face along ``axis``."""
        if self.dimension == 1:
            return np.array([0 if side < 0 else self.nx - 1], dtype=np.int64)
        if axis == 0:
            ixb = 0 if side < 0 else self.nx - 1
            return np.arange(self.ny, dtype=np.int64) * self.nx + ixb
        iyb = 0 if side < 0 else self.ny - 1
        return iyb * self.nx + np.arange(self.nx, dtype=np.int64)


def interval_mesh(breakpoints, dx) -> SpatialMesh:
    """1D mesh from ordered breakpoints with a target cell size per segment."""
    breakpoints = np.asarray(breakpoints, dtype=float)
    dx = np.asarray(dx, dtype=float)
    if breakpoints.ndim != 1 or breakpoints.size < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(breakpoints) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    if dx.shape != (breakpoints.size - 1,) or np.any(dx <= 0):
        raise ValueError("one positive cell size per segment required")
    edges = [np.array([breakpoints[0]])]
    for left, right, h in zip(breakpoints[:-1], breakpoints[1:], dx):
        n = (right - left) / h
        n_int = int(round(n))
        if n_int < 1 or abs(n - n_int) > 1e-9 * max(1.0, n):
            raise ValueError(f"segment [{left}, {right}] is not a multiple of dx={h}")
        edges.append(np.linspace(left, right, n_int + 1)[1:])
    return SpatialMesh(dimension=1, x_edges=np.concatenate(edges))


def rectangle_mesh(nx: int, ny: int, bounds) -> SpatialMesh:
    """Uniform 2D mesh of ``nx`` by ``ny`` cells on ``(x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = map(float, bounds)
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be positive")
    if x1 <= x0 or y1 <= y0:
        raise ValueError("degenerate bounds")
    return SpatialMesh(
        dimension=2,
        x_edges=np.linspace(x0, x1, nx + 1),
        y_edges=np.linspace(y0, y1, ny + 1),
    )


def build_mesh(desc: dict) -> SpatialMesh:
    """Build a mesh from a plain description.

    1D: ``{"breakpoints": [...], "dx": [...]}``.
    2D: ``{"nx": int, "ny": int, "bounds": (x0, x1, y0, y1)}``.
    """
    if "breakpoints" in desc:
        return interval_mesh(desc["breakpoints"], desc["dx"])
    if "nx" in desc:
        return rectangle_mesh(desc["nx"], desc["ny"], desc["bounds"])
    raise ValueError(f"unrecognized mesh description: {sorted(desc)}")
