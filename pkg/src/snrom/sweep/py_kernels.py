"""Pure-NumPy sweep kernels (fallback for the compiled extension)."""

from __future__ import annotations

import numpy as np


def solve_lower_block(t_inv, coup_x, up_x, coup_y, up_y, order, rhs, out):
    """Block forward substitution along the upwind cell ordering.

    All block arrays are batched over a leading direction axis:
    ``t_inv``/``coup_*`` have shape (n_dir, n_cells, nb, nb), ``rhs`` and
    ``out`` (n_dir, n_cells, nb).  ``up_x[c]``/``up_y[c]`` give the upwind
    neighbor of cell ``c`` (or -1), ``order`` lists cells upwind-first.
    """
    use_y = up_y is not None
    for c in order:
        t = rhs[:, c, :].copy()
        u = up_x[c]
        if u >= 0:
            t -= np.einsum("dmn,dn->dm", coup_x[:, c], out[:, u])
        if use_y:
            v = up_y[c]
            if v >= 0:
                t -= np.einsum("dmn,dn->dm", coup_y[:, c], out[:, v])
        out[:, c, :] = np.einsum("dmn,dn->dm", t_inv[:, c], t)
    return out
