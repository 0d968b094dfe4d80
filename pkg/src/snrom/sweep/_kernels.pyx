# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sweep kernels: block forward substitution over upwind-ordered cells."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF MAX_BLOCK = 16  # local DG block size, (K+1)^dim with K <= 2 in 2D


def solve_lower_block(double[:, :, :, ::1] t_inv,
                      double[:, :, :, ::1] coup_x,
                      cnp.int64_t[::1] up_x,
                      coup_y_obj,
                      up_y_obj,
                      cnp.int64_t[::1] order,
                      double[:, :, ::1] rhs,
                      double[:, :, ::1] out):
    """Batched (over directions) solve of the block lower-triangular system.

    Mirrors ``py_kernels.solve_lower_block``; ``coup_y_obj``/``up_y_obj``
    are None for 1D sweeps.
    """
    cdef double[:, :, :, ::1] coup_y
    cdef cnp.int64_t[::1] up_y
    cdef bint use_y = coup_y_obj is not None
    if use_y:
        coup_y = coup_y_obj
        up_y = up_y_obj

    cdef Py_ssize_t n_dir = rhs.shape[0]
    cdef Py_ssize_t n_cells = order.shape[0]
    cdef Py_ssize_t nb = rhs.shape[2]
    if nb > MAX_BLOCK:
        raise ValueError("block size too large for compiled kernel")

    cdef Py_ssize_t pos, d, m, n
    cdef cnp.int64_t c, ux, uy
    cdef double tmp[MAX_BLOCK]
    cdef double acc

    with nogil:
        for pos in range(n_cells):
            c = order[pos]
            ux = up_x[c]
            uy = up_y[c] if use_y else -1
            for d in range(n_dir):
                for m in range(nb):
                    tmp[m] = rhs[d, c, m]
                if ux >= 0:
                    for m in range(nb):
                        acc = 0.0
                        for n in range(nb):
                            acc += coup_x[d, c, m, n] * out[d, ux, n]
                        tmp[m] -= acc
                if uy >= 0:
                    for m in range(nb):
                        acc = 0.0
                        for n in range(nb):
                            acc += coup_y[d, c, m, n] * out[d, uy, n]
                        tmp[m] -= acc
                for m in range(nb):
                    acc = 0.0
                    for n in range(nb):
                        acc += t_inv[d, c, m, n] * tmp[n]
                    out[d, c, m] = acc
    return np.asarray(out)
