"""Orthonormal Legendre basis on the reference interval [-1, 1]."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg


def _norms(k_max: int) -> np.ndarray:
    return np.sqrt((2.0 * np.arange(k_max + 1) + 1.0) / 2.0)


def eval_orthonormal(k_max: int, s) -> np.ndarray:
    """Values of the orthonormal Legendre polynomials, shape (k_max+1, npts)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    vander = npleg.legvander(s, k_max)  # (npts, k_max+1)
    return (vander * _norms(k_max)).T


def eval_orthonormal_deriv(k_max: int, s) -> np.ndarray:
    """First derivatives of the orthonormal Legendre polynomials."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros((k_max + 1, s.size))
    for k in range(1, k_max + 1):
        coeffs = np.zeros(k + 1)
        coeffs[k] = 1.0
        out[k] = npleg.legval(s, npleg.legder(coeffs))
    return out * _norms(k_max)[:, None]


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [-1, 1] (weights sum to 2)."""
    return npleg.leggauss(n)


def gradient_matrix(k_max: int) -> np.ndarray:
    """``G[m, n] = integral of P_m' P_n`` over [-1, 1], orthonormal basis."""
    pts, wts = gauss_rule(k_max + 2)
    dv = eval_orthonormal_deriv(k_max, pts)
    v = eval_orthonormal(k_max, pts)
    return (dv * wts) @ v.T


def stiffness_matrix(k_max: int) -> np.ndarray:
    """``S[m, n] = integral of P_m' P_n'`` over [-1, 1], orthonormal basis."""
    pts, wts = gauss_rule(k_max + 2)
    dv = eval_orthonormal_deriv(k_max, pts)
    return (dv * wts) @ dv.T


def edge_values(k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Basis traces at the endpoints, ``(values at -1, values at +1)``."""
    vals = eval_orthonormal(k_max, np.array([-1.0, 1.0]))
    return vals[:, 0].copy(), vals[:, 1].copy()


def edge_derivs(k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Basis derivative traces at the endpoints."""
    vals = eval_orthonormal_deriv(k_max, np.array([-1.0, 1.0]))
    return vals[:, 0].copy(), vals[:, 1].copy()
