"""Transport-sweep kernels: compiled extension with a pure-NumPy fallback.

The backend is chosen at import time.  Set ``SNROM_SWEEP_BACKEND=python``
to force the fallback; ``use_backend`` switches at runtime (used by the
tests and the backend benchmark).
"""

from __future__ import annotations

import os

from . import py_kernels

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and os.environ.get("SNROM_SWEEP_BACKEND", "").lower() not in (
    "python",
    "numpy",
):
    _impl = _compiled
    _backend = "compiled"
else:
    _impl = py_kernels
    _backend = "python"


def backend() -> str:
    """Name of the active kernel backend, ``compiled`` or ``python``."""
    return _backend


def have_compiled() -> bool:
    return _compiled is not None


def use_backend(name: str) -> str:
    """Switch the kernel backend; returns the previous backend name."""
    global _impl, _backend
    previous = _backend
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled sweep kernels are not available")
        _impl, _backend = _compiled, "compiled"
    elif name in ("python", "numpy"):
        _impl, _backend = py_kernels, "python"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def solve_lower_block(t_inv, coup_x, up_x, coup_y, up_y, order, rhs, out):
    return _impl.solve_lower_block(t_inv, coup_x, up_x, coup_y, up_y, order, rhs, out)
