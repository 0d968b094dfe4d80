import numpy as np
import pytest

from snrom import sweep, sweep_all, transport_sweep


@pytest.fixture
def forced_python_backend():
    previous = sweep.backend()
    sweep.use_backend("python")
    yield
    sweep.use_backend(previous)


def test_backend_reports_name():
    assert sweep.backend() in ("compiled", "python")


def test_use_backend_roundtrip():
    previous = sweep.use_backend("python")
    assert sweep.backend() == "python"
    sweep.use_backend(previous)
    assert sweep.backend() == previous
    with pytest.raises(ValueError):
        sweep.use_backend("fortran")


def test_python_backend_solves(forced_python_backend, slab_small):
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal(slab_small.n_dof)
    from snrom import assemble_direction_operator

    x = transport_sweep(slab_small, 0, rhs)
    dense = assemble_direction_operator(slab_small, 0).to_dense()
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), atol=1e-12)


@pytest.mark.skipif(not sweep.have_compiled(), reason="compiled kernels unavailable")
def test_backends_agree_1d(slab_small):
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal((slab_small.n_dirs, slab_small.n_dof))
    sweep.use_backend("compiled")
    compiled = sweep_all(slab_small, rhs)
    sweep.use_backend("python")
    try:
        fallback = sweep_all(slab_small, rhs)
    finally:
        sweep.use_backend("compiled")
    np.testing.assert_allclose(compiled, fallback, rtol=1e-13, atol=1e-13)


@pytest.mark.skipif(not sweep.have_compiled(), reason="compiled kernels unavailable")
def test_backends_agree_2d(grid2d_small):
    rng = np.random.default_rng(2)
    rhs = rng.standard_normal((grid2d_small.n_dirs, grid2d_small.n_dof))
    sweep.use_backend("compiled")
    compiled = sweep_all(grid2d_small, rhs)
    sweep.use_backend("python")
    try:
        fallback = sweep_all(grid2d_small, rhs)
    finally:
        sweep.use_backend("compiled")
    # reduction order differs between the kernels, so equality is to rounding
    np.testing.assert_allclose(compiled, fallback, rtol=1e-13, atol=1e-13)


@pytest.mark.skipif(not sweep.have_compiled(), reason="compiled kernels unavailable")
def test_benchmark_script_runs():
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_sweep.py"
    result = subprocess.run(
        [sys.executable, str(script), "--nx", "8", "--repeats", "1"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0, result.stderr
    assert "compiled" in result.stdout and "python" in result.stdout
