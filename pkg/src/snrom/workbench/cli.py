"""Command-line workbench: offline builds, single solves, benchmark suites.

Subcommands:
  offline <config>              build and persist the offline artifacts
  solve <config> --mu a[,s]     run one solve at a parameter
  bench <config>                run the configured methods over the test set
  oracle <config>               dense-operator equivalence checks at toy size

Exit status is 0 only when every requested run converged.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..discretization import assemble_dense_full_system
from ..dsa import dsa_correction
from ..krylov import fgmres
from ..transport import apply_lhs_tilde, rhs_tilde, source_iteration
from .benchmarks import build_family, get_spec
from .config import load_config
from .runner import (
    KNOWN_METHODS,
    load_bundle,
    run_method,
    run_offline,
    run_suite,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snrom", description="parametric transport solver workbench"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    offline = sub.add_parser("offline", help="build and persist offline artifacts")
    offline.add_argument("config", type=Path)
    offline.add_argument("--out", type=Path, default=None, help="output directory")

    solve = sub.add_parser("solve", help="solve one parameter")
    solve.add_argument("config", type=Path)
    solve.add_argument("--mu", required=True, help="comma-separated parameter values")
    solve.add_argument("--method", default="si-dsa", choices=KNOWN_METHODS)
    solve.add_argument("--out", type=Path, default=None)

    bench = sub.add_parser("bench", help="run the benchmark suite")
    bench.add_argument("config", type=Path)
    bench.add_argument("--out", type=Path, default=None)

    oracle = sub.add_parser("oracle", help="dense-operator equivalence checks")
    oracle.add_argument("config", type=Path)

    return parser


def _resolve_out(cli_out, cfg_out) -> Path:
    return cli_out if cli_out is not None else (cfg_out or Path("out"))


def _cmd_offline(args) -> int:
    spec, cfg_out = load_config(args.config)
    out = _resolve_out(args.out, cfg_out)
    family = build_family(spec)
    bundle = run_offline(spec, family=family, out_dir=out)
    print(f"offline artifacts written to {out}")
    for key, seconds in sorted(bundle.timings.items()):
        print(f"  {key}: {seconds:.3f} s")
    if not bundle.all_training_converged:
        print("warning: some training solves hit the iteration cap", file=sys.stderr)
        return 1
    return 0


def _cmd_solve(args) -> int:
    spec, cfg_out = load_config(args.config)
    out = _resolve_out(args.out, cfg_out)
    mu = np.array([float(v) for v in args.mu.split(",")])
    family = build_family(spec)
    needs_artifacts = args.method in ("romsad", "tar", "tar-ig", "pgmres-ig", "fgmres-tar-ig")
    if needs_artifacts:
        bundle = load_bundle(spec.with_methods((args.method,)), family, out)
    else:
        bundle = run_offline(spec.with_methods(()), family=family)  # no artifacts needed
    record = run_method(args.method, spec, family, bundle, mu)
    status = "converged" if record.converged else "NOT converged"
    mu_text = ", ".join(f"{float(v):g}" for v in record.mu)
    print(
        f"{args.method} at mu=({mu_text}): {status} in {record.iterations} iterations,"
        f" {record.sweeps} sweeps, operator residual {record.r_inf:.3e}"
    )
    return 0 if record.converged else 1


def _cmd_bench(args) -> int:
    spec, cfg_out = load_config(args.config)
    out = _resolve_out(args.out, cfg_out)
    family = build_family(spec)
    try:
        bundle = load_bundle(spec, family, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run_suite(spec, bundle, family=family, out_dir=out)
    print(f"results written to {out}")
    print("method            n_sweep    n_iter     R_inf        converged")
    for method, agg in summary.aggregates.items():
        print(
            f"{method:<16} {agg['n_sweep']:>8.2f} {agg['n_iter']:>9.2f}"
            f" {agg['r_inf']:>12.3e}  {agg['n_converged']}/{agg['n_runs']}"
        )
    all_converged = all(
        agg["n_converged"] == agg["n_runs"] for agg in summary.aggregates.values()
    )
    return 0 if all_converged else 1


def _cmd_oracle(args) -> int:
    spec, _ = load_config(args.config)
    # shrink to a dense-verifiable instance of the same problem type
    if spec.problem == "two_material":
        small = get_spec(spec.problem, quad_n=4)
        small = replace(small, mesh={"breakpoints": [0.0, 1.0, 11.0], "dx": [0.25, 2.5]})
    else:
        small = get_spec(spec.problem, nx=4, ny=4, n_alpha=4, n_z=2)
    family = build_family(small)
    lows = np.asarray(small.parameter_space.lows)
    highs = np.asarray(small.parameter_space.highs)
    problem = family.problem(0.5 * (lows + highs))

    checks = []
    dense_a, dense_b = assemble_dense_full_system(problem)
    flux = np.linalg.solve(dense_a, dense_b)
    weights = problem.quadrature.weights
    rho_dense = weights @ flux.reshape(problem.n_dirs, -1)

    report = source_iteration(
        problem, correction=dsa_correction(problem), tol=1e-13, max_iter=400
    )
    checks.append(
        ("source iteration matches dense solve",
         np.linalg.norm(report.final_density - rho_dense, ord=np.inf) <= 1e-10)
    )

    b_tilde = rhs_tilde(problem)
    residual = apply_lhs_tilde(problem, rho_dense) - b_tilde
    checks.append(
        ("density operator consistent with dense solution",
         np.linalg.norm(residual, ord=np.inf) <= 1e-10)
    )

    krylov_report = fgmres(problem, tol=1e-13, max_iter=200)
    checks.append(
        ("flexible solver matches dense solve",
         np.linalg.norm(krylov_report.final_density - rho_dense, ord=np.inf) <= 1e-10)
    )

    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}: {name}")
        ok &= passed
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "offline": _cmd_offline,
        "solve": _cmd_solve,
        "bench": _cmd_bench,
        "oracle": _cmd_oracle,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
