"""Offline construction, test-suite execution, metrics, and CSV emission."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..discretization import ProblemFamily
from ..dsa import DsaPreconditioner, assemble_dsa, dsa_correction
from ..krylov import fgmres
from ..rom import ReducedBasis, pod, project_operators, rom_initial_guess
from ..tar import (
    RomsadConfig,
    TarArtifact,
    build_preconditioner_schedule,
    romsad_offline,
    romsad_schedule,
    tar_offline_fgmres,
    tar_offline_si,
    tar_online_si,
    training_solutions,
)
from ..transport import apply_lhs_tilde, rhs_tilde, source_iteration
from .artifact import load_artifact, save_artifact
from .benchmarks import BenchmarkSpec, build_family

KNOWN_METHODS = (
    "si",
    "si-dsa",
    "romsad",
    "tar",
    "tar-ig",
    "pgmres",
    "pgmres-ig",
    "fgmres-tar-ig",
)

_SI_METHODS = {"si", "si-dsa", "romsad", "tar", "tar-ig"}


@dataclass
class RunRecord:
    """Digest of one solve on one test parameter."""

    method: str
    mu: tuple
    converged: bool
    iterations: int
    sweeps: int
    r_inf: float
    history: list
    is_krylov: bool
    initial_sweeps: int
    wall_seconds: float


@dataclass
class RunSummary:
    """Per-parameter records plus arithmetic-mean aggregates per method."""

    records: list
    aggregates: dict
    test_parameters: np.ndarray


@dataclass
class OfflineBundle:
    """All offline products for one benchmark spec."""

    spec: BenchmarkSpec
    ig_basis: ReducedBasis | None = None
    romsad_basis: ReducedBasis | None = None
    romsad_config: RomsadConfig | None = None
    tar_si: TarArtifact | None = None
    tar_si_zero: TarArtifact | None = None
    tar_fgmres: TarArtifact | None = None
    timings: dict = field(default_factory=dict)
    all_training_converged: bool = True


def sample_test_parameters(spec: BenchmarkSpec, rng=None) -> np.ndarray:
    """Seeded uniform test draws, resampled away from the training grid."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    box = spec.parameter_space
    out = np.empty((spec.n_test, box.dim))
    got = 0
    while got < spec.n_test:
        candidate = box.sample(rng, 1)[0]
        clash = np.any(np.all(np.abs(spec.train_grid - candidate) < 1e-12, axis=1))
        if not clash:
            out[got] = candidate
            got += 1
    return out


def run_offline(
    spec: BenchmarkSpec,
    family: ProblemFamily | None = None,
    out_dir=None,
) -> OfflineBundle:
    """Compute training solutions and build every artifact the methods need."""
    family = family if family is not None else build_family(spec)
    methods = set(spec.methods)
    bundle = OfflineBundle(spec=spec)
    if not methods & {"romsad", "tar", "tar-ig", "pgmres-ig", "fgmres-tar-ig"}:
        return bundle  # nothing needs training data
    window = spec.romsad_window if "romsad" in methods else 0

    tic = time.perf_counter()
    solutions = training_solutions(
        family, spec.train_grid, tol=spec.tol, max_iter=spec.max_iter, window=window
    )
    train_time = time.perf_counter() - tic
    bundle.all_training_converged = all(s.converged for s in solutions)
    mean_solve = train_time / max(len(solutions), 1)
    timings = {"train_total": train_time, "train_mean": mean_solve}

    needs_ig = methods & {"tar-ig", "pgmres-ig", "fgmres-tar-ig"}
    if needs_ig:
        tic = time.perf_counter()
        snapshots = np.column_stack([s.flux.ravel() for s in solutions])
        ig = pod(snapshots, spec.eps_pod, family.quadrature)
        timings["ig.basis"] = time.perf_counter() - tic
        tic = time.perf_counter()
        project_operators(ig, family.affine)
        timings["ig.operator"] = time.perf_counter() - tic
        bundle.ig_basis = ig

    if "romsad" in methods:
        bundle.romsad_config = RomsadConfig(
            window=spec.romsad_window, switch_iteration=spec.romsad_switch
        )
        tic = time.perf_counter()
        bundle.romsad_basis = romsad_offline(
            family, solutions, bundle.romsad_config, spec.eps_pod
        )
        timings["romsad.basis"] = time.perf_counter() - tic

    if "tar-ig" in methods:
        t = {}
        bundle.tar_si = tar_offline_si(
            family,
            spec.train_grid,
            rho0_policy="rom-ig",
            n_w=spec.n_w,
            eps_pod=spec.eps_pod,
            solutions=solutions,
            ig_basis=bundle.ig_basis,
            timings=t,
        )
        timings.update({f"tar_si.{k}": v for k, v in t.items()})
    if "tar" in methods:
        t = {}
        bundle.tar_si_zero = tar_offline_si(
            family,
            spec.train_grid,
            rho0_policy="zero",
            n_w=spec.n_w,
            eps_pod=spec.eps_pod,
            solutions=solutions,
            timings=t,
        )
        timings.update({f"tar_si_zero.{k}": v for k, v in t.items()})
    if "fgmres-tar-ig" in methods:
        t = {}
        bundle.tar_fgmres = tar_offline_fgmres(
            family,
            spec.train_grid,
            rho0_policy="rom-ig",
            n_w=spec.n_w_fgmres,
            eps_pod=spec.eps_pod,
            solutions=solutions,
            ig_basis=bundle.ig_basis,
            timings=t,
        )
        timings.update({f"tar_fgmres.{k}": v for k, v in t.items()})

    bundle.timings = timings
    if out_dir is not None:
        persist_bundle(bundle, out_dir)
    return bundle


def persist_bundle(bundle: OfflineBundle, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if bundle.tar_si is not None:
        save_artifact(bundle.tar_si, out / "tar_si.tarrom")
    if bundle.tar_si_zero is not None:
        save_artifact(bundle.tar_si_zero, out / "tar_si_zero.tarrom")
    if bundle.tar_fgmres is not None:
        save_artifact(bundle.tar_fgmres, out / "tar_fgmres.tarrom")
    if bundle.romsad_basis is not None:
        romsad_artifact = TarArtifact(
            mode="si",
            ig_basis=None,
            levels=[bundle.romsad_basis],
            eps_pod=bundle.spec.eps_pod,
            n_w=1,
            metadata={
                "kind": "romsad",
                "window": str(bundle.spec.romsad_window),
                "switch": str(bundle.spec.romsad_switch),
            },
        )
        save_artifact(romsad_artifact, out / "romsad.tarrom")
    if bundle.ig_basis is not None and bundle.tar_si is None and bundle.tar_fgmres is None:
        ig_artifact = TarArtifact(
            mode="si",
            ig_basis=bundle.ig_basis,
            levels=[],
            eps_pod=bundle.spec.eps_pod,
            n_w=0,
            metadata={"kind": "initial-guess"},
        )
        save_artifact(ig_artifact, out / "ig.tarrom")
    write_timing_csv(bundle, out / "offline_timing.csv")


def load_bundle(spec: BenchmarkSpec, family: ProblemFamily, out_dir) -> OfflineBundle:
    """Reload persisted artifacts for the configured method list."""
    out = Path(out_dir)
    bundle = OfflineBundle(spec=spec)
    methods = set(spec.methods)

    def need(name: str) -> Path:
        path = out / name
        if not path.exists():
            raise FileNotFoundError(
                f"missing artifact {path}; run the offline stage first"
            )
        return path

    if "tar-ig" in methods:
        bundle.tar_si = load_artifact(need("tar_si.tarrom"), family)
        bundle.ig_basis = bundle.tar_si.ig_basis
    if "tar" in methods:
        bundle.tar_si_zero = load_artifact(need("tar_si_zero.tarrom"), family)
    if "fgmres-tar-ig" in methods:
        bundle.tar_fgmres = load_artifact(need("tar_fgmres.tarrom"), family)
        if bundle.ig_basis is None:
            bundle.ig_basis = bundle.tar_fgmres.ig_basis
    if "romsad" in methods:
        romsad = load_artifact(need("romsad.tarrom"), family)
        bundle.romsad_basis = romsad.levels[0]
        bundle.romsad_config = RomsadConfig(
            window=int(romsad.metadata.get("window", spec.romsad_window)),
            switch_iteration=int(romsad.metadata.get("switch", spec.romsad_switch)),
        )
    if "pgmres-ig" in methods and bundle.ig_basis is None:
        ig = load_artifact(need("ig.tarrom"), family)
        bundle.ig_basis = ig.ig_basis
    return bundle


def run_method(
    method: str,
    spec: BenchmarkSpec,
    family: ProblemFamily,
    bundle: OfflineBundle,
    mu,
    dsa_op=None,
) -> RunRecord:
    """Run one solver configuration on one parameter and digest the report."""
    problem = family.problem(mu)
    if dsa_op is None and method != "si":
        dsa_op = assemble_dsa(problem)

    tic = time.perf_counter()
    if method == "si":
        report = source_iteration(
            problem, tol=spec.tol, max_iter=spec.max_iter, method="si"
        )
    elif method == "si-dsa":
        report = source_iteration(
            problem,
            correction=dsa_correction(problem, dsa_op),
            tol=spec.tol,
            max_iter=spec.max_iter,
            method="si-dsa",
        )
    elif method == "romsad":
        if bundle.romsad_basis is None:
            raise FileNotFoundError("romsad artifact not built; run offline first")
        correction = romsad_schedule(
            bundle.romsad_config, bundle.romsad_basis, problem, dsa=dsa_op
        )
        report = source_iteration(
            problem,
            correction=correction,
            tol=spec.tol,
            max_iter=spec.max_iter,
            method="romsad",
        )
    elif method in ("tar", "tar-ig"):
        artifact = bundle.tar_si if method == "tar-ig" else bundle.tar_si_zero
        if artifact is None:
            raise FileNotFoundError(f"{method} artifact not built; run offline first")
        report = tar_online_si(
            artifact, problem, tol=spec.tol, max_iter=spec.max_iter, dsa=dsa_op
        )
    elif method in ("pgmres", "pgmres-ig"):
        rho0 = None
        if method == "pgmres-ig":
            if bundle.ig_basis is None:
                raise FileNotFoundError("initial-guess basis not built; run offline first")
            rho0 = rom_initial_guess(bundle.ig_basis, problem.mu)
        report = fgmres(
            problem,
            preconditioner=DsaPreconditioner(problem, dsa_op),
            rho0=rho0,
            tol=spec.tol,
            max_iter=spec.max_iter,
            method=method,
        )
    elif method == "fgmres-tar-ig":
        if bundle.tar_fgmres is None:
            raise FileNotFoundError("fgmres artifact not built; run offline first")
        rho0 = None
        if bundle.tar_fgmres.ig_basis is not None:
            rho0 = rom_initial_guess(bundle.tar_fgmres.ig_basis, problem.mu)
        schedule = build_preconditioner_schedule(bundle.tar_fgmres, problem, dsa=dsa_op)
        report = fgmres(
            problem,
            preconditioner=schedule,
            rho0=rho0,
            tol=spec.tol,
            max_iter=spec.max_iter,
            method="fgmres-tar-ig",
        )
    else:
        raise ValueError(f"unknown method {method!r}; have {KNOWN_METHODS}")
    wall = time.perf_counter() - tic

    is_krylov = method not in _SI_METHODS
    r_inf = operator_residual(problem, report.final_density)
    return RunRecord(
        method=method,
        mu=tuple(np.atleast_1d(mu)),
        converged=report.converged,
        iterations=report.iterations,
        sweeps=report.sweep_count,
        r_inf=r_inf,
        history=list(report.residual_history),
        is_krylov=is_krylov,
        initial_sweeps=report.sweep_count - report.iterations if is_krylov else 0,
        wall_seconds=wall,
    )


def operator_residual(problem, rho: np.ndarray) -> float:
    """Sup norm of the density-space operator residual at a solution."""
    b = rhs_tilde(problem)
    return float(np.linalg.norm(apply_lhs_tilde(problem, rho) - b, ord=np.inf))


def run_suite(
    spec: BenchmarkSpec,
    bundle: OfflineBundle,
    family: ProblemFamily | None = None,
    methods=None,
    out_dir=None,
) -> RunSummary:
    """Run every configured method over the seeded test set and aggregate."""
    family = family if family is not None else build_family(spec)
    methods = tuple(methods) if methods is not None else spec.methods
    test_parameters = sample_test_parameters(spec)
    records: list[RunRecord] = []
    for mu in test_parameters:
        problem = family.problem(mu)
        dsa_op = assemble_dsa(problem)
        for method in methods:
            records.append(
                run_method(method, spec, family, bundle, mu, dsa_op=dsa_op)
            )

    aggregates: dict = {}
    for method in methods:
        rows = [r for r in records if r.method == method]
        aggregates[method] = {
            "n_sweep": float(np.mean([r.sweeps for r in rows])),
            "n_iter": float(np.mean([r.iterations for r in rows])),
            "r_inf": float(np.mean([r.r_inf for r in rows])),
            "n_converged": int(sum(r.converged for r in rows)),
            "n_runs": len(rows),
            "wall_mean": float(np.mean([r.wall_seconds for r in rows])),
        }
    summary = RunSummary(
        records=records, aggregates=aggregates, test_parameters=test_parameters
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history_csv(summary, out / "histories.csv")
        write_summary_csv(summary, out / "summary.csv")
        write_wall_time_csv(summary, out / "wall_time.csv")
    return summary


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_history_csv(summary: RunSummary, path) -> None:
    """Per-iteration residual histories, one row per (method, mu, iteration)."""
    lines = ["method,mu_components,iter,cumulative_sweeps,increment_inf,lsq_residual"]
    for rec in summary.records:
        mu_text = ";".join(_fmt(v) for v in rec.mu)
        for i, value in enumerate(rec.history, start=1):
            if rec.is_krylov:
                cumulative = rec.initial_sweeps + i
                row = f"{rec.method},{mu_text},{i},{cumulative},,{_fmt(value)}"
            else:
                row = f"{rec.method},{mu_text},{i},{i},{_fmt(value)},"
            lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_csv(summary: RunSummary, path) -> None:
    """Deterministic aggregates; wall-clock timing goes to a sibling file."""
    lines = ["method,n_runs,n_converged,n_sweep_mean,n_iter_mean,r_inf_mean"]
    for method, agg in summary.aggregates.items():
        lines.append(
            f"{method},{agg['n_runs']},{agg['n_converged']},{_fmt(agg['n_sweep'])},"
            f"{_fmt(agg['n_iter'])},{_fmt(agg['r_inf'])}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_wall_time_csv(summary: RunSummary, path) -> None:
    """Machine-dependent mean wall seconds per method (not deterministic)."""
    lines = ["method,wall_mean_s,t_rel_vs_si_dsa"]
    base = summary.aggregates.get("si-dsa", {}).get("wall_mean", 0.0)
    for method, agg in summary.aggregates.items():
        rel = agg["wall_mean"] / base if base > 0 else 0.0
        lines.append(f"{method},{_fmt(agg['wall_mean'])},{_fmt(rel)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_timing_csv(bundle: OfflineBundle, path) -> None:
    """Relative offline costs against one mean training solve."""
    mean_solve = bundle.timings.get("train_mean", 0.0)
    lines = ["phase,seconds,relative_to_one_solve"]
    for key, seconds in sorted(bundle.timings.items()):
        rel = seconds / mean_solve if mean_solve > 0 else 0.0
        lines.append(f"{key},{_fmt(seconds)},{_fmt(rel)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
