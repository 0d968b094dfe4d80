"""Trajectory-aware construction and application of per-iteration ROM correctors.

Offline, a sequence of reduced bases is built level by level: the snapshots
for level ``l`` are ideal-correction deltas of training trajectories that
were advanced using the level ``1..l-1`` reduced corrections themselves, so
the offline residual trajectory coincides with the online one.  For the
Krylov variant the correction deltas are reconstructed from stored Arnoldi
data instead of running source iterations.

Also provides the single-basis windowed corrector that switches to the
diffusion correction after a fixed iteration, used as a baseline.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretization import DiscreteProblem, ProblemFamily
from .dsa import DiffusionOperator, assemble_dsa, dsa_correct, dsa_correction
from .rom import (
    ReducedBasis,
    ReducedSolveError,
    apply_rom_correction,
    build_solution_basis,
    pod,
    project_operators,
    rom_initial_guess,
)
from .krylov import REORTH_DROP
from .transport import (
    SolveReport,
    apply_lhs_tilde,
    rhs_tilde,
    si_step,
    source_iteration,
    sweep_all,
)

ZERO_GUESS = "zero"
ROM_GUESS = "rom-ig"
BREAKDOWN_RTOL = 1e-14


class KrylovBreakdown(Exception):
    """The Arnoldi process terminated (lucky breakdown)."""


class AlreadyConverged(Exception):
    """The initial residual vanishes; no correction levels can be generated."""


# ---------------------------------------------------------------------------
# Training solves
# ---------------------------------------------------------------------------


@dataclass
class TrainingSolution:
    """Converged reference state for one training parameter."""

    mu: tuple
    flux: np.ndarray  # (n_dirs, n_dof)
    rho: np.ndarray
    converged: bool
    window_fluxes: list  # first few intermediate fluxes (windowed corrector)


def training_solutions(
    family: ProblemFamily,
    train_set: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
    window: int = 0,
) -> list[TrainingSolution]:
    """Solve every training parameter with diffusion-corrected source iteration."""
    out = []
    for mu in np.atleast_2d(train_set):
        problem = family.problem(mu)
        report = source_iteration(
            problem,
            correction=dsa_correction(problem),
            tol=tol,
            max_iter=max_iter,
            flux_window=window,
            method="si-dsa",
        )
        if not report.converged:
            warnings.warn(
                f"training solve at mu={tuple(mu)} stopped at max_iter;"
                " snapshot kept with limited accuracy"
            )
        out.append(
            TrainingSolution(
                mu=tuple(np.atleast_1d(mu)),
                flux=report.final_flux,
                rho=report.final_density,
                converged=report.converged,
                window_fluxes=report.window_fluxes or [],
            )
        )
    return out


def build_ig_basis(
    family: ProblemFamily, solutions: list[TrainingSolution], eps_pod: float
) -> ReducedBasis:
    """Initial-guess basis from the converged solution snapshots."""
    snapshots = np.column_stack([s.flux.ravel() for s in solutions])
    return build_solution_basis(snapshots, eps_pod, family.quadrature, family.affine)


def _initial_density(policy: str, ig_basis: ReducedBasis | None, mu, n_dof: int):
    if policy == ZERO_GUESS:
        return np.zeros(n_dof)
    if policy == ROM_GUESS:
        if ig_basis is None:
            raise ValueError("rom-ig policy requires an initial-guess basis")
        return rom_initial_guess(ig_basis, tuple(np.atleast_1d(mu)))
    raise ValueError(f"unknown initial-guess policy {policy!r}")


# ---------------------------------------------------------------------------
# Artifact
# ---------------------------------------------------------------------------


@dataclass
class TarArtifact:
    """Ordered per-iteration reduced bases plus the optional initial-guess basis."""

    mode: str  # "si" | "fgmres"
    ig_basis: ReducedBasis | None
    levels: list
    eps_pod: float
    n_w: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("si", "fgmres"):
            raise ValueError(f"unknown artifact mode {self.mode!r}")


# ---------------------------------------------------------------------------
# Source-iteration variant
# ---------------------------------------------------------------------------


def tar_offline_si(
    family: ProblemFamily,
    train_set: np.ndarray,
    rho0_policy: str = ROM_GUESS,
    n_w: int = 2,
    eps_pod: float = 1e-7,
    solutions: list[TrainingSolution] | None = None,
    ig_basis: ReducedBasis | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    timings: dict | None = None,
    trajectory_out: dict | None = None,
) -> TarArtifact:
    """Build the per-iteration correction bases for source iteration.

    Every level advances each training trajectory by one source iteration,
    collects the ideal-correction deltas against the converged solutions,
    compresses them, and immediately applies the new reduced correction so
    the next level sees the corrected trajectory.  When ``trajectory_out``
    is given it is filled with the per-parameter density-increment vectors
    of every level (offline residual trajectories).
    """
    train_set = np.atleast_2d(train_set)
    if solutions is None:
        solutions = training_solutions(family, train_set, tol=tol, max_iter=max_iter)
    if rho0_policy == ROM_GUESS and ig_basis is None:
        ig_basis = build_ig_basis(family, solutions, eps_pod)

    n_train = len(solutions)
    state_rho = [
        _initial_density(rho0_policy, ig_basis, sol.mu, family.space.n_dof)
        for sol in solutions
    ]
    levels: list[ReducedBasis] = []
    provenance: dict = {}
    timings = timings if timings is not None else {}
    timings.setdefault("sweep", 0.0)
    timings.setdefault("basis", 0.0)
    timings.setdefault("operator", 0.0)

    for level in range(1, n_w + 1):
        fluxes = []
        rho_stars = []
        tic = time.perf_counter()
        for sol, rho_prev in zip(solutions, state_rho):
            problem = family.problem(sol.mu)
            flux, rho_star = si_step(problem, rho_prev)
            fluxes.append(flux)
            rho_stars.append(rho_star)
        timings["sweep"] += time.perf_counter() - tic

        tic = time.perf_counter()
        snapshots = np.column_stack(
            [sol.flux.ravel() - flux.ravel() for sol, flux in zip(solutions, fluxes)]
        )
        basis = pod(snapshots, eps_pod, family.quadrature)
        timings["basis"] += time.perf_counter() - tic
        tic = time.perf_counter()
        project_operators(basis, family.affine)
        timings["operator"] += time.perf_counter() - tic
        levels.append(basis)
        provenance[f"level{level}.rank"] = str(basis.rank)
        provenance[f"level{level}.built_from"] = (
            "trajectories corrected by levels 1..%d" % (level - 1)
        )

        for i, sol in enumerate(solutions):
            problem = family.problem(sol.mu)
            increment = rho_stars[i] - state_rho[i]
            if trajectory_out is not None:
                trajectory_out.setdefault(sol.mu, []).append(increment.copy())
            try:
                delta = apply_rom_correction(basis, problem, increment)
            except ReducedSolveError as exc:
                raise RuntimeError(
                    f"offline build failed at level {level} for mu={sol.mu}: {exc}"
                ) from exc
            state_rho[i] = rho_stars[i] + delta

    metadata = {
        "mode": "si",
        "rho0_policy": rho0_policy,
        "n_train": str(n_train),
        "snapshot_kind": "converged-minus-iterate deltas",
        **provenance,
    }
    return TarArtifact(
        mode="si",
        ig_basis=ig_basis,
        levels=levels,
        eps_pod=eps_pod,
        n_w=len(levels),
        metadata=metadata,
    )


class TarCorrection:
    """Per-iteration correction: scheduled reduced bases, then the diffusion solve.

    Any reduced-solve failure permanently degrades to the diffusion
    correction for the rest of the run.
    """

    def __init__(self, levels, problem: DiscreteProblem, dsa: DiffusionOperator | None = None):
        self.levels = levels
        self.problem = problem
        self._dsa = dsa
        self._failed = False

    def _dsa_op(self) -> DiffusionOperator:
        if self._dsa is None:
            self._dsa = assemble_dsa(self.problem)
        return self._dsa

    def __call__(self, increment: np.ndarray, iteration: int) -> np.ndarray:
        if not self._failed and 1 <= iteration <= len(self.levels):
            try:
                return apply_rom_correction(
                    self.levels[iteration - 1], self.problem, increment
                )
            except ReducedSolveError:
                self._failed = True
        return dsa_correct(self._dsa_op(), increment, self.problem)


def tar_online_si(
    artifact: TarArtifact,
    problem: DiscreteProblem,
    tol: float = 1e-12,
    max_iter: int = 50,
    dsa: DiffusionOperator | None = None,
) -> SolveReport:
    """Source iteration preconditioned by the trajectory-aware schedule."""
    if artifact.mode != "si":
        raise ValueError("artifact was built for a different solver")
    rho0 = None
    if artifact.ig_basis is not None:
        rho0 = rom_initial_guess(artifact.ig_basis, problem.mu)
    correction = TarCorrection(artifact.levels, problem, dsa=dsa)
    label = "tar-ig" if artifact.ig_basis is not None else "tar"
    return source_iteration(
        problem, correction=correction, rho0=rho0, tol=tol, max_iter=max_iter, method=label
    )


# ---------------------------------------------------------------------------
# Krylov variant
# ---------------------------------------------------------------------------


def compute_eta(
    level: int,
    rho: np.ndarray,
    rho0: np.ndarray,
    r0_norm: float,
    zs: list,
    hess: np.ndarray,
    etas: list,
) -> np.ndarray:
    """Reconstruct the ideal-correction driver for one Krylov iteration.

    Level 1 uses the converged density and the initial residual norm;
    later levels combine the stored preconditioned vector with earlier
    drivers through the Hessenberg entries, so no linear solve is needed.
    """
    if level < 1:
        raise ValueError("level must be at least 1")
    if level == 1:
        if r0_norm <= 0.0:
            raise AlreadyConverged("initial residual vanishes")
        return (rho - rho0) / r0_norm
    h_sub = hess[level - 1, level - 2]
    if h_sub == 0.0:
        raise KrylovBreakdown(f"subdiagonal entry H[{level},{level - 1}] is zero")
    acc = zs[level - 2].copy()
    for k in range(level - 1):
        acc -= hess[k, level - 2] * etas[k]
    return acc / h_sub


@dataclass
class _ArnoldiState:
    rho0: np.ndarray
    r0_norm: float
    breakdown_tol: float
    qs: list
    zs: list
    etas: list
    hess: np.ndarray
    frozen: bool = False


def tar_offline_fgmres(
    family: ProblemFamily,
    train_set: np.ndarray,
    rho0_policy: str = ROM_GUESS,
    n_w: int = 1,
    eps_pod: float = 1e-7,
    solutions: list[TrainingSolution] | None = None,
    ig_basis: ReducedBasis | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    timings: dict | None = None,
) -> TarArtifact:
    """Build per-iteration preconditioner bases for the flexible Krylov solver.

    One Arnoldi process per training parameter advances in lockstep: each
    level reconstructs the correction drivers, sweeps once for the
    correction deltas, compresses them, then applies the fresh reduced
    preconditioner to continue every process.  Parameters that hit a lucky
    breakdown are frozen and excluded from later snapshot columns.
    """
    train_set = np.atleast_2d(train_set)
    if solutions is None:
        solutions = training_solutions(family, train_set, tol=tol, max_iter=max_iter)
    if rho0_policy == ROM_GUESS and ig_basis is None:
        ig_basis = build_ig_basis(family, solutions, eps_pod)

    timings = timings if timings is not None else {}
    timings.setdefault("sweep", 0.0)
    timings.setdefault("basis", 0.0)
    timings.setdefault("operator", 0.0)

    states: list[_ArnoldiState] = []
    tic = time.perf_counter()
    for sol in solutions:
        problem = family.problem(sol.mu)
        b = rhs_tilde(problem)
        rho0 = _initial_density(rho0_policy, ig_basis, sol.mu, family.space.n_dof)
        r0 = b - apply_lhs_tilde(problem, rho0) if np.any(rho0) else b.copy()
        beta = float(np.linalg.norm(r0))
        breakdown_tol = BREAKDOWN_RTOL * max(float(np.linalg.norm(b)), 1.0)
        state = _ArnoldiState(
            rho0=rho0,
            r0_norm=beta,
            breakdown_tol=breakdown_tol,
            qs=[],
            zs=[],
            etas=[],
            hess=np.zeros((n_w + 1, n_w)),
        )
        if beta <= breakdown_tol:
            state.frozen = True
        else:
            state.qs.append(r0 / beta)
        states.append(state)
    timings["sweep"] += time.perf_counter() - tic

    levels: list[ReducedBasis] = []
    provenance: dict = {}
    for level in range(1, n_w + 1):
        active = [i for i, st in enumerate(states) if not st.frozen]
        if not active:
            warnings.warn(
                f"all Arnoldi processes broke down before level {level};"
                " truncating the artifact"
            )
            break

        tic = time.perf_counter()
        columns = []
        for i in active:
            st = states[i]
            sol = solutions[i]
            problem = family.problem(sol.mu)
            eta = compute_eta(
                level, sol.rho, st.rho0, st.r0_norm, st.zs, st.hess, st.etas
            )
            st.etas.append(eta)
            delta_flux = sweep_all(problem, problem.apply_sigma_s(eta))
            columns.append(delta_flux.ravel())
        timings["sweep"] += time.perf_counter() - tic

        tic = time.perf_counter()
        basis = pod(np.column_stack(columns), eps_pod, family.quadrature)
        timings["basis"] += time.perf_counter() - tic
        tic = time.perf_counter()
        project_operators(basis, family.affine)
        timings["operator"] += time.perf_counter() - tic
        levels.append(basis)
        provenance[f"level{level}.rank"] = str(basis.rank)
        provenance[f"level{level}.built_from"] = (
            "Arnoldi trajectories preconditioned by levels 1..%d" % (level - 1)
        )

        tic = time.perf_counter()
        for i in active:
            st = states[i]
            sol = solutions[i]
            problem = family.problem(sol.mu)
            q = st.qs[level - 1]
            try:
                z = q + apply_rom_correction(basis, problem, q)
            except ReducedSolveError as exc:
                raise RuntimeError(
                    f"offline build failed at level {level} for mu={sol.mu}: {exc}"
                ) from exc
            st.zs.append(z)
            w = apply_lhs_tilde(problem, z)
            norm_before = float(np.linalg.norm(w))
            for k in range(level):
                st.hess[k, level - 1] = w @ st.qs[k]
                w -= st.hess[k, level - 1] * st.qs[k]
            if float(np.linalg.norm(w)) < norm_before / REORTH_DROP:
                for k in range(level):
                    extra = w @ st.qs[k]
                    st.hess[k, level - 1] += extra
                    w -= extra * st.qs[k]
            h_next = float(np.linalg.norm(w))
            st.hess[level, level - 1] = h_next
            if h_next <= st.breakdown_tol:
                st.frozen = True
            else:
                st.qs.append(w / h_next)
        timings["sweep"] += time.perf_counter() - tic

    metadata = {
        "mode": "fgmres",
        "rho0_policy": rho0_policy,
        "n_train": str(len(solutions)),
        "snapshot_kind": "sweep-solved deltas from eta drivers",
        **provenance,
    }
    return TarArtifact(
        mode="fgmres",
        ig_basis=ig_basis,
        levels=levels,
        eps_pod=eps_pod,
        n_w=len(levels),
        metadata=metadata,
    )


class PreconditionerSchedule:
    """Per-iteration right preconditioner: reduced levels, then the diffusion one."""

    def __init__(self, levels, problem: DiscreteProblem, dsa: DiffusionOperator | None = None):
        self.levels = list(levels)
        self.problem = problem
        self._dsa = dsa
        self._failed = False

    @property
    def n_w(self) -> int:
        return len(self.levels)

    def _dsa_op(self) -> DiffusionOperator:
        if self._dsa is None:
            self._dsa = assemble_dsa(self.problem)
        return self._dsa

    def __call__(self, iteration: int, q: np.ndarray) -> np.ndarray:
        if not self._failed and 1 <= iteration <= len(self.levels):
            try:
                return q + apply_rom_correction(
                    self.levels[iteration - 1], self.problem, q
                )
            except ReducedSolveError:
                self._failed = True
        return q + dsa_correct(self._dsa_op(), q, self.problem)


def build_preconditioner_schedule(
    artifact: TarArtifact | None,
    problem: DiscreteProblem,
    dsa: DiffusionOperator | None = None,
) -> PreconditionerSchedule:
    """Preconditioner sequence for the flexible solver; ``None`` means pure DSA."""
    levels = [] if artifact is None else artifact.levels
    return PreconditionerSchedule(levels, problem, dsa=dsa)


# ---------------------------------------------------------------------------
# Windowed single-basis corrector (baseline)
# ---------------------------------------------------------------------------


@dataclass
class RomsadConfig:
    """Window size, switch iteration, and threshold of the single-basis corrector."""

    window: int = 3
    switch_iteration: int = 3
    tolerance: float | None = None  # None: 1e-3 times the first increment norm

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.switch_iteration < 0:
            raise ValueError("switch iteration must be nonnegative")


def romsad_offline(
    family: ProblemFamily,
    solutions: list[TrainingSolution],
    config: RomsadConfig,
    eps_pod: float,
) -> ReducedBasis:
    """Single correction basis from fixed-preconditioner training iterates.

    Uses the intermediate fluxes recorded during the diffusion-corrected
    training solves (window positions 1..w) against the converged ones.
    """
    columns = []
    for sol in solutions:
        if len(sol.window_fluxes) < config.window:
            raise ValueError(
                "training solutions were recorded with a smaller window;"
                f" need {config.window}, have {len(sol.window_fluxes)}"
            )
        for flux in sol.window_fluxes[: config.window]:
            columns.append(sol.flux.ravel() - flux.ravel())
    basis = pod(np.column_stack(columns), eps_pod, family.quadrature)
    return project_operators(basis, family.affine)


class RomsadCorrection:
    """Reduced correction while early and rough, diffusion correction otherwise."""

    def __init__(
        self,
        config: RomsadConfig,
        basis: ReducedBasis,
        problem: DiscreteProblem,
        dsa: DiffusionOperator | None = None,
    ):
        self.config = config
        self.basis = basis
        self.problem = problem
        self._dsa = dsa
        self._threshold = config.tolerance
        self._failed = False

    def _dsa_op(self) -> DiffusionOperator:
        if self._dsa is None:
            self._dsa = assemble_dsa(self.problem)
        return self._dsa

    def __call__(self, increment: np.ndarray, iteration: int) -> np.ndarray:
        err = float(np.linalg.norm(increment, ord=np.inf))
        if self._threshold is None:
            self._threshold = 1e-3 * err
        use_rom = (
            not self._failed
            and 1 <= iteration <= self.config.switch_iteration
            and err >= self._threshold
        )
        if use_rom:
            try:
                return apply_rom_correction(self.basis, self.problem, increment)
            except ReducedSolveError:
                self._failed = True
        return dsa_correct(self._dsa_op(), increment, self.problem)


def romsad_schedule(
    config: RomsadConfig,
    basis: ReducedBasis,
    problem: DiscreteProblem,
    dsa: DiffusionOperator | None = None,
) -> RomsadCorrection:
    """Correction strategy for ``source_iteration`` implementing the window rule."""
    return RomsadCorrection(config, basis, problem, dsa=dsa)
