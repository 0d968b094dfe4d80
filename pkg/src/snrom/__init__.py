"""Discrete-ordinates transport solvers with trajectory-aware ROM preconditioners.

Subpackages and modules:
  quadrature       ordinate sets (slab Gauss-Legendre, sphere tensor rules)
  mesh             interval and rectangle meshes
  discretization   upwind DG assembly, affine parametric families
  sweep            block forward-substitution kernels (compiled + fallback)
  transport        matrix-free sweeps and source iteration
  dsa              interior-penalty diffusion correction
  rom              POD bases, operator projection, reduced corrections
  tar              trajectory-aware offline/online pipelines
  krylov           flexible GMRES on the density-space operator
  workbench        benchmark registry, CLI, persistence, metrics
"""

from . import sweep
from .discretization import (
    AffineDecomposition,
    DGSpace,
    DiscreteProblem,
    MaterialTerm,
    ParameterSpace,
    ProblemFamily,
    SweepOperator,
    apply_full_operator,
    assemble_coefficient_mass,
    assemble_dense_full_system,
    assemble_direction_operator,
    assemble_rhs,
    simple_family,
    simple_problem,
)
from .dsa import DiffusionOperator, DsaPreconditioner, assemble_dsa, dsa_correct, dsa_correction
from .krylov import KrylovState, fgmres, hessenberg_lsq
from .mesh import SpatialMesh, build_mesh, interval_mesh, rectangle_mesh
from .quadrature import AngularQuadrature, chebyshev_legendre, gauss_legendre
from .rom import (
    ReducedBasis,
    ReducedSolveError,
    apply_rom_correction,
    pod,
    project_operators,
    reduced_operator,
    reduced_rhs,
    reduced_solve,
    rom_initial_guess,
)
from .tar import (
    AlreadyConverged,
    KrylovBreakdown,
    PreconditionerSchedule,
    RomsadConfig,
    TarArtifact,
    TrainingSolution,
    build_ig_basis,
    build_preconditioner_schedule,
    compute_eta,
    romsad_offline,
    romsad_schedule,
    tar_offline_fgmres,
    tar_offline_si,
    tar_online_si,
    training_solutions,
)
from .transport import (
    SolveReport,
    apply_lhs_tilde,
    compute_density,
    rhs_tilde,
    si_step,
    source_iteration,
    sweep_all,
    transport_sweep,
)

__version__ = "0.1.0"
