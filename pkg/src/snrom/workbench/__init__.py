"""Benchmark registry, configuration, artifact persistence, and CLI."""

from .artifact import ArtifactFormatError, load_artifact, read_tensors, save_artifact, write_tensors
from .benchmarks import PROBLEMS, BenchmarkSpec, build_family, get_spec, make_problem
from .config import ConfigError, load_config, parse_config, spec_from_config
from .runner import (
    KNOWN_METHODS,
    OfflineBundle,
    RunRecord,
    RunSummary,
    load_bundle,
    operator_residual,
    persist_bundle,
    run_method,
    run_offline,
    run_suite,
    sample_test_parameters,
)

__all__ = [
    "ArtifactFormatError",
    "BenchmarkSpec",
    "ConfigError",
    "KNOWN_METHODS",
    "OfflineBundle",
    "PROBLEMS",
    "RunRecord",
    "RunSummary",
    "build_family",
    "get_spec",
    "load_artifact",
    "load_bundle",
    "load_config",
    "make_problem",
    "operator_residual",
    "parse_config",
    "persist_bundle",
    "read_tensors",
    "run_method",
    "run_offline",
    "run_suite",
    "sample_test_parameters",
    "save_artifact",
    "spec_from_config",
    "write_tensors",
]
