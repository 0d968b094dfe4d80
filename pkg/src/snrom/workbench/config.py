"""Key-value configuration files for the workbench CLI.

Format: UTF-8 text, one ``key = value`` pair per line, ``#`` comments.
Dotted keys group related settings.  Unknown keys are rejected.

Keys (availability depends on the problem):
  problem            two_material | variable_scattering | pin_cell | lattice
  seed               test-sampling seed (integer)
  mesh.nx, mesh.ny   cells per axis (2D problems)
  quad.n             ordinate count (1D slab)
  quad.n_alpha       azimuthal count (2D)
  quad.n_z           polar count (2D)
  rom.eps_pod        POD truncation threshold
  tar.n_w            number of trajectory-aware levels (source iteration)
  tar.n_w_fgmres     number of levels for the flexible Krylov variant
  romsad.window      snapshot window of the single-basis corrector
  romsad.switch      iteration at which it hands over to the diffusion correction
  solver.method      comma-separated method list
  solver.tol         absolute convergence tolerance
  solver.max_iter    iteration cap
  test.count         number of seeded test parameters
  train.n            training-sample count (variable_scattering)
  train.n_a          training-grid points along the first parameter
  train.n_s          training-grid points along the second parameter
  paths.out          default output directory
"""

from __future__ import annotations

from pathlib import Path

from .benchmarks import PROBLEMS, BenchmarkSpec, get_spec
from .runner import KNOWN_METHODS


class ConfigError(ValueError):
    """Malformed configuration text or unknown key."""


_COMMON_KEYS = {
    "problem",
    "seed",
    "rom.eps_pod",
    "tar.n_w",
    "tar.n_w_fgmres",
    "romsad.window",
    "romsad.switch",
    "solver.method",
    "solver.tol",
    "solver.max_iter",
    "test.count",
    "paths.out",
}

_PROBLEM_KEYS = {
    "two_material": {"quad.n", "train.n_a", "train.n_s"},
    "variable_scattering": {"mesh.nx", "mesh.ny", "quad.n_alpha", "quad.n_z", "train.n"},
    "pin_cell": {"mesh.nx", "mesh.ny", "quad.n_alpha", "quad.n_z", "train.n_a", "train.n_s"},
    "lattice": {"mesh.nx", "mesh.ny", "quad.n_alpha", "quad.n_z", "train.n_a", "train.n_s"},
}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into a string dictionary."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _as_int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from exc


def _as_float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from exc


def spec_from_config(cfg: dict) -> tuple[BenchmarkSpec, Path | None]:
    """Build a benchmark spec from parsed configuration; returns (spec, out path)."""
    if "problem" not in cfg:
        raise ConfigError("missing required key 'problem'")
    problem = cfg["problem"]
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; have {sorted(PROBLEMS)}")
    allowed = _COMMON_KEYS | _PROBLEM_KEYS[problem]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {problem}: {sorted(unknown)}")

    kwargs = {}
    if "seed" in cfg:
        kwargs["seed"] = _as_int(cfg, "seed")
    if "rom.eps_pod" in cfg:
        kwargs["eps_pod"] = _as_float(cfg, "rom.eps_pod")
    if "tar.n_w" in cfg:
        kwargs["n_w"] = _as_int(cfg, "tar.n_w")
    if "tar.n_w_fgmres" in cfg:
        kwargs["n_w_fgmres"] = _as_int(cfg, "tar.n_w_fgmres")
    if "romsad.window" in cfg:
        kwargs["romsad_window"] = _as_int(cfg, "romsad.window")
    if "romsad.switch" in cfg:
        kwargs["romsad_switch"] = _as_int(cfg, "romsad.switch")
    if "solver.tol" in cfg:
        kwargs["tol"] = _as_float(cfg, "solver.tol")
    if "solver.max_iter" in cfg:
        kwargs["max_iter"] = _as_int(cfg, "solver.max_iter")
    if "test.count" in cfg:
        kwargs["n_test"] = _as_int(cfg, "test.count")
    if "solver.method" in cfg:
        methods = tuple(m.strip() for m in cfg["solver.method"].split(",") if m.strip())
        bad = [m for m in methods if m not in KNOWN_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; have {KNOWN_METHODS}")
        kwargs["methods"] = methods

    if problem == "two_material":
        if "quad.n" in cfg:
            kwargs["quad_n"] = _as_int(cfg, "quad.n")
        if "train.n_a" in cfg:
            kwargs["n_train_a"] = _as_int(cfg, "train.n_a")
        if "train.n_s" in cfg:
            kwargs["n_train_s"] = _as_int(cfg, "train.n_s")
    else:
        if "mesh.nx" in cfg:
            kwargs["nx"] = _as_int(cfg, "mesh.nx")
        if "mesh.ny" in cfg:
            kwargs["ny"] = _as_int(cfg, "mesh.ny")
        if "quad.n_alpha" in cfg:
            kwargs["n_alpha"] = _as_int(cfg, "quad.n_alpha")
        if "quad.n_z" in cfg:
            kwargs["n_z"] = _as_int(cfg, "quad.n_z")
        if problem == "variable_scattering" and "train.n" in cfg:
            kwargs["n_train"] = _as_int(cfg, "train.n")
        if problem in ("pin_cell", "lattice"):
            if "train.n_a" in cfg:
                kwargs["n_train_a"] = _as_int(cfg, "train.n_a")
            if "train.n_s" in cfg:
                kwargs["n_train_s"] = _as_int(cfg, "train.n_s")

    out_path = Path(cfg["paths.out"]) if "paths.out" in cfg else None
    return get_spec(problem, **kwargs), out_path


def load_config(path) -> tuple[BenchmarkSpec, Path | None]:
    return spec_from_config(parse_config(Path(path).read_text(encoding="utf-8")))
