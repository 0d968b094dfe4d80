"""Binary container for offline products: named float64 tensors plus metadata.

Layout (little endian): magic ``TARROM1\\0``, a version byte, a u64 tensor
count, then per tensor a u32 name length, the UTF-8 name, a u8 rank,
``rank`` u64 dims and the row-major float64 payload; finally a u64 byte
length and a UTF-8 ``key=value`` metadata block.  Round trips are
bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..discretization import ProblemFamily
from ..rom import ReducedBasis
from ..tar import TarArtifact

MAGIC = b"TARROM1\x00"
VERSION = 1


class ArtifactFormatError(ValueError):
    """The file is not a well-formed artifact container."""


def write_tensors(path, tensors: dict, metadata: dict) -> None:
    """Write named float64 arrays and string metadata to ``path``."""
    chunks = [MAGIC, struct.pack("<B", VERSION), struct.pack("<Q", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            chunks.append(struct.pack("<Q", d))
        chunks.append(arr.tobytes())
    meta_text = "".join(f"{k}={v}\n" for k, v in metadata.items()).encode("utf-8")
    chunks.append(struct.pack("<Q", len(meta_text)))
    chunks.append(meta_text)
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArtifactFormatError("truncated artifact file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def read_tensors(path):
    """Read back ``(tensors, metadata)`` written by :func:`write_tensors`."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(MAGIC)) != MAGIC:
        raise ArtifactFormatError("bad magic; not an artifact container")
    version = reader.u8()
    if version != VERSION:
        raise ArtifactFormatError(f"unsupported container version {version}")
    n_tensors = reader.u64()
    tensors = {}
    for _ in range(n_tensors):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u8()
        dims = tuple(reader.u64() for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = reader.take(8 * count)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    meta_len = reader.u64()
    meta_text = reader.take(meta_len).decode("utf-8")
    if reader.pos != len(reader.data):
        raise ArtifactFormatError("trailing bytes after metadata block")
    metadata = {}
    for line in meta_text.splitlines():
        if line:
            key, _, value = line.partition("=")
            metadata[key] = value
    return tensors, metadata


def _basis_tensors(prefix: str, basis: ReducedBasis, tensors: dict) -> None:
    tensors[f"{prefix}/u"] = basis.u
    tensors[f"{prefix}/singular_values"] = basis.singular_values
    tensors[f"{prefix}/discarded_values"] = basis.discarded_values
    tensors[f"{prefix}/u_rho"] = basis.u_rho
    tensors[f"{prefix}/u_iso"] = basis.u_iso
    if basis.op_blocks is not None:
        for q, block in enumerate(basis.op_blocks):
            tensors[f"{prefix}/op{q}"] = block
    if basis.rhs_blocks is not None:
        for p, block in enumerate(basis.rhs_blocks):
            tensors[f"{prefix}/rhs{p}"] = block


def _basis_from_tensors(prefix: str, tensors: dict, n_dirs: int, family) -> ReducedBasis:
    op_blocks = []
    q = 0
    while f"{prefix}/op{q}" in tensors:
        op_blocks.append(tensors[f"{prefix}/op{q}"])
        q += 1
    rhs_blocks = []
    p = 0
    while f"{prefix}/rhs{p}" in tensors:
        rhs_blocks.append(tensors[f"{prefix}/rhs{p}"])
        p += 1
    basis = ReducedBasis(
        u=tensors[f"{prefix}/u"],
        singular_values=tensors[f"{prefix}/singular_values"],
        discarded_values=tensors[f"{prefix}/discarded_values"],
        n_dirs=n_dirs,
        u_rho=tensors[f"{prefix}/u_rho"],
        u_iso=tensors[f"{prefix}/u_iso"],
        op_blocks=op_blocks or None,
        rhs_blocks=rhs_blocks or None,
        affine=None if family is None else family.affine,
    )
    expected = basis.u.shape[0]
    if n_dirs * basis.u_rho.shape[0] != expected:
        raise ArtifactFormatError("inconsistent basis dimensions in artifact")
    return basis


def save_artifact(artifact: TarArtifact, path) -> None:
    """Persist a trajectory-aware artifact (bit-exact round trip)."""
    tensors: dict = {}
    if artifact.ig_basis is not None:
        _basis_tensors("ig", artifact.ig_basis, tensors)
    for i, level in enumerate(artifact.levels):
        _basis_tensors(f"level{i}", level, tensors)
    n_dirs = None
    for basis in [artifact.ig_basis, *artifact.levels]:
        if basis is not None:
            n_dirs = basis.n_dirs
            break
    metadata = {
        "container": "tar-artifact",
        "mode": artifact.mode,
        "eps_pod": repr(artifact.eps_pod),
        "n_w": str(artifact.n_w),
        "n_levels": str(len(artifact.levels)),
        "has_ig": str(int(artifact.ig_basis is not None)),
        "n_dirs": str(n_dirs if n_dirs is not None else 0),
    }
    for key, value in artifact.metadata.items():
        metadata[f"x.{key}"] = str(value)
    write_tensors(path, tensors, metadata)


def load_artifact(path, family: ProblemFamily | None = None) -> TarArtifact:
    """Load a persisted artifact.

    Passing the owning ``family`` re-attaches the affine decomposition so
    the loaded bases can be used in solves; without it the artifact is
    inspectable but inert.
    """
    tensors, metadata = read_tensors(path)
    if metadata.get("container") != "tar-artifact":
        raise ArtifactFormatError("container does not hold a tar artifact")
    n_dirs = int(metadata["n_dirs"])
    if family is not None and family.quadrature.n_dirs != n_dirs:
        raise ArtifactFormatError(
            f"artifact has {n_dirs} ordinates, family has {family.quadrature.n_dirs}"
        )
    ig_basis = None
    if metadata.get("has_ig") == "1":
        ig_basis = _basis_from_tensors("ig", tensors, n_dirs, family)
    levels = [
        _basis_from_tensors(f"level{i}", tensors, n_dirs, family)
        for i in range(int(metadata["n_levels"]))
    ]
    extra = {
        key[2:]: value for key, value in metadata.items() if key.startswith("x.")
    }
    return TarArtifact(
        mode=metadata["mode"],
        ig_basis=ig_basis,
        levels=levels,
        eps_pod=float(metadata["eps_pod"]),
        n_w=int(metadata["n_w"]),
        metadata=extra,
    )
