"""Frozen valence-arousal prototype bank.

Teacher embeddings are averaged per V/A bin; empty bins copy the mean of the
nearest non-empty bin (Euclidean distance on integer grid indices, ties to the
lowest flat index); the per-bin prior is Laplace smoothed counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import artifacts, kernels
from .errors import EmptyInputError, FormatError, IntegrityError, ShapeError
from .vagrid import GridSpec, VAPoint, bin_indices

BANK_VERSION = "v4-desk"


@dataclass(frozen=True)
class PrototypeBank:
    prototypes: np.ndarray  # (K, D)
    prior: np.ndarray  # (K,)
    counts: np.ndarray  # (K,)
    grid: GridSpec
    epsilon: float = 1.0
    version_tag: str = BANK_VERSION

    def __post_init__(self):
        for name in ("prototypes", "prior", "counts"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name == "counts" else np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K = self.grid.K
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] != K:
            raise ShapeError(f"expected {K} prototype rows")
        if self.prior.shape != (K,) or self.counts.shape != (K,):
            raise ShapeError("prior and counts need one entry per bin")
        if not np.all(np.isfinite(self.prototypes)):
            raise ShapeError("prototypes must be finite")

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def D(self) -> int:
        return self.prototypes.shape[1]

    def arrays(self) -> dict:
        return {"prototypes": self.prototypes, "prior": self.prior, "counts": self.counts,
                "centers": self.grid.center_array()}

    def header(self) -> dict:
        return {"version": self.version_tag, "D": self.D, "G": self.grid.G, "epsilon": self.epsilon}

    def to_bytes(self) -> bytes:
        return artifacts.container_bytes(self.arrays())

    @property
    def digest(self) -> str:
        """SHA-256 of the serialized container (equals the saved file's digest)."""
        return artifacts.sha256_bytes(self.to_bytes())


def laplace_prior(counts, epsilon: float = 1.0) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    smoothed = counts + epsilon
    return smoothed / smoothed.sum()


def nearest_nonempty_fill(sums: np.ndarray, counts: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Per-bin means, with empty bins copied from the nearest non-empty bin."""
    sums = np.asarray(sums, dtype=np.float64)
    counts = np.asarray(counts).reshape(-1)
    K = grid.K
    if sums.shape[0] != K or counts.shape != (K,):
        raise ShapeError("sums/counts do not match the grid")
    filled = counts > 0
    if not filled.any():
        raise EmptyInputError("every bin is empty")
    out = np.zeros_like(sums)
    out[filled] = sums[filled] / counts[filled][:, None]
    src = np.flatnonzero(filled)
    su, sv = np.divmod(src, grid.G)
    for k in np.flatnonzero(~filled):
        u, v = divmod(int(k), grid.G)
        d2 = (su - u) ** 2 + (sv - v) ** 2
        # argmin over ascending flat indices resolves ties to the lowest one
        out[k] = out[src[int(np.argmin(d2))]]
    return out


def build_bank(embeddings: np.ndarray, va, grid: GridSpec, epsilon: float = 1.0,
               support_embeddings: np.ndarray | None = None, support_va=None,
               unit_tol: float = 1e-6, version_tag: str = BANK_VERSION) -> PrototypeBank:
    """Bin-average unit embeddings by their V/A coordinates.

    ``support_embeddings``/``support_va`` optionally add unlabeled samples
    binned by teacher-predicted V/A (pseudo-labels).  Off unless passed.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ShapeError("embeddings must be an (N, D) matrix")
    if emb.shape[0] == 0:
        raise EmptyInputError("cannot build a bank from zero samples")
    if va is not None and not isinstance(va, np.ndarray):
        va = np.array([(p.valence, p.arousal) if isinstance(p, VAPoint) else p for p in va], dtype=np.float64)
    va = np.asarray(va, dtype=np.float64).reshape(-1, 2)
    if len(va) != len(emb):
        raise ShapeError("one V/A point per embedding is required")
    if support_embeddings is not None:
        sup = np.asarray(support_embeddings, dtype=np.float64)
        if sup.ndim != 2 or sup.shape[1] != emb.shape[1]:
            raise ShapeError("support embeddings have a different dimension")
        sva = np.clip(np.asarray(support_va, dtype=np.float64).reshape(-1, 2), -1.0, 1.0)
        emb = np.concatenate([emb, sup])
        va = np.concatenate([va, sva])
    norms = np.linalg.norm(emb, axis=1)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        raise ShapeError("embeddings must be unit-norm")
    flat = bin_indices(va, grid)
    sums, counts = kernels.accumulate_bins(emb, flat, grid.K)
    protos = nearest_nonempty_fill(sums, counts, grid)
    return PrototypeBank(protos, laplace_prior(counts, epsilon), counts, grid, float(epsilon), version_tag)


def bank_sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_bank(bank: PrototypeBank, path) -> str:
    """Write the bank container and its JSON header; return the file digest."""
    digest = artifacts.write_container(bank.arrays(), path)
    artifacts.write_json(bank_sidecar(path), {**bank.header(), "sha256": digest})
    return digest


def load_bank(path, expected_digest: str | None = None) -> PrototypeBank:
    """Load and re-verify a bank.

    The file digest is checked against ``expected_digest`` if given, else
    against the sidecar header.
    """
    path = Path(path)
    data = path.read_bytes()
    side = bank_sidecar(path)
    header = artifacts.read_json(side) if side.is_file() else None
    want = expected_digest or (header or {}).get("sha256")
    if want is None:
        raise FormatError(f"{path}: no recorded digest (missing {side.name})")
    if artifacts.sha256_bytes(data) != want:
        raise IntegrityError(f"{path}: SHA-256 mismatch", str(path))
    arrays = artifacts.read_container_bytes(data)
    missing = {"prototypes", "prior", "counts", "centers"} - arrays.keys()
    if missing:
        raise FormatError(f"{path}: missing arrays {sorted(missing)}")
    centers = tuple(float(c) for c in arrays["centers"])
    grid = GridSpec(len(centers), centers)
    header = header or {}
    return PrototypeBank(arrays["prototypes"], arrays["prior"], arrays["counts"], grid,
                         float(header.get("epsilon", 1.0)), header.get("version", BANK_VERSION))
