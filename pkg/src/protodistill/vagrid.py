"""Valence-arousal circumplex grid and nearest-center binning.

Indices are 0-based: bin ``(u, v)`` has flat index ``u * G + v`` where ``u``
indexes valence and ``v`` indexes arousal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidGridError, InvalidPointError

CENTER_EXTENT = 0.8


@dataclass(frozen=True)
class VAPoint:
    valence: float
    arousal: float

    def __post_init__(self):
        for name in ("valence", "arousal"):
            x = getattr(self, name)
            if not math.isfinite(x):
                raise InvalidPointError(f"{name} must be finite, got {x}")
            if not -1.0 <= x <= 1.0:
                raise InvalidPointError(f"{name} must lie in [-1, 1], got {x}")

    @classmethod
    def clamped(cls, valence: float, arousal: float) -> "VAPoint":
        """Clamp into [-1, 1] first; used only by ingestion code."""
        return cls(min(1.0, max(-1.0, float(valence))), min(1.0, max(-1.0, float(arousal))))


@dataclass(frozen=True)
class GridSpec:
    G: int
    centers: tuple[float, ...]

    def __post_init__(self):
        if self.G < 2 or len(self.centers) != self.G:
            raise InvalidGridError(f"grid needs G >= 2 centers, got G={self.G}")
        c = np.asarray(self.centers)
        if not np.all(np.diff(c) > 0):
            raise InvalidGridError("centers must be strictly increasing")

    @property
    def K(self) -> int:
        return self.G * self.G

    def center_array(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=np.float64)

    def flat(self, u: int, v: int) -> int:
        return u * self.G + v

    def unflat(self, k: int) -> tuple[int, int]:
        return divmod(k, self.G)


@dataclass(frozen=True)
class BinIndex:
    u: int
    v: int

    def flat(self, g: GridSpec) -> int:
        if not (0 <= self.u < g.G and 0 <= self.v < g.G):
            raise InvalidGridError(f"bin {self} outside a {g.G}x{g.G} grid")
        return g.flat(self.u, self.v)


@dataclass(frozen=True)
class BinCounts:
    counts: np.ndarray  # (G, G) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def make_grid(G: int = 5) -> GridSpec:
    """Return ``G`` uniformly spaced centers spanning [-0.8, 0.8].

    Centers are computed as ``0.8 * ((2j - (G-1)) / (G-1))`` so the grid is
    exactly antisymmetric about zero.
    """
    if not isinstance(G, (int, np.integer)) or G < 2:
        raise InvalidGridError(f"grid side must be an integer >= 2, got {G!r}")
    G = int(G)
    centers = tuple(CENTER_EXTENT * ((2 * j - (G - 1)) / (G - 1)) for j in range(G))
    return GridSpec(G, centers)


def _nearest(x: float, centers: np.ndarray) -> int:
    # argmin returns the first minimum, i.e. ties go to the lower index
    return int(np.argmin(np.abs(x - centers)))


def bin_va(p: VAPoint, g: GridSpec) -> BinIndex:
    c = g.center_array()
    return BinIndex(_nearest(p.valence, c), _nearest(p.arousal, c))


def bin_indices(va: np.ndarray, g: GridSpec) -> np.ndarray:
    """Vectorized :func:`bin_va` over an ``(N, 2)`` array; returns flat indices."""
    va = np.asarray(va, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(va)) or np.any(np.abs(va) > 1.0):
        raise InvalidPointError("V/A coordinates must be finite and inside [-1, 1]")
    c = g.center_array()
    u = np.argmin(np.abs(va[:, 0:1] - c[None, :]), axis=1)
    v = np.argmin(np.abs(va[:, 1:2] - c[None, :]), axis=1)
    return (u * g.G + v).astype(np.int64)


def coverage(points: Iterable[VAPoint] | np.ndarray, g: GridSpec) -> BinCounts:
    if isinstance(points, np.ndarray):
        arr = points.reshape(-1, 2)
    else:
        arr = np.array([(p.valence, p.arousal) for p in points], dtype=np.float64).reshape(-1, 2)
    flat = bin_indices(arr, g)
    counts = np.bincount(flat, minlength=g.K).reshape(g.G, g.G).astype(np.int64)
    return BinCounts(counts)
