"""EEG segments to per-band scalp topographic images.

Band power is a Welch estimate (Hann window, 2 s segments, 50% overlap)
integrated over each band.  Per subject and band, pooled channel powers are
z-scored and then min-max scaled to [0, 1].  Images are inverse-distance
weighted interpolations over a unit-disk electrode projection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from . import artifacts, kernels
from .errors import DegenerateNormalizationError, LayoutError, ShapeError, SpectralRangeError

BANDS: dict[str, tuple[float, float]] = {
    "delta": (1.0, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 45.0),
}
BAND_ORDER = tuple(BANDS)

MASK_VALUE = -1.0
"""Sentinel written to pixels outside the scalp disk."""

IDW_POWER = 2.0
IDW_EPS = 1e-9

MANIFEST_HEADER = ["segment_id", "subject_id", "band", "valence", "arousal", "file"]


@dataclass(frozen=True)
class ElectrodeLayout:
    names: tuple[str, ...]
    positions: np.ndarray  # (C, 2) in the unit disk

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2 or len(self.names) != pos.shape[0]:
            raise LayoutError("need one (x, y) position per channel name")
        if len(set(self.names)) != len(self.names):
            raise LayoutError("channel names must be unique")
        if np.any(np.hypot(pos[:, 0], pos[:, 1]) > 1.0 + 1e-12):
            raise LayoutError("electrode positions must lie in the closed unit disk")
        if len({(float(x), float(y)) for x, y in pos}) != len(pos):
            raise LayoutError("duplicate electrode positions")

    @property
    def n_channels(self) -> int:
        return len(self.names)


# Azimuthal projection of a 14-channel 10-20 subset (the Emotiv montage used by DREAMER).
_STANDARD_14 = {
    "AF3": (-0.31, 0.76), "F7": (-0.71, 0.52), "F3": (-0.40, 0.50), "FC5": (-0.66, 0.26),
    "T7": (-0.88, 0.0), "P7": (-0.71, -0.52), "O1": (-0.27, -0.84), "O2": (0.27, -0.84),
    "P8": (0.71, -0.52), "T8": (0.88, 0.0), "FC6": (0.66, 0.26), "F4": (0.40, 0.50),
    "F8": (0.71, 0.52), "AF4": (0.31, 0.76),
}


def standard_layout() -> ElectrodeLayout:
    names = tuple(_STANDARD_14)
    return ElectrodeLayout(names, np.array([_STANDARD_14[n] for n in names]))


@dataclass(frozen=True)
class EEGSegment:
    samples: np.ndarray  # (C, S) microvolts
    sample_rate: float
    subject_id: str
    layout: ElectrodeLayout | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", x)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ShapeError("samples must be a (channels, samples) matrix")
        if self.sample_rate <= 0 or x.shape[1] < 2 * self.sample_rate:
            raise ShapeError("segment needs at least 2 s of samples")
        if self.layout is not None and self.layout.n_channels != x.shape[0]:
            raise ShapeError("layout size does not match channel count")


@dataclass(frozen=True)
class BandPowerVector:
    band: str
    values: np.ndarray


@dataclass(frozen=True)
class TopomapImage:
    pixels: np.ndarray  # (R, R)
    band: str
    resolution: int

    @property
    def mask(self) -> np.ndarray:
        """True for pixels inside the scalp disk."""
        return disk_mask(self.resolution)


def _check_band(band: str, fs: float, bands: Mapping[str, tuple[float, float]]):
    if band not in bands:
        raise KeyError(f"unknown band {band!r}")
    lo, hi = bands[band]
    if hi >= fs / 2.0:
        raise SpectralRangeError(f"band {band} ({lo}-{hi} Hz) exceeds Nyquist {fs / 2.0} Hz")
    return lo, hi


def welch_psd(seg: EEGSegment, window_seconds: float = 2.0, overlap: float = 0.5):
    nperseg = int(round(window_seconds * seg.sample_rate))
    return signal.welch(
        seg.samples,
        fs=seg.sample_rate,
        window="hann",
        nperseg=nperseg,
        noverlap=int(nperseg * overlap),
        detrend=False,
        scaling="density",
        axis=-1,
    )


def integrate_band(freqs: np.ndarray, psd: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Rectangle-rule integral of ``psd`` over the half-open band ``[lo, hi)``."""
    df = freqs[1] - freqs[0]
    sel = (freqs >= lo) & (freqs < hi)
    return psd[..., sel].sum(axis=-1) * df


def band_power(
    seg: EEGSegment,
    band: str,
    bands: Mapping[str, tuple[float, float]] = BANDS,
    log_power: bool = False,
) -> BandPowerVector:
    lo, hi = _check_band(band, seg.sample_rate, bands)
    freqs, psd = welch_psd(seg)
    values = integrate_band(freqs, psd, lo, hi)
    if log_power:
        values = np.log10(values + 1e-12)
    return BandPowerVector(band, values)


def all_band_powers(seg: EEGSegment, bands: Mapping[str, tuple[float, float]] = BANDS,
                    log_power: bool = False) -> np.ndarray:
    """``(n_bands, C)`` powers sharing a single Welch estimate."""
    for b in bands:
        _check_band(b, seg.sample_rate, bands)
    freqs, psd = welch_psd(seg)
    out = np.stack([integrate_band(freqs, psd, lo, hi) for lo, hi in bands.values()])
    return np.log10(out + 1e-12) if log_power else out


def normalize_subject_band(vectors: Sequence[BandPowerVector]) -> list[BandPowerVector]:
    """Pool one subject's values for one band, z-score, then min-max to [0, 1]."""
    if not vectors:
        raise DegenerateNormalizationError("nothing to normalize")
    bands = {v.band for v in vectors}
    if len(bands) != 1:
        raise ValueError(f"vectors mix bands {sorted(bands)}")
    pooled = np.concatenate([np.asarray(v.values, dtype=np.float64).ravel() for v in vectors])
    if pooled.size < 2:
        raise DegenerateNormalizationError("need at least two pooled values")
    std = pooled.std()
    if not np.isfinite(std) or std == 0.0:
        raise DegenerateNormalizationError("pooled values have zero variance")
    z = (pooled - pooled.mean()) / std
    lo, hi = z.min(), z.max()
    scaled = (z - lo) / (hi - lo)
    out, start = [], 0
    for v in vectors:
        n = np.asarray(v.values).size
        out.append(BandPowerVector(v.band, scaled[start:start + n].reshape(np.shape(v.values))))
        start += n
    return out


def pixel_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates; row 0 is the top (anterior, y = +1)."""
    axis = np.linspace(-1.0, 1.0, resolution)
    xx, yy = np.meshgrid(axis, axis[::-1])
    return xx, yy


def disk_mask(resolution: int) -> np.ndarray:
    xx, yy = pixel_grid(resolution)
    return np.hypot(xx, yy) <= 1.0 + 1e-12


def idw_at(points: np.ndarray, values: np.ndarray, layout: ElectrodeLayout,
           power: float = IDW_POWER, eps: float = IDW_EPS) -> np.ndarray:
    """Evaluate the IDW field at arbitrary ``(P, 2)`` points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (layout.n_channels,):
        raise ShapeError(f"expected {layout.n_channels} channel values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("channel values must be finite")
    pos = layout.positions
    return kernels.idw_interpolate(pts[:, 0], pts[:, 1], pos[:, 0], pos[:, 1], values, power, eps)


def render_topomap(values: BandPowerVector | np.ndarray, layout: ElectrodeLayout,
                   resolution: int = 64, band: str | None = None) -> TopomapImage:
    if isinstance(values, BandPowerVector):
        band = values.band if band is None else band
        values = values.values
    mask = disk_mask(resolution)
    xx, yy = pixel_grid(resolution)
    pts = np.column_stack([xx[mask], yy[mask]])
    pixels = np.full((resolution, resolution), MASK_VALUE)
    pixels[mask] = np.clip(idw_at(pts, values, layout), 0.0, 1.0)
    return TopomapImage(pixels, band or "", resolution)


# -- subject-level pipeline and archive ---------------------------------------

@dataclass
class TopomapSet:
    images: np.ndarray  # (N, B, R, R)
    va: np.ndarray  # (N, 2)
    subject_ids: np.ndarray  # (N,) str
    bands: tuple[str, ...] = field(default=BAND_ORDER)

    def flat_inputs(self) -> np.ndarray:
        """Model inputs: in-disk pixels only, flattened per sample."""
        R = self.images.shape[-1]
        mask = disk_mask(R)
        return self.images[:, :, mask].reshape(len(self.images), -1)


def render_segments(
    segments: Sequence[EEGSegment],
    va: np.ndarray,
    layout: ElectrodeLayout,
    resolution: int = 64,
    bands: Mapping[str, tuple[float, float]] = BANDS,
    log_power: bool = False,
    degenerate_fill: float | None = None,
) -> TopomapSet:
    """Band powers -> per-subject/band normalization -> images.

    ``degenerate_fill`` replaces a zero-variance subject/band with a constant
    instead of raising; the CLI passes 0.5.
    """
    band_names = tuple(bands)
    powers = np.stack([all_band_powers(s, bands, log_power) for s in segments])  # (N, B, C)
    normed = np.empty_like(powers)
    subjects = np.array([s.subject_id for s in segments])
    for sid in dict.fromkeys(subjects.tolist()):
        rows = np.flatnonzero(subjects == sid)
        for b, name in enumerate(band_names):
            vecs = [BandPowerVector(name, powers[i, b]) for i in rows]
            try:
                res = normalize_subject_band(vecs)
            except DegenerateNormalizationError:
                if degenerate_fill is None:
                    raise
                res = [BandPowerVector(name, np.full_like(v.values, degenerate_fill)) for v in vecs]
            for i, v in zip(rows, res):
                normed[i, b] = v.values
    images = np.stack([
        np.stack([render_topomap(normed[i, b], layout, resolution).pixels for b in range(len(band_names))])
        for i in range(len(segments))
    ])
    return TopomapSet(images, np.asarray(va, dtype=np.float64).reshape(-1, 2), subjects, band_names)


def save_topomap_archive(ts: TopomapSet, path) -> str:
    return artifacts.write_container(
        {"images": ts.images, "va": ts.va, "subject_ids": ts.subject_ids.astype(str),
         "bands": np.array(ts.bands)},
        path,
    )


def load_topomap_archive(path) -> TopomapSet:
    arr = artifacts.read_container(path)
    bands = tuple(arr["bands"].tolist()) if "bands" in arr else BAND_ORDER
    return TopomapSet(arr["images"], arr["va"], arr["subject_ids"], bands)


def write_manifest(ts: TopomapSet, path, archive_name: str) -> str:
    rows = []
    for i in range(len(ts.va)):
        for band in ts.bands:
            rows.append([f"seg{i:05d}", ts.subject_ids[i], band, float(ts.va[i, 0]), float(ts.va[i, 1]), archive_name])
    return artifacts.write_csv(path, MANIFEST_HEADER, rows)
