"""Seeded synthetic stand-ins for the face and EEG datasets.

Face-like samples: each class has a circumplex V/A anchor.  A sample jitters
its anchor in V/A, adds a nuisance "style" vector, and is pushed through a
fixed random two-layer embedding into ``input_dim`` features.  A shifted
domain rotates all anchors by ``shift_angle`` and reweights class prevalence.

EEG-like segments: sinusoids in each band with amplitudes driven by V/A
(frontal alpha asymmetry tracks valence; beta/gamma rise and theta falls
with arousal), subject gain, and white sensor noise.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SpecError
from .losses import CLASS_NAMES
from .topomap import BANDS, EEGSegment, ElectrodeLayout, standard_layout

CIRCUMPLEX_ANCHORS: dict[str, tuple[float, float]] = {
    "neutral": (0.0, 0.0),
    "happiness": (0.8, 0.35),
    "surprise": (0.35, 0.8),
    "sadness": (-0.7, -0.45),
    "anger": (-0.55, 0.7),
    "disgust": (-0.75, 0.15),
    "fear": (-0.25, 0.85),
    "contempt": (-0.35, -0.1),
}

# FERPlus-like imbalance: neutral/happiness common, contempt/disgust rare
DEFAULT_PREVALENCE = (0.30, 0.25, 0.12, 0.11, 0.08, 0.03, 0.06, 0.05)


def derive_seed(root_seed: int, label: str) -> int:
    """Child seed for a named stage: first 8 bytes of SHA-256("<root>:<label>")."""
    return int.from_bytes(hashlib.sha256(f"{root_seed}:{label}".encode()).digest()[:8], "little")


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    n_classes: int = 8
    input_dim: int = 32
    style_dim: int = 6
    noise: float = 0.35
    style_scale: float = 1.0
    obs_noise: float = 0.05
    prevalence: tuple[float, ...] = DEFAULT_PREVALENCE
    shift_angle: float = 0.0
    prevalence_skew: float = 0.0
    seed: int = 0
    class_names: tuple[str, ...] = CLASS_NAMES
    anchors: tuple[tuple[float, float], ...] = field(
        default_factory=lambda: tuple(CIRCUMPLEX_ANCHORS[c] for c in CLASS_NAMES))

    def __post_init__(self):
        if self.n_classes != len(self.class_names) or len(self.anchors) != self.n_classes:
            raise SpecError("need one name and anchor per class")
        if len(self.prevalence) != self.n_classes or min(self.prevalence) <= 0:
            raise SpecError("class prevalence must be positive for every class")
        if any(abs(a) > 1 for pt in self.anchors for a in pt):
            raise SpecError("anchors must lie inside [-1, 1]^2")
        if self.n_samples < 1 or self.noise < 0:
            raise SpecError("n_samples must be positive and noise non-negative")
        if not 0.0 <= self.prevalence_skew <= 1.0:
            raise SpecError("prevalence_skew must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prevalence"] = list(self.prevalence)
        d["class_names"] = list(self.class_names)
        d["anchors"] = [list(a) for a in self.anchors]
        return d


@dataclass
class FaceSet:
    x: np.ndarray
    y: np.ndarray
    va: np.ndarray


class Embedder:
    """Fixed random map from (V/A, style) to observed features."""

    def __init__(self, spec: SyntheticSpec, width: int = 64):
        rng = np.random.default_rng(derive_seed(spec.seed, "embedder"))
        d_lat = 2 + spec.style_dim
        self.W1 = rng.normal(size=(d_lat, width)) / np.sqrt(d_lat) * 2.0
        self.b1 = rng.normal(size=width) * 0.3
        self.W2 = rng.normal(size=(width, spec.input_dim)) / np.sqrt(width)

    def __call__(self, va: np.ndarray, style: np.ndarray) -> np.ndarray:
        h = np.tanh(np.concatenate([va, style], axis=1) @ self.W1 + self.b1)
        return h @ self.W2


def _rotate(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, s], [-s, c]])


def anchor_array(spec: SyntheticSpec, shifted: bool = False) -> np.ndarray:
    a = np.asarray(spec.anchors, dtype=np.float64)
    return np.clip(_rotate(a, spec.shift_angle), -1.0, 1.0) if shifted else a


def class_prevalence(spec: SyntheticSpec, shifted: bool = False) -> np.ndarray:
    p = np.asarray(spec.prevalence, dtype=np.float64)
    if shifted:
        p = p ** (1.0 - spec.prevalence_skew)
    return p / p.sum()


def sample_faces(spec: SyntheticSpec, n: int | None = None, split: str = "train", shifted: bool = False) -> FaceSet:
    n = spec.n_samples if n is None else n
    rng = np.random.default_rng(derive_seed(spec.seed, f"faces:{split}:{int(shifted)}"))
    counts = rng.multinomial(n, class_prevalence(spec, shifted))
    y = np.repeat(np.arange(spec.n_classes), counts)
    y = y[rng.permutation(n)]
    anchors = anchor_array(spec, shifted)
    va = np.clip(anchors[y] + spec.noise * rng.normal(size=(n, 2)), -1.0, 1.0)
    style = spec.noise * spec.style_scale * rng.normal(size=(n, spec.style_dim))
    x = Embedder(spec)(va, style) + spec.noise * spec.obs_noise * rng.normal(size=(n, spec.input_dim))
    return FaceSet(x, y.astype(np.int64), va)


def make_face_splits(spec: SyntheticSpec, fractions=(0.7, 0.15, 0.15)) -> dict[str, FaceSet]:
    """train/valid/test from the source domain plus ``shifted`` test data."""
    sizes = [int(round(f * spec.n_samples)) for f in fractions]
    out = {name: sample_faces(spec, k, name) for name, k in zip(("train", "valid", "test"), sizes)}
    out["shifted"] = sample_faces(spec, sizes[2], "shifted", shifted=True)
    return out


# -- EEG ------------------------------------------------------------------------

@dataclass(frozen=True)
class EEGSpec:
    n_subjects: int = 8
    segments_per_subject: int = 40
    sample_rate: float = 128.0
    seconds: float = 4.0
    noise: float = 0.5
    seed: int = 0


def sample_eeg(spec: EEGSpec, layout: ElectrodeLayout | None = None):
    """Return ``(segments, va)`` with V/A uniform in [-1, 1]^2."""
    layout = layout or standard_layout()
    rng = np.random.default_rng(derive_seed(spec.seed, "eeg"))
    n_samp = int(spec.seconds * spec.sample_rate)
    t = np.arange(n_samp) / spec.sample_rate
    x, y = layout.positions[:, 0], layout.positions[:, 1]
    segments, va_all = [], []
    for s in range(spec.n_subjects):
        gain = rng.uniform(0.7, 1.3)
        for _ in range(spec.segments_per_subject):
            val, aro = rng.uniform(-1, 1, size=2)
            amps = {
                "delta": np.full_like(x, 1.0),
                "theta": (1.0 - 0.5 * aro) * (1.0 + 0.3 * y),
                # more alpha over the left hemisphere with positive valence
                "alpha": (1.5 - 0.4 * aro) * (1.0 - 0.5 * val * np.sign(x) * np.abs(x)),
                "beta": (0.6 + 0.4 * aro) * (1.0 + 0.3 * val * x),
                "gamma": (0.3 + 0.25 * aro) * (1.0 + 0.4 * np.maximum(y, 0)),
            }
            sig = spec.noise * rng.normal(size=(len(x), n_samp))
            for band, (lo, hi) in BANDS.items():
                f = rng.uniform(lo + 0.5, hi - 0.5, size=2)
                ph = rng.uniform(0, 2 * np.pi, size=(2, len(x)))
                comp = np.sin(2 * np.pi * f[0] * t[None, :] + ph[0][:, None])
                comp += np.sin(2 * np.pi * f[1] * t[None, :] + ph[1][:, None])
                sig += gain * amps[band][:, None] * comp
            segments.append(EEGSegment(sig, spec.sample_rate, f"S{s:02d}", layout))
            va_all.append((val, aro))
    return segments, np.array(va_all)
