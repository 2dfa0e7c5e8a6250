"""Distillation losses with analytic gradients.

Every per-sample term is summed over the batch.  Each function returns the
loss value and its gradient with respect to the student's logits or features.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import BankIncompatibilityError, ConfigurationError, LossUndefinedError

CLASS_NAMES = ("neutral", "happiness", "surprise", "sadness", "anger", "disgust", "fear", "contempt")


@dataclass(frozen=True)
class LossConfig:
    alpha_smooth: float = 0.055
    class_weights: tuple[float, ...] | None = None
    T_kd: float = 5.0
    kd_mode: str = "kl"
    tau_proto: float = 0.90
    lambda_kd: float = 0.5
    lambda_proto: float = 0.12
    lambda_geo: float = 0.05
    sigma2_max: float = 0.5
    margin: float = 0.5
    alpha_var: float = 1.0
    alpha_mar: float = 1.0
    ramp_start: int = 20
    ramp_end: int = 60
    high_valence: tuple[str, ...] = ("happiness", "surprise")
    class_names: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self):
        if self.T_kd <= 0 or self.tau_proto <= 0:
            raise ConfigurationError("temperatures must be positive")
        if min(self.lambda_kd, self.lambda_proto, self.lambda_geo) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if not self.ramp_start < self.ramp_end:
            raise ConfigurationError("ramp_start must precede ramp_end")
        if not set(self.high_valence) <= set(self.class_names):
            raise ConfigurationError("high-valence classes must be known class names")
        if not 0.0 <= self.alpha_smooth < 1.0:
            raise ConfigurationError("label smoothing must lie in [0, 1)")
        if self.kd_mode not in ("kl", "mse"):
            raise ConfigurationError(f"unknown kd_mode {self.kd_mode!r}")
        if self.class_weights is not None and len(self.class_weights) != len(self.class_names):
            raise ConfigurationError("one class weight per class is required")

    @property
    def high_valence_ids(self) -> tuple[int, ...]:
        return tuple(self.class_names.index(c) for c in self.high_valence)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


# -- helpers -----------------------------------------------------------------

def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def _xlogx_ratio(p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """``sum p (log p - log q)`` with ``0 log 0 = 0``, per row."""
    safe = np.where(p > 0, p, 1.0)
    return np.sum(np.where(p > 0, p * (np.log(safe) - log_q), 0.0), axis=-1)


def mild_class_weights(counts: Sequence[int]) -> np.ndarray:
    """Inverse-sqrt-frequency weights normalized to mean 1."""
    c = np.maximum(np.asarray(counts, dtype=np.float64), 1.0)
    w = c ** -0.5
    return w / w.mean()


# -- terms --------------------------------------------------------------------

def label_smooth(y, alpha: float = 0.055, K: int = 8) -> np.ndarray:
    """Mix a target with the uniform distribution: ``(1-alpha) y + alpha/K``.

    ``y`` may be integer class ids (shape ``(B,)`` or scalar) or
    distributions (shape ``(..., K)``).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    y = np.asarray(y)
    if y.dtype.kind in "iu":
        dist = np.eye(K)[y]
    else:
        dist = y.astype(np.float64)
        K = dist.shape[-1]
    return (1.0 - alpha) * dist + alpha / K


def ce_loss(target: np.ndarray, logits: np.ndarray, class_weights=None, labels=None):
    """Weighted cross-entropy against soft targets.

    The weight for each sample is the class weight of its hard label
    (``labels``, or the target's argmax).  Returns ``(value, dL/dlogits)``.
    """
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if class_weights is None:
        w = np.ones(len(logits))
    else:
        hard = np.argmax(target, axis=-1) if labels is None else np.asarray(labels)
        w = np.asarray(class_weights, dtype=np.float64)[hard]
    ls = log_softmax(logits)
    value = float(np.sum(-w * np.sum(target * ls, axis=-1)))
    grad = w[:, None] * (np.exp(ls) - target)
    return value, grad


def kd_loss(teacher_logits: np.ndarray, student_logits: np.ndarray, T: float = 5.0, mode: str = "kl"):
    """``KL(softmax(zT/T) || softmax(zS/T))`` summed over the batch.

    No ``T**2`` rescaling is applied.  ``mode="mse"`` instead uses the mean
    squared error between tempered logits.  The teacher is a constant.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    zt = np.atleast_2d(np.asarray(teacher_logits, dtype=np.float64)) / T
    zs = np.atleast_2d(np.asarray(student_logits, dtype=np.float64)) / T
    if zt.shape != zs.shape:
        raise ValueError("teacher and student logits differ in shape")
    if mode == "mse":
        diff = zs - zt
        K = zs.shape[-1]
        return float(np.sum(diff * diff) / K), 2.0 * diff / (K * T)
    p = softmax(zt)
    ls = log_softmax(zs)
    value = float(np.sum(_xlogx_ratio(p, ls)))
    return value, (np.exp(ls) - p) / T


def _unit_rows(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    return a / n, n


def proto_kd_loss(features: np.ndarray, prototypes, prior: np.ndarray | None = None, tau: float = 0.90):
    """``KL(prior || softmax(cos(f, P) / tau))`` summed over the batch.

    ``prototypes`` may be a ``(K, D)`` array (then ``prior`` is required) or a
    :class:`~protodistill.protobank.PrototypeBank`.  Cosines use the full
    feature norm, so the gradient is tangent to the sphere at unit features.
    Returns ``(value, dL/dfeatures)``.
    """
    if prior is None:
        prior = prototypes.prior
        prototypes = prototypes.prototypes
    P = np.asarray(prototypes, dtype=np.float64)
    q = np.asarray(prior, dtype=np.float64)
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if P.ndim != 2 or f.shape[-1] != P.shape[1]:
        raise BankIncompatibilityError(f"feature dim {f.shape[-1]} does not match prototype dim {P.shape[-1]}")
    if q.shape != (P.shape[0],):
        raise BankIncompatibilityError("prior length must equal the number of prototypes")
    if np.any(np.linalg.norm(P, axis=-1) <= 0):
        raise BankIncompatibilityError("prototype with zero norm")
    Ph, _ = _unit_rows(P)
    fh, fn = _unit_rows(f)
    s = fh @ Ph.T  # (B, K) cosines
    ls = log_softmax(s / tau)
    value = float(np.sum(_xlogx_ratio(q[None, :], ls)))
    g_s = (np.exp(ls) - q[None, :]) / tau
    # d cos_k / d f = (p̂_k - cos_k f̂) / ||f||
    g_f = (g_s @ Ph - np.sum(g_s * s, axis=-1, keepdims=True) * fh) / fn
    return value, g_f


def geo_schedule(epoch: float, ramp_start: int = 20, ramp_end: int = 60) -> float:
    """Cosine ramp from 0 at ``ramp_start`` to 1 at ``ramp_end``."""
    if not ramp_start < ramp_end:
        raise ConfigurationError("ramp_start must precede ramp_end")
    if epoch <= ramp_start:
        return 0.0
    if epoch >= ramp_end:
        return 1.0
    return 0.5 * (1.0 - math.cos(math.pi * (epoch - ramp_start) / (ramp_end - ramp_start)))


@dataclass
class GeoParts:
    var: float
    margin: float


def dgeo_loss(features: np.ndarray, labels: np.ndarray, cfg: LossConfig = LossConfig(), return_parts: bool = False):
    """Variance cap on high-valence classes plus ordered-pair mean margins.

    ``sigma^2_c`` is the mean squared distance of class-``c`` features to the
    class batch mean; classes with fewer than two samples skip the variance
    term.  The margin sum runs over ordered pairs ``c != c'``, so each
    unordered pair counts twice.  Returns ``(alpha_var*L_var +
    alpha_mar*L_margin, dL/dfeatures)``; the epoch ramp is applied by
    :func:`total_loss`.
    """
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels).astype(np.int64)
    if f.shape[0] == 0:
        raise LossUndefinedError("D-Geo is undefined on an empty batch")
    grad = np.zeros_like(f)
    classes = np.unique(labels)
    members = {c: np.flatnonzero(labels == c) for c in classes}
    means = {c: f[idx].mean(axis=0) for c, idx in members.items()}

    l_var = 0.0
    for c in cfg.high_valence_ids:
        idx = members.get(c)
        if idx is None or len(idx) < 2:
            continue
        dev = f[idx] - means[c]
        var = float(np.mean(np.sum(dev * dev, axis=1)))
        if var > cfg.sigma2_max:
            l_var += var - cfg.sigma2_max
            grad[idx] += cfg.alpha_var * 2.0 * dev / len(idx)

    l_mar = 0.0
    for i, c in enumerate(classes):
        for c2 in classes[i + 1:]:
            diff = means[c] - means[c2]
            dist = float(np.linalg.norm(diff))
            if dist < cfg.margin:
                l_mar += 2.0 * (cfg.margin - dist)
                if dist > 0.0:
                    # both orderings contribute -d||mu_c - mu_c'||
                    g = -2.0 * cfg.alpha_mar * diff / dist
                    grad[members[c]] += g / len(members[c])
                    grad[members[c2]] -= g / len(members[c2])
    value = cfg.alpha_var * l_var + cfg.alpha_mar * l_mar
    if return_parts:
        return value, grad, GeoParts(l_var, l_mar)
    return value, grad


# -- composition --------------------------------------------------------------

@dataclass
class LossTerm:
    value: float = 0.0
    d_logits: np.ndarray | None = None
    d_features: np.ndarray | None = None


@dataclass
class TotalLoss:
    value: float
    d_logits: np.ndarray
    d_features: np.ndarray
    contributions: dict = field(default_factory=dict)
    s_geo: float = 0.0


def total_loss(ce: LossTerm, kd: LossTerm | None, proto: LossTerm | None, geo: LossTerm | None,
               cfg: LossConfig, epoch: float, logits_shape=None, features_shape=None) -> TotalLoss:
    """``L = ce + l_kd*kd + l_proto*proto + l_geo*s_geo(epoch)*geo``.

    Missing terms count as zero.  ``contributions`` holds each weighted term.
    """
    s_geo = geo_schedule(epoch, cfg.ramp_start, cfg.ramp_end)
    weights = {"ce": 1.0, "kd": cfg.lambda_kd, "proto": cfg.lambda_proto, "geo": cfg.lambda_geo * s_geo}
    terms = {"ce": ce, "kd": kd, "proto": proto, "geo": geo}
    d_logits = np.zeros(logits_shape if logits_shape is not None else ce.d_logits.shape)
    d_features = None
    contributions = {}
    value = 0.0
    for name, term in terms.items():
        w = weights[name]
        if term is None or w == 0.0:
            contributions[name] = 0.0
            continue
        contributions[name] = w * term.value
        value += w * term.value
        if term.d_logits is not None:
            d_logits = d_logits + w * term.d_logits
        if term.d_features is not None:
            d_features = w * term.d_features if d_features is None else d_features + w * term.d_features
    if d_features is None:
        shape = features_shape if features_shape is not None else (d_logits.shape[0], 0)
        d_features = np.zeros(shape)
    return TotalLoss(value, d_logits, d_features, contributions, s_geo)


def variant_config(cfg: LossConfig, variant: str) -> LossConfig:
    """Gate the loss weights for an ablation variant (B0..B3, B3-T1)."""
    v = variant.upper()
    if v == "B0":
        return replace(cfg, lambda_kd=0.0, lambda_proto=0.0, lambda_geo=0.0)
    if v == "B1":
        return replace(cfg, lambda_proto=0.0, lambda_geo=0.0)
    if v == "B2":
        return replace(cfg, lambda_geo=0.0)
    if v == "B3":
        return cfg
    if v == "B3-T1":
        return replace(cfg, T_kd=1.0)
    raise ConfigurationError(f"unknown variant {variant!r}")
