"""Central finite differences and seeded instances for gradient tests.

Relative error of a gradient tensor is ``max|a - n| / max(max|a|, max|n|)``
(zero when both vanish).  Instances keep every ReLU pre-activation and every
hinge at least ``margin`` away from its kink, so a 1e-3 step never crosses
one.
"""
from __future__ import annotations

import numpy as np

from protodistill.losses import LossConfig
from protodistill.nn_core import DenseModel

STEP = 1e-3
TOL = 1e-4


def numeric_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + step
        hi = f()
        x[i] = old - step
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2.0 * step)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def kink_free_batch(model: DenseModel, rng: np.random.Generator, B: int, margin: float = 0.02,
                    tries: int = 10_000) -> np.ndarray:
    """Rejection-sample inputs whose hidden pre-activations all exceed ``margin`` in magnitude.

    Parameter perturbations of 1e-3 move a pre-activation by at most about
    ``1e-3 * (1 + max|x|)``, far below the margin for the small models used here.
    """
    rows = []
    for _ in range(tries):
        x = rng.normal(size=(1, model.input_dim))
        cache = model.forward(x)
        if all(np.min(np.abs(z)) > margin for z in cache.hidden_pre):
            rows.append(x[0])
            if len(rows) == B:
                return np.array(rows)
    raise RuntimeError("could not find kink-free inputs")


def hinges_clear(f: np.ndarray, y: np.ndarray, cfg: LossConfig, margin: float = 0.02) -> bool:
    """True when every D-Geo hinge argument and class-mean distance is at least ``margin`` from zero."""
    for c in cfg.high_valence_ids:
        idx = np.flatnonzero(y == c)
        if len(idx) >= 2:
            dev = f[idx] - f[idx].mean(axis=0)
            if abs(np.mean(np.sum(dev * dev, axis=1)) - cfg.sigma2_max) <= margin:
                return False
    present = np.unique(y)
    means = [f[y == c].mean(axis=0) for c in present]
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            d = np.linalg.norm(means[i] - means[j])
            if abs(d - cfg.margin) <= margin or d <= margin:
                return False
    return True


def geo_config(K: int = 4) -> LossConfig:
    names = ("neutral", "happiness", "surprise", "sadness", "anger", "disgust", "fear", "contempt")[:K]
    return LossConfig(sigma2_max=0.3, margin=1.2, class_names=names)


def geo_instance(rng: np.random.Generator, B: int = 12, D: int = 6, K: int = 4, margin: float = 0.02):
    """Unit features, labels and a LossConfig with both D-Geo hinges active and away from kinks."""
    cfg = geo_config(K)
    for _ in range(10_000):
        f = rng.normal(size=(B, D))
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        y = np.concatenate([np.arange(K), rng.integers(0, K, size=B - K)])
        rng.shuffle(y)
        if hinges_clear(f, y, cfg, margin):
            return f, y, cfg
    raise RuntimeError("could not find a kink-free D-Geo instance")
