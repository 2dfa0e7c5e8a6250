"""Dense-network numerics on plain numpy.

A :class:`DenseModel` is ``input -> [Linear+ReLU]* -> Linear (projection) ->
L2Norm -> Linear (head)``.  The unit-norm projection output is the *feature*
used for prototypes; the head output is the *logits* (class scores for a
student, V/A for a teacher).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import artifacts
from .errors import FormatError, NumericError, ScheduleError, ShapeError

NORM_FLOOR = 1e-12


class Linear:
    """Affine layer ``y = x @ W + b`` with ``W`` of shape ``(in, out)``."""

    def __init__(self, W: np.ndarray, b: np.ndarray):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"bad linear shapes W{self.W.shape} b{self.b.shape}")

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "Linear":
        bound = 1.0 / math.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return cls(W, b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W + self.b

    def backward(self, x: np.ndarray, dy: np.ndarray):
        """Return ``(dW, db, dx)`` for upstream gradient ``dy``."""
        return x.T @ dy, dy.sum(axis=0), dy @ self.W.T


def l2_normalize(v: np.ndarray):
    """Row-wise unit normalization.

    Rows with norm below ``NORM_FLOOR`` map to the first basis vector and are
    flagged in the returned mask; they pass no gradient.
    """
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    degenerate = norms[..., 0] <= NORM_FLOOR
    out = v / np.where(degenerate[..., None], 1.0, norms)
    if degenerate.any():
        out[degenerate] = 0.0
        out[degenerate, 0] = 1.0
    return out, norms, degenerate


def l2_normalize_backward(f: np.ndarray, norms: np.ndarray, degenerate: np.ndarray, g: np.ndarray):
    """Apply ``(I - f f^T) / ||v||`` row-wise."""
    proj = g - f * np.sum(f * g, axis=-1, keepdims=True)
    dv = proj / np.where(degenerate[..., None], 1.0, norms)
    dv[degenerate] = 0.0
    return dv


@dataclass
class ForwardCache:
    x: np.ndarray
    hidden_in: list  # input to each hidden layer
    hidden_pre: list  # pre-activations
    proj_in: np.ndarray
    pre_norm: np.ndarray
    norms: np.ndarray
    degenerate: np.ndarray
    feature: np.ndarray
    logits: np.ndarray


class DenseModel:
    def __init__(self, input_dim: int, hidden: Sequence[int] = (128, 128), feature_dim: int = 256,
                 num_outputs: int = 8, seed: int = 0, layers: list[Linear] | None = None):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.feature_dim = int(feature_dim)
        self.num_outputs = int(num_outputs)
        self.seed = seed
        sizes = [self.input_dim, *self.hidden, self.feature_dim, self.num_outputs]
        if layers is None:
            rng = np.random.default_rng(seed)
            layers = [Linear.init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        if len(layers) != len(sizes) - 1 or any(
            l.W.shape != (a, b) for l, a, b in zip(layers, sizes[:-1], sizes[1:])
        ):
            raise ShapeError("layers do not match the declared architecture")
        self.layers = layers

    # -- parameters ---------------------------------------------------------

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"layer{i}_w", f"layer{i}_b"]
        return names

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def architecture(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden),
                "feature_dim": self.feature_dim, "num_outputs": self.num_outputs}

    def copy(self) -> "DenseModel":
        return DenseModel(self.input_dim, self.hidden, self.feature_dim, self.num_outputs, self.seed,
                          layers=[Linear(l.W.copy(), l.b.copy()) for l in self.layers])

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        for p, new in zip(self.params, params, strict=True):
            if p.shape != np.shape(new):
                raise ShapeError(f"parameter shape {np.shape(new)} != {p.shape}")
            p[...] = new

    # -- passes -------------------------------------------------------------

    def forward(self, x: np.ndarray) -> ForwardCache:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected input width {self.input_dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite input")
        h = x
        hidden_in, hidden_pre = [], []
        for layer in self.layers[:-2]:
            hidden_in.append(h)
            z = layer.forward(h)
            hidden_pre.append(z)
            h = np.maximum(z, 0.0)
        v = self.layers[-2].forward(h)
        f, norms, degenerate = l2_normalize(v)
        logits = self.layers[-1].forward(f)
        return ForwardCache(x, hidden_in, hidden_pre, h, v, norms, degenerate, f, logits)

    def predict(self, x: np.ndarray, batch_size: int = 1024):
        """Return ``(features, logits)`` without keeping caches."""
        feats, logits = [], []
        for i in range(0, len(x), batch_size):
            c = self.forward(x[i:i + batch_size])
            feats.append(c.feature)
            logits.append(c.logits)
        return np.concatenate(feats), np.concatenate(logits)

    def backward(self, cache: ForwardCache, d_feature: np.ndarray | None = None,
                 d_logits: np.ndarray | None = None) -> list[np.ndarray]:
        B = cache.x.shape[0]
        d_logits = np.zeros((B, self.num_outputs)) if d_logits is None else np.asarray(d_logits, dtype=np.float64)
        d_feature = np.zeros((B, self.feature_dim)) if d_feature is None else np.asarray(d_feature, dtype=np.float64)
        if d_logits.shape != cache.logits.shape or d_feature.shape != cache.feature.shape:
            raise ShapeError("upstream gradient shapes do not match the forward pass")
        grads: list[np.ndarray] = []
        head, proj = self.layers[-1], self.layers[-2]
        dW, db, df = head.backward(cache.feature, d_logits)
        grads[:0] = [dW, db]
        dv = l2_normalize_backward(cache.feature, cache.norms, cache.degenerate, df + d_feature)
        dW, db, dh = proj.backward(cache.proj_in, dv)
        grads[:0] = [dW, db]
        for layer, h_in, z in zip(reversed(self.layers[:-2]), reversed(cache.hidden_in), reversed(cache.hidden_pre)):
            dz = dh * (z > 0.0)
            dW, db, dh = layer.backward(h_in, dz)
            grads[:0] = [dW, db]
        return grads


# -- optimization -------------------------------------------------------------

def global_norm(grads: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float = 1.0):
    """Scale all buffers so their joint L2 norm is at most ``max_norm``.

    Returns ``(clipped, original_norm)``.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads], norm
    return [g.copy() for g in grads], norm


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    base_lr: float = 2e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kw) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adamw_step(params: DenseModel | Sequence[np.ndarray], grads: Sequence[np.ndarray],
               state: OptimizerState, lr: float) -> OptimizerState:
    """One AdamW update, in place.

    Weight decay is decoupled and applied first: ``p <- p - lr * wd * p``.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if isinstance(params, DenseModel):
        params = params.params
    b1, b2 = state.betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v, strict=True):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr == 0.0:
            continue
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def cosine_lr(step: int, total_steps: int, base_lr: float = 2e-4) -> float:
    if total_steps <= 0:
        raise ScheduleError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ScheduleError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class EMAState:
    shadow: list
    decay: float = 0.999

    @classmethod
    def of(cls, model: DenseModel, decay: float = 0.999) -> "EMAState":
        if not 0.0 <= decay <= 1.0:
            raise ValueError("EMA decay must lie in [0, 1]")
        return cls([p.copy() for p in model.params], decay)

    def as_model(self, like: DenseModel) -> DenseModel:
        m = like.copy()
        m.load_params(self.shadow)
        return m


def ema_update(e: EMAState, model: DenseModel | Sequence[np.ndarray]) -> EMAState:
    params = model.params if isinstance(model, DenseModel) else model
    for s, p in zip(e.shadow, params, strict=True):
        if s.shape != p.shape:
            raise ShapeError("EMA shadow shape mismatch")
        s *= e.decay
        s += (1.0 - e.decay) * p
    return e


# -- checkpoints --------------------------------------------------------------

def checkpoint_sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(model: DenseModel, path, hyperparameters: dict | None = None) -> str:
    """Write ``layer{i}_w``/``layer{i}_b`` arrays plus a JSON sidecar; return the file digest."""
    digest = artifacts.write_container(dict(zip(model.param_names(), model.params)), path)
    meta = {"architecture": model.architecture(), "seed": model.seed,
            "hyperparameters": hyperparameters or {}, "sha256": digest}
    artifacts.write_json(checkpoint_sidecar(path), meta)
    return digest


def load_checkpoint(path, verify: bool = True) -> tuple[DenseModel, dict]:
    from .errors import IntegrityError

    side = checkpoint_sidecar(path)
    if not side.is_file():
        raise FormatError(f"missing checkpoint sidecar {side}")
    meta = artifacts.read_json(side)
    if verify and artifacts.sha256_file(path) != meta.get("sha256"):
        raise IntegrityError(f"{path}: digest does not match sidecar", str(path))
    arrays = artifacts.read_container(path)
    arch = meta["architecture"]
    n_layers = len(arch["hidden"]) + 2
    try:
        layers = [Linear(arrays[f"layer{i}_w"], arrays[f"layer{i}_b"]) for i in range(n_layers)]
    except KeyError as exc:
        raise FormatError(f"{path}: missing array {exc}") from exc
    model = DenseModel(arch["input_dim"], arch["hidden"], arch["feature_dim"], arch["num_outputs"],
                       meta.get("seed", 0), layers=layers)
    return model, meta
