"""Teacher regression, embedding extraction and the distillation training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import artifacts, losses
from .errors import BankIncompatibilityError, ConfigurationError, UndefinedCCCError
from .losses import LossConfig, LossTerm
from .metrics import eight_way
from .nn_core import (DenseModel, EMAState, OptimizerState, adamw_step, clip_grad_norm, cosine_lr,
                      ema_update)
from .protobank import PrototypeBank

log = logging.getLogger(__name__)

VARIANTS = ("B0", "B1", "B2", "B3", "B3-T1")
EPOCH_LOG_HEADER = ["epoch", "loss", "ce", "kd", "proto", "geo", "acc", "macro_f1", "bacc", "lr", "s_geo"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    base_lr: float = 2e-4
    weight_decay: float = 0.05
    clip: float = 1.0
    seed: int = 0
    variant: str = "B3"
    loss: LossConfig = field(default_factory=LossConfig)
    hidden: tuple[int, ...] = (128, 128)
    feature_dim: int = 256
    lr_schedule: str = "epoch"
    class_weighting: bool = True
    student_ema: bool = False
    ema_decay: float = 0.999
    teacher_checkpoint: str | None = None
    bank: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.variant.upper() not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}")
        if self.lr_schedule not in ("epoch", "step"):
            raise ConfigurationError("lr_schedule must be 'epoch' or 'step'")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")

    @property
    def effective_loss(self) -> LossConfig:
        """Loss weights after variant gating."""
        return losses.variant_config(self.loss, self.variant)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochLog:
    epoch: int
    loss: float
    ce: float
    kd: float
    proto: float
    geo: float
    acc: float
    macro_f1: float
    bacc: float
    lr: float
    s_geo: float

    def row(self) -> list:
        return [getattr(self, k) for k in EPOCH_LOG_HEADER]


# -- teacher --------------------------------------------------------------------

@dataclass(frozen=True)
class TeacherConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    clip: float = 1.0
    hidden: tuple[int, ...] = (128, 128)
    feature_dim: int = 256
    ema_decay: float = 0.99
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class TeacherResult:
    model: DenseModel
    ema: EMAState
    logs: list
    train_idx: np.ndarray
    val_idx: np.ndarray

    def ema_model(self) -> DenseModel:
        return self.ema.as_model(self.model)


def ccc(pred, truth) -> float:
    """Concordance correlation coefficient with population moments."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.size != t.size or p.size < 2:
        raise UndefinedCCCError("CCC needs two equal-length series of length >= 2")
    mp, mt = p.mean(), t.mean()
    # exact zeros for constant series; rounding in the mean would leave ~1e-33
    dp = p - mp if np.ptp(p) > 0 else np.zeros_like(p)
    dt = t - mt if np.ptp(t) > 0 else np.zeros_like(t)
    vp, vt = np.mean(dp * dp), np.mean(dt * dt)
    denom = vp + vt + (mp - mt) ** 2
    if denom == 0.0:
        raise UndefinedCCCError("both series are constant and equal")
    return float(2.0 * np.mean(dp * dt) / denom)


def split_indices(n: int, val_fraction: float, seed: int, labels=None):
    """Seeded train/validation split; stratified by ``labels`` when given."""
    rng = np.random.default_rng(seed)
    if labels is None:
        n_val = max(2, int(round(val_fraction * n)))
        if n - n_val < 1:
            raise ConfigurationError(f"cannot form a validation split from {n} samples")
        perm = rng.permutation(n)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])
    labels = np.asarray(labels)
    val = []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        val.extend(idx[: int(round(val_fraction * idx.size))].tolist())
    val = np.sort(np.array(val, dtype=np.int64))
    train = np.setdiff1d(np.arange(n), val)
    if train.size == 0 or val.size == 0:
        raise ConfigurationError(f"cannot form a validation split from {n} samples")
    return train, val


def train_teacher(x: np.ndarray, va: np.ndarray, cfg: TeacherConfig = TeacherConfig(),
                  on_epoch: Callable[[dict], None] | None = None) -> TeacherResult:
    """Regress V/A with squared error; logs validation CCC for both axes."""
    x = np.asarray(x, dtype=np.float64)
    va = np.asarray(va, dtype=np.float64).reshape(-1, 2)
    if len(x) != len(va) or len(x) == 0:
        raise ConfigurationError("need matching, non-empty inputs and V/A labels")
    if np.any(np.abs(va) > 1.0):
        raise ConfigurationError("V/A labels must lie in [-1, 1]")
    train_idx, val_idx = split_indices(len(x), cfg.val_fraction, cfg.seed)
    model = DenseModel(x.shape[1], cfg.hidden, cfg.feature_dim, 2, seed=cfg.seed)
    ema = EMAState.of(model, cfg.ema_decay)
    opt = OptimizerState.for_params(model.params, base_lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    logs = []
    for epoch in range(1, cfg.epochs + 1):
        lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr)
        perm = train_idx[rng.permutation(train_idx.size)]
        total = 0.0
        for start in range(0, perm.size, cfg.batch_size):
            b = perm[start:start + cfg.batch_size]
            cache = model.forward(x[b])
            err = cache.logits - va[b]
            total += float(np.sum(err * err))
            grads = model.backward(cache, d_logits=2.0 * err / len(b))
            grads, _ = clip_grad_norm(grads, cfg.clip)
            adamw_step(model, grads, opt, lr)
            ema_update(ema, model)
        _, pred = model.predict(x[val_idx])
        entry = {"epoch": epoch, "loss": total / max(1, train_idx.size), "lr": lr,
                 "ccc_valence": _safe_ccc(pred[:, 0], va[val_idx, 0]),
                 "ccc_arousal": _safe_ccc(pred[:, 1], va[val_idx, 1])}
        logs.append(entry)
        if on_epoch:
            on_epoch(entry)
    return TeacherResult(model, ema, logs, train_idx, val_idx)


def _safe_ccc(p, t) -> float:
    try:
        return ccc(p, t)
    except UndefinedCCCError:
        return float("nan")


def extract_embeddings(model: DenseModel, x: np.ndarray, va=None):
    """Unit-norm penultimate features, paired with ``va`` if given."""
    feats, _ = model.predict(np.asarray(x, dtype=np.float64))
    if va is None:
        return feats
    return feats, np.asarray(va, dtype=np.float64).reshape(-1, 2)


# -- student --------------------------------------------------------------------

@dataclass
class StudentResult:
    model: DenseModel
    logs: list
    config: TrainConfig
    class_weights: np.ndarray | None
    ema: EMAState | None = None


def _check_inputs(cfg: TrainConfig, lc: LossConfig, bank, teacher, n_classes: int):
    if lc.lambda_kd > 0 and teacher is None:
        raise ConfigurationError(f"variant {cfg.variant} needs a vision teacher for logit KD")
    if lc.lambda_proto > 0:
        if bank is None:
            raise ConfigurationError(f"variant {cfg.variant} needs a prototype bank")
        if bank.D != cfg.feature_dim:
            raise BankIncompatibilityError(f"bank dimension {bank.D} != student feature dim {cfg.feature_dim}")
    if teacher is not None and teacher.num_outputs != n_classes:
        raise ConfigurationError("teacher and student disagree on the number of classes")


def evaluate_model(model: DenseModel, x, y, K: int):
    _, logits = model.predict(x)
    return eight_way(np.argmax(logits, axis=1), y, K)


def train_student(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, bank: PrototypeBank | None = None,
                  vision_teacher: DenseModel | None = None, valid: tuple | None = None,
                  on_epoch: Callable[[EpochLog], None] | None = None) -> StudentResult:
    """Minibatch AdamW over the gated CE + KD + Proto-KD + D-Geo objective."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    lc = cfg.effective_loss
    K = len(lc.class_names)
    _check_inputs(cfg, lc, bank, vision_teacher, K)

    if lc.class_weights is not None:
        cw = np.asarray(lc.class_weights, dtype=np.float64)
    elif cfg.class_weighting:
        cw = losses.mild_class_weights(np.bincount(y, minlength=K))
    else:
        cw = None

    model = DenseModel(x.shape[1], cfg.hidden, cfg.feature_dim, K, seed=cfg.seed)
    opt = OptimizerState.for_params(model.params, base_lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    ema = EMAState.of(model, cfg.ema_decay) if cfg.student_ema else None
    rng = np.random.default_rng(cfg.seed + 1)
    teacher_logits = vision_teacher.predict(x)[1] if (vision_teacher is not None and lc.lambda_kd > 0) else None
    n_batches = -(-len(x) // cfg.batch_size)
    total_steps = max(1, cfg.epochs * n_batches)
    step = 0
    logs = []
    for epoch in range(1, cfg.epochs + 1):
        sums = dict.fromkeys(("loss", "ce", "kd", "proto", "geo"), 0.0)
        perm = rng.permutation(len(x))
        lr = cosine_lr(epoch - 1, cfg.epochs, cfg.base_lr)
        s_geo = losses.geo_schedule(epoch, lc.ramp_start, lc.ramp_end)
        for start in range(0, len(x), cfg.batch_size):
            if cfg.lr_schedule == "step":
                lr = cosine_lr(step, total_steps, cfg.base_lr)
            b = perm[start:start + cfg.batch_size]
            cache = model.forward(x[b])
            tot = batch_objective(cache.feature, cache.logits, y[b], lc, epoch, cw, bank,
                                  None if teacher_logits is None else teacher_logits[b])
            grads = model.backward(cache, tot.d_features, tot.d_logits)
            grads, _ = clip_grad_norm(grads, cfg.clip)
            adamw_step(model, grads, opt, lr)
            if ema is not None:
                ema_update(ema, model)
            step += 1
            sums["loss"] += tot.value
            for k, v in tot.contributions.items():
                sums[k] += v
        if valid is not None:
            rep = evaluate_model(model, valid[0], valid[1], K)
            acc, mf1, bacc = rep.acc, rep.macro_f1, rep.bacc
        else:
            acc = mf1 = bacc = float("nan")
        entry = EpochLog(epoch, *(sums[k] / n_batches for k in ("loss", "ce", "kd", "proto", "geo")),
                         acc, mf1, bacc, lr, s_geo)
        logs.append(entry)
        if on_epoch:
            on_epoch(entry)
    return StudentResult(model, logs, cfg, cw, ema)


def batch_objective(features, logits, labels, lc: LossConfig, epoch: float, class_weights=None,
                    bank: PrototypeBank | None = None, teacher_logits=None) -> losses.TotalLoss:
    """All gated loss terms for one batch, composed into the total."""
    K = logits.shape[1]
    target = losses.label_smooth(labels, lc.alpha_smooth, K)
    v, g = losses.ce_loss(target, logits, class_weights, labels)
    ce = LossTerm(v, d_logits=g)
    kd = proto = geo = None
    if lc.lambda_kd > 0 and teacher_logits is not None:
        v, g = losses.kd_loss(teacher_logits, logits, lc.T_kd, lc.kd_mode)
        kd = LossTerm(v, d_logits=g)
    if lc.lambda_proto > 0 and bank is not None:
        v, g = losses.proto_kd_loss(features, bank.prototypes, bank.prior, lc.tau_proto)
        proto = LossTerm(v, d_features=g)
    if lc.lambda_geo > 0 and losses.geo_schedule(epoch, lc.ramp_start, lc.ramp_end) > 0:
        v, g = losses.dgeo_loss(features, labels, lc)
        geo = LossTerm(v, d_features=g)
    return losses.total_loss(ce, kd, proto, geo, lc, epoch, logits.shape, features.shape)


def train_vision_teacher(x, y, cfg: TrainConfig, width_factor: int = 2, epoch_factor: int = 2,
                         lr_factor: float = 5.0) -> DenseModel:
    """The KD teacher: a wider, longer-trained CE-only dense classifier."""
    tcfg = replace(cfg, variant="B0", hidden=tuple(h * width_factor for h in cfg.hidden),
                   epochs=cfg.epochs * epoch_factor, base_lr=cfg.base_lr * lr_factor,
                   seed=cfg.seed + 7919, student_ema=False)
    return train_student(x, y, tcfg).model


# -- records ----------------------------------------------------------------------

def fingerprint(cfg: TrainConfig, bank_digest: str | None = None, dataset_digest: str | None = None,
                teacher_digest: str | None = None, class_weights=None) -> dict:
    """Every configuration switch of a run, as a JSON-ready dict."""
    return {
        "train": cfg.to_dict(),
        "variant": cfg.variant.upper(),
        "seed": cfg.seed,
        "effective_loss": cfg.effective_loss.to_dict(),
        "class_weights": None if class_weights is None else [float(w) for w in class_weights],
        "bank_sha256": bank_digest,
        "dataset_sha256": dataset_digest,
        "teacher_sha256": teacher_digest,
    }


def fingerprint_json(*args, **kwargs) -> str:
    return artifacts.canonical_json(fingerprint(*args, **kwargs))


def write_epoch_logs(path, logs: list[EpochLog]) -> str:
    return artifacts.write_csv(path, EPOCH_LOG_HEADER, (e.row() for e in logs))


def read_epoch_logs(path) -> list[EpochLog]:
    rows = artifacts.read_csv(path, EPOCH_LOG_HEADER)
    return [EpochLog(int(r["epoch"]), *(float(r[k]) for k in EPOCH_LOG_HEADER[1:])) for r in rows]
