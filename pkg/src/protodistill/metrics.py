"""Classification metrics, the present-only protocol and stratified bootstrap CIs."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import LabelError, MetricsUndefinedError, ProtocolError

log = logging.getLogger(__name__)

EIGHT_WAY = "eight_way"
PRESENT_ONLY = "present_only"


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (K, K), rows = true, cols = predicted
    class_names: tuple[str, ...] = ()

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    acc: float
    macro_f1: float
    bacc: float
    precision: list
    recall: list
    f1: list
    classes: list  # evaluated class ids
    protocol: str
    macro_auroc: float | None = None
    ci: dict = field(default_factory=dict)

    def headline(self) -> dict:
        return {"acc": self.acc, "macro_f1": self.macro_f1, "bacc": self.bacc}


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    resamples: int
    seed: int

    def to_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper,
                "resamples": self.resamples, "seed": self.seed}


def _check_ids(ids: np.ndarray, K: int, what: str) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.dtype.kind not in "iu" or ids.min() < 0 or ids.max() >= K):
        raise LabelError(f"{what} must be integer ids in [0, {K})")
    return ids.astype(np.int64).reshape(-1)


def confusion(preds, labels, K: int, class_names: Sequence[str] = ()) -> ConfusionMatrix:
    preds = _check_ids(preds, K, "predictions")
    labels = _check_ids(labels, K, "labels")
    if preds.shape != labels.shape:
        raise LabelError("predictions and labels differ in length")
    return ConfusionMatrix(kernels.confusion(labels, preds, K), tuple(class_names))


def _per_class(counts: np.ndarray):
    tp = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        recall = np.where(support > 0, tp / support, 0.0)
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return precision, recall, f1


def _scores(counts: np.ndarray, classes: np.ndarray) -> tuple[float, float, float]:
    total = counts.sum()
    _, recall, f1 = _per_class(counts)
    return float(np.trace(counts) / total), float(f1[classes].mean()), float(recall[classes].mean())


def metrics_from_confusion(cm: ConfusionMatrix | np.ndarray, classes: Sequence[int] | None = None,
                           protocol: str = EIGHT_WAY) -> MetricsReport:
    """Acc, Macro-F1 and bACC averaged over ``classes`` (default: all).

    Classes with no true samples contribute recall and F1 of zero.
    """
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=np.int64)
    if counts.sum() == 0:
        raise MetricsUndefinedError("confusion matrix is empty")
    cls = np.arange(counts.shape[0]) if classes is None else np.asarray(sorted(classes), dtype=np.int64)
    precision, recall, f1 = _per_class(counts)
    acc, macro_f1, bacc = _scores(counts, cls)
    return MetricsReport(acc, macro_f1, bacc, precision[cls].tolist(), recall[cls].tolist(),
                         f1[cls].tolist(), cls.tolist(), protocol)


def present_only(preds, labels, full_classes: Sequence[int] | int, target_classes: Sequence[int]) -> MetricsReport:
    """Metrics averaged only over the classes annotated in the target set.

    Predictions into absent classes are kept and count as errors for the
    true class.  Accuracy is unaffected by the restriction.
    """
    full = list(range(full_classes)) if isinstance(full_classes, int) else list(full_classes)
    target = sorted(set(target_classes))
    if not target:
        raise ProtocolError("target class set is empty")
    if not set(target) <= set(full):
        raise ProtocolError("target classes must be a subset of the full class set")
    labels = np.asarray(labels)
    if labels.size and not set(np.unique(labels).tolist()) <= set(target):
        raise ProtocolError("labels contain classes outside the target set")
    cm = confusion(preds, labels, len(full))
    return metrics_from_confusion(cm, target, PRESENT_ONLY)


def eight_way(preds, labels, K: int = 8) -> MetricsReport:
    return metrics_from_confusion(confusion(preds, labels, K), None, EIGHT_WAY)


def _auroc_binary(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    ranks = rankdata(scores)  # average ranks: ties count one half
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auroc(scores, labels, classes: Sequence[int] | None = None) -> float:
    """Mean one-vs-rest AUROC over classes that have positives and negatives."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    cls = range(scores.shape[1]) if classes is None else classes
    vals = []
    for c in cls:
        pos = labels == c
        if pos.all() or not pos.any():
            log.warning("class %d skipped in AUROC: needs positives and negatives", c)
            continue
        vals.append(_auroc_binary(scores[:, c], pos))
    if not vals:
        raise MetricsUndefinedError("no class has both positive and negative samples")
    return float(np.mean(vals))


# -- bootstrap ------------------------------------------------------------------

_NAMED = {"acc": 0, "macro_f1": 1, "bacc": 2}


def stratified_indices(labels, resamples: int, seed: int) -> np.ndarray:
    """``(resamples, N)`` indices drawn with replacement inside each true class.

    Resample ``r`` uses a generator seeded by ``(seed, r)`` so rows can be
    produced in any order.  Position ``i`` always stays within the stratum of
    ``labels[i]``, which preserves per-class counts.
    """
    labels = np.asarray(labels).astype(np.int64)
    strata = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    out = np.empty((resamples, labels.size), dtype=np.int64)
    for r in range(resamples):
        rng = np.random.default_rng([seed, r])
        for idx in strata:
            out[r, idx] = idx[rng.integers(0, idx.size, size=idx.size)]
    return out


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def bootstrap_ci(metric: str | Callable, preds, labels, resamples: int = 1000, seed: int = 0,
                 K: int = 8, classes: Sequence[int] | None = None) -> BootstrapCI:
    """95% percentile interval from stratified resampling.

    ``metric`` is ``"acc"``, ``"macro_f1"``, ``"bacc"`` (computed from
    resampled confusion matrices) or a callable ``metric(preds, labels)``.
    """
    preds = np.asarray(preds).astype(np.int64)
    labels = np.asarray(labels).astype(np.int64)
    idx = stratified_indices(labels, resamples, seed)
    if callable(metric):
        point = float(metric(preds, labels))
        values = np.array([metric(preds[i], labels[i]) for i in idx], dtype=np.float64)
    else:
        which = _NAMED[metric]
        cls = np.arange(K) if classes is None else np.asarray(sorted(classes))
        point = _scores(kernels.confusion(labels, preds, K), cls)[which]
        cms = kernels.resampled_confusions(labels, preds, idx, K)
        values = np.array([_scores(c, cls)[which] for c in cms])
    values.sort()
    lo, hi = nearest_rank(values, 2.5), nearest_rank(values, 97.5)
    if not lo <= point <= hi:
        log.warning("bootstrap interval [%g, %g] does not contain the point estimate %g", lo, hi, point)
    return BootstrapCI(point, lo, hi, resamples, seed)


def evaluate(preds, labels, scores=None, K: int = 8, target_classes: Sequence[int] | None = None,
             protocol: str = EIGHT_WAY, resamples: int = 1000, seed: int = 0,
             class_names: Sequence[str] = ()) -> dict:
    """Full report as a JSON-ready dict (metrics, CIs, confusion)."""
    if protocol == PRESENT_ONLY:
        if target_classes is None:
            raise ProtocolError("present-only evaluation needs target classes")
        rep = present_only(preds, labels, K, target_classes)
    elif protocol == EIGHT_WAY:
        rep = eight_way(preds, labels, K)
    else:
        raise ProtocolError(f"unknown protocol {protocol!r}")
    if scores is not None:
        rep.macro_auroc = macro_auroc(scores, labels, rep.classes)
    if resamples:
        rep.ci = {m: bootstrap_ci(m, preds, labels, resamples, seed, K, rep.classes).to_dict()
                  for m in ("acc", "macro_f1", "bacc")}
    cm = confusion(preds, labels, K)
    names = list(class_names) if class_names else [str(i) for i in range(K)]
    return {
        "protocol": rep.protocol,
        "classes": [names[c] for c in rep.classes],
        "acc": rep.acc,
        "macro_f1": rep.macro_f1,
        "bacc": rep.bacc,
        "macro_auroc": rep.macro_auroc,
        "per_class": {names[c]: {"precision": p, "recall": r, "f1": f}
                      for c, p, r, f in zip(rep.classes, rep.precision, rep.recall, rep.f1)},
        "ci": rep.ci,
        "confusion": cm.counts.tolist(),
    }
