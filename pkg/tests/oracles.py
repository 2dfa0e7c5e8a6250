"""Independent straight-line reference implementations used as test oracles."""
from __future__ import annotations

import math

import numpy as np


def brute_force_bank(embeddings, va, G: int = 5, epsilon: float = 1.0):
    """Bin means, nearest-nonempty fill and Laplace prior with plain Python loops."""
    centers = [-0.8 + 1.6 * j / (G - 1) for j in range(G)]

    def nearest(x):
        best, best_d = 0, math.inf
        for j, c in enumerate(centers):
            d = abs(x - c)
            if d < best_d:
                best, best_d = j, d
        return best

    D = len(embeddings[0])
    K = G * G
    sums = [[0.0] * D for _ in range(K)]
    counts = [0] * K
    for e, (v, a) in zip(embeddings, va):
        k = nearest(v) * G + nearest(a)
        counts[k] += 1
        for d in range(D):
            sums[k][d] += e[d]
    protos = [[s / counts[k] for s in sums[k]] if counts[k] else None for k in range(K)]
    filled = list(protos)
    for k in range(K):
        if protos[k] is not None:
            continue
        u, v = divmod(k, G)
        best, best_d = None, math.inf
        for j in range(K):  # ascending, strict "<" keeps the lowest index on ties
            if protos[j] is None:
                continue
            uj, vj = divmod(j, G)
            d = math.sqrt((u - uj) ** 2 + (v - vj) ** 2)
            if d < best_d:
                best, best_d = j, d
        filled[k] = list(protos[best])
    total = sum(c + epsilon for c in counts)
    prior = [(c + epsilon) / total for c in counts]
    return np.array(filled), np.array(prior), np.array(counts)


def pair_count_auroc(scores, positive) -> float:
    """AUROC as the fraction of (pos, neg) pairs ordered correctly; ties count one half."""
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def loop_metrics(preds, labels, classes):
    """Acc, Macro-F1 and bACC over ``classes`` by explicit counting."""
    n = len(labels)
    acc = sum(p == t for p, t in zip(preds, labels)) / n
    f1s, recalls = [], []
    for c in classes:
        tp = sum(p == c and t == c for p, t in zip(preds, labels))
        fp = sum(p == c and t != c for p, t in zip(preds, labels))
        fn = sum(p != c and t == c for p, t in zip(preds, labels))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        recalls.append(rec)
    return acc, sum(f1s) / len(f1s), sum(recalls) / len(recalls)
