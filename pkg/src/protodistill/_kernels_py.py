"""Pure numpy implementations of the compiled kernels.

Signatures and results match ``_kernels.pyx``; accumulation order is the
input order so bank sums are bit-identical between the two backends.
"""
import numpy as np


def idw_interpolate(px, py, ex, ey, values, power=2.0, eps=1e-9):
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    ex = np.asarray(ex, dtype=np.float64)
    ey = np.asarray(ey, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dist = np.hypot(px[:, None] - ex[None, :], py[:, None] - ey[None, :])
    hit = dist <= eps
    w = 1.0 / np.maximum(dist, eps) ** power
    out = (w @ values) / w.sum(axis=1)
    rows = np.flatnonzero(hit.any(axis=1))
    if rows.size:
        out[rows] = values[np.argmax(hit[rows], axis=1)]
    return out


def accumulate_bins(emb, flat, K):
    emb = np.asarray(emb, dtype=np.float64)
    flat = np.asarray(flat, dtype=np.int64)
    sums = np.zeros((K, emb.shape[1]), dtype=np.float64)
    # add.at is unbuffered and applies updates in index order
    np.add.at(sums, flat, emb)
    counts = np.bincount(flat, minlength=K).astype(np.int64)
    return sums, counts


def confusion(labels, preds, K):
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    return np.bincount(labels * K + preds, minlength=K * K).reshape(K, K).astype(np.int64)


def resampled_confusions(labels, preds, idx, K):
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    R = idx.shape[0]
    cells = labels[idx] * K + preds[idx] + (np.arange(R, dtype=np.int64) * K * K)[:, None]
    return np.bincount(cells.ravel(), minlength=R * K * K).reshape(R, K, K).astype(np.int64)
