# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: IDW rendering, bin accumulation, confusion counting."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()


def idw_interpolate(px, py, ex, ey, values, double power=2.0, double eps=1e-9):
    cdef const double[::1] px_ = np.ascontiguousarray(px, dtype=np.float64)
    cdef const double[::1] py_ = np.ascontiguousarray(py, dtype=np.float64)
    cdef const double[::1] ex_ = np.ascontiguousarray(ex, dtype=np.float64)
    cdef const double[::1] ey_ = np.ascontiguousarray(ey, dtype=np.float64)
    cdef const double[::1] v_ = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t P = px_.shape[0], C = ex_.shape[0], i, j
    out = np.empty(P, dtype=np.float64)
    cdef double[::1] o = out
    cdef double dx, dy, d, w, num, den
    cdef bint square = power == 2.0
    for i in range(P):
        num = 0.0
        den = 0.0
        for j in range(C):
            dx = px_[i] - ex_[j]
            dy = py_[i] - ey_[j]
            d = sqrt(dx * dx + dy * dy)
            if d <= eps:
                num = v_[j]
                den = -1.0
                break
            w = 1.0 / (d * d) if square else 1.0 / pow(d, power)
            num += w * v_[j]
            den += w
        o[i] = num if den < 0.0 else num / den
    return out


def accumulate_bins(emb, flat, Py_ssize_t K):
    cdef const double[:, ::1] e = np.ascontiguousarray(emb, dtype=np.float64)
    cdef const cnp.int64_t[::1] f = np.ascontiguousarray(flat, dtype=np.int64)
    cdef Py_ssize_t N = e.shape[0], D = e.shape[1], i, d, k
    sums = np.zeros((K, D), dtype=np.float64)
    counts = np.zeros(K, dtype=np.int64)
    cdef double[:, ::1] s = sums
    cdef cnp.int64_t[::1] c = counts
    for i in range(N):
        k = f[i]
        if k < 0 or k >= K:
            raise IndexError(f"bin index {k} out of range")
        c[k] += 1
        for d in range(D):
            s[k, d] += e[i, d]
    return sums, counts


def confusion(labels, preds, Py_ssize_t K):
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const cnp.int64_t[::1] p = np.ascontiguousarray(preds, dtype=np.int64)
    cdef Py_ssize_t N = y.shape[0], i
    cm = np.zeros((K, K), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] m = cm
    for i in range(N):
        m[y[i], p[i]] += 1
    return cm


def resampled_confusions(labels, preds, idx, Py_ssize_t K):
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const cnp.int64_t[::1] p = np.ascontiguousarray(preds, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t R = ix.shape[0], N = ix.shape[1], r, i, j
    out = np.zeros((R, K, K), dtype=np.int64)
    cdef cnp.int64_t[:, :, ::1] m = out
    for r in range(R):
        for i in range(N):
            j = ix[r, i]
            m[r, y[j], p[j]] += 1
    return out
