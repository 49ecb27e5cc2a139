# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the rolling-window kernels in ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, NAN

cnp.import_array()


def window_moments(values, prices, ends, Py_ssize_t tau, bint standardize=True):
    cdef const double[:, ::1] X = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] P = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const long long[::1] E = np.ascontiguousarray(ends, dtype=np.int64)
    cdef Py_ssize_t T = X.shape[0], m = X.shape[1], d = m + 1
    cdef Py_ssize_t K = E.shape[0], rows = tau - 1
    if tau < 3:
        raise ValueError("tau must be >= 3")
    cdef Py_ssize_t k, r, i, j, start, end
    for k in range(K):
        if E[k] - tau < 0 or E[k] > T:
            raise ValueError("window out of range")

    means_a = np.zeros((K, m))
    stds_a = np.ones((K, m))
    mu_a = np.zeros((K, d))
    sigma_a = np.zeros((K, d, d))
    cdef double[:, ::1] means = means_a
    cdef double[:, ::1] stds = stds_a
    cdef double[:, ::1] mu = mu_a
    cdef double[:, :, ::1] sigma = sigma_a
    cdef double[:, ::1] xt = np.empty((rows, d))
    cdef double[::1] cmean = np.empty(d)
    cdef double[::1] cstd = np.empty(m if m > 0 else 1)
    cdef double s, dp, acc, ci, mean_j, std_j, lim

    for k in range(K):
        end = E[k]
        start = end - tau
        for j in range(m):
            if standardize:
                s = 0.0
                for r in range(start, end):
                    s += X[r, j]
                mean_j = s / tau
                s = 0.0
                for r in range(start, end):
                    s += (X[r, j] - mean_j) * (X[r, j] - mean_j)
                std_j = sqrt(s / (tau - 1))
                means[k, j] = mean_j
                stds[k, j] = std_j
                lim = fabs(mean_j)
                if lim < 1.0:
                    lim = 1.0
                cstd[j] = 0.0 if std_j <= 1e-12 * lim else std_j
            else:
                means[k, j] = 0.0
                stds[k, j] = 1.0
                cstd[j] = 1.0
        for r in range(rows):
            dp = P[start + r + 1] - P[start + r]
            xt[r, 0] = dp
            for j in range(m):
                if cstd[j] == 0.0:
                    xt[r, j + 1] = 0.0
                elif standardize:
                    xt[r, j + 1] = dp * ((X[start + r, j] - means[k, j]) / cstd[j])
                else:
                    xt[r, j + 1] = dp * X[start + r, j]
        for i in range(d):
            s = 0.0
            for r in range(rows):
                s += xt[r, i]
            cmean[i] = s / rows
            mu[k, i] = cmean[i]
        for r in range(rows):
            for i in range(d):
                xt[r, i] -= cmean[i]
        for i in range(d):
            for j in range(i, d):
                acc = 0.0
                for r in range(rows):
                    acc += xt[r, i] * xt[r, j]
                acc /= rows - 1
                sigma[k, i, j] = acc
                sigma[k, j, i] = acc
    return means_a, stds_a, mu_a, sigma_a


def trailing_zscores(x, Py_ssize_t window):
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i, j, lo, cnt
    out_a = np.full(n, np.nan)
    cdef double[::1] out = out_a
    cdef double s, mean, ss, std
    for i in range(n):
        if not isfinite(v[i]):
            continue
        lo = i - window
        if lo < 0:
            lo = 0
        s = 0.0
        cnt = 0
        for j in range(lo, i):
            if isfinite(v[j]):
                s += v[j]
                cnt += 1
        if cnt < 2:
            continue
        mean = s / cnt
        ss = 0.0
        for j in range(lo, i):
            if isfinite(v[j]):
                ss += (v[j] - mean) * (v[j] - mean)
        std = sqrt(ss / (cnt - 1))
        if std > 0:
            out[i] = (v[i] - mean) / std
    return out_a
