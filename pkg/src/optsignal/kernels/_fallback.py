"""Pure numpy implementations of the hot loops.

These are the reference versions; ``_core.pyx`` must agree with them to
rounding.
"""

import numpy as np


def _constant(std, mean):
    return std <= 1e-12 * np.maximum(1.0, np.abs(mean))


def window_moments(values, prices, ends, tau, standardize=True):
    """Moments of the standardized, intercept-augmented transformed panel for
    each training window ``[end - tau, end)``.

    Returns ``(means, stds, mu, sigma)`` with shapes ``(K, m)``, ``(K, m)``,
    ``(K, m + 1)`` and ``(K, m + 1, m + 1)``.  A column that is flat inside a
    window gets its standardized values set to 0 (callers drop it).
    """
    values = np.ascontiguousarray(values, dtype=float)
    prices = np.ascontiguousarray(prices, dtype=float)
    ends = np.asarray(ends, dtype=np.int64)
    T, m = values.shape
    tau = int(tau)
    if tau < 3:
        raise ValueError("tau must be >= 3")
    if np.any(ends - tau < 0) or np.any(ends > T):
        raise ValueError("window out of range")
    K = ends.shape[0]
    d = m + 1
    means = np.zeros((K, m))
    stds = np.ones((K, m))
    mu = np.zeros((K, d))
    sigma = np.zeros((K, d, d))
    for k, end in enumerate(ends):
        start = end - tau
        block = values[start:end]
        if standardize and m:
            mean = block.mean(axis=0)
            std = block.std(axis=0, ddof=1)
            flat = _constant(std, mean)
            std_safe = np.where(flat, 1.0, std)
            z = np.where(flat, 0.0, (block - mean) / std_safe)
            means[k], stds[k] = mean, std
        else:
            z = block
        dp = np.diff(prices[start:end])
        xt = np.empty((tau - 1, d))
        xt[:, 0] = dp
        xt[:, 1:] = dp[:, None] * z[:-1]
        col_mean = xt.mean(axis=0)
        centered = xt - col_mean
        cov = centered.T @ centered / (tau - 2)
        mu[k] = col_mean
        sigma[k] = 0.5 * (cov + cov.T)
    return means, stds, mu, sigma


def trailing_zscores(x, window):
    """z-score of ``x[i]`` against the finite values among ``x[i-window:i]``.

    NaN where fewer than two past values exist, where their (ddof=1) standard
    deviation is 0, or where ``x[i]`` itself is NaN.
    """
    x = np.asarray(x, dtype=float)
    window = int(window)
    out = np.full(x.shape, np.nan)
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            continue
        past = x[max(0, i - window):i]
        past = past[np.isfinite(past)]
        if past.size < 2:
            continue
        mean = past.mean()
        std = np.sqrt(np.sum((past - mean) ** 2) / (past.size - 1))
        if std > 0:
            out[i] = (x[i] - mean) / std
    return out
