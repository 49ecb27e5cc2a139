"""Synthetic datasets with a known answer, used by the tests and the demo."""

import numpy as np

from .core import FeaturePanel, PriceSeries


def planted_dataset(n_steps=4000, n_noise=4, coef=0.1, noise_scale=0.5,
                    price0=500.0, seed=0, start="2000-01-03"):
    """Prices whose increments load on the previous value of one feature.

    ``p_t - p_{t-1} = coef * x1_{t-1} + noise_scale * eps_t`` with iid
    standard normal features (``x1`` informative, ``n_noise`` pure noise).
    ``coef=0`` gives a driftless random walk with no exploitable signal.
    Returns ``(PriceSeries, FeaturePanel)`` on a daily calendar index.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_steps, 1 + n_noise))
    eps = rng.standard_normal(n_steps)
    dp = np.zeros(n_steps)
    dp[1:] = coef * X[:-1, 0] + noise_scale * eps[1:]
    prices = price0 + np.cumsum(dp)
    if np.any(prices <= 0):
        raise ValueError("price path crossed zero; raise price0")
    ts = np.datetime64(start, "D") + np.arange(n_steps)
    names = ("x1",) + tuple(f"noise{i + 1}" for i in range(n_noise))
    return PriceSeries(ts, prices), FeaturePanel(ts, X, names)
