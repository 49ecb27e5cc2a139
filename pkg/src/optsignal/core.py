"""Domain types, the price-weighted feature transform and the Sharpe objective.

A signal is linear in the (standardized) exogenous variables,
``signal_t = alpha @ X_t`` with ``X_0 = 1``.  Holding ``signal_t`` shares gives
``PnL_t = signal_{t-1} * (p_t - p_{t-1})``, hence ``PnL_t = alpha @ Xt_t`` with
``Xt_{i,t} = (p_t - p_{t-1}) * X_{i,t-1}``.  Every estimator downstream only
needs the mean vector and covariance matrix of ``Xt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlreadyAugmented,
    DegenerateVariance,
    DimensionMismatch,
    InsufficientData,
    MisalignedIndex,
    NonFinite,
    ValidationError,
)

INTERCEPT = "intercept"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _frozen_index(timestamps) -> np.ndarray:
    arr = np.array(timestamps, copy=True)
    arr.setflags(write=False)
    return arr


def _check_increasing(timestamps: np.ndarray) -> None:
    if timestamps.ndim != 1:
        raise ValidationError("timestamps must be one-dimensional")
    if timestamps.size > 1 and not np.all(timestamps[1:] > timestamps[:-1]):
        raise ValidationError("timestamps must be strictly increasing")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Open prices of one asset, one per trading step."""

    timestamps: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        ts = _frozen_index(self.timestamps)
        px = _frozen(self.prices)
        _check_increasing(ts)
        if px.ndim != 1 or px.shape[0] != ts.shape[0]:
            raise DimensionMismatch("prices and timestamps must have equal length")
        if px.shape[0] < 2:
            raise InsufficientData("a price series needs at least 2 steps")
        if not np.all(np.isfinite(px)):
            raise NonFinite("prices contain non-finite values")
        if not np.all(px > 0):
            raise ValidationError("prices must be strictly positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self) -> int:
        return self.prices.shape[0]

    def slice(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.timestamps[start:stop], self.prices[start:stop])


@dataclass(frozen=True, eq=False)
class FeaturePanel:
    """Time-aligned matrix of exogenous variables (T rows, m columns)."""

    timestamps: np.ndarray
    values: np.ndarray
    names: tuple = ()
    has_intercept: bool = False

    def __post_init__(self):
        ts = _frozen_index(self.timestamps)
        vals = _frozen(self.values)
        _check_increasing(ts)
        if vals.ndim == 1 and vals.size == 0:
            vals = _frozen(np.empty((ts.shape[0], 0)))
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise DimensionMismatch(
                f"values must be a {ts.shape[0]}-row matrix, got shape {vals.shape}"
            )
        names = tuple(self.names) if self.names else tuple(
            f"x{i}" for i in range(vals.shape[1])
        )
        if len(names) != vals.shape[1]:
            raise DimensionMismatch("one name per column is required")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("feature values contain non-finite entries")
        if self.has_intercept and (vals.shape[1] == 0 or np.any(vals[:, 0] != 1.0)):
            raise ValidationError("intercept column must be identically 1")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "FeaturePanel":
        return FeaturePanel(
            self.timestamps[start:stop],
            self.values[start:stop],
            self.names,
            self.has_intercept,
        )


@dataclass(frozen=True, eq=False)
class TransformedPanel:
    """Rows ``(p_t - p_{t-1}) * X_{t-1}``, indexed from the second price step."""

    timestamps: np.ndarray
    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2:
            raise DimensionMismatch("transformed values must be a matrix")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("transformed panel contains non-finite entries")
        object.__setattr__(self, "timestamps", _frozen_index(self.timestamps))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))


@dataclass(frozen=True, eq=False)
class Moments:
    """Empirical mean ``mu`` and covariance ``sigma`` of the transformed panel."""

    mu: np.ndarray
    sigma: np.ndarray
    tau: int

    def __post_init__(self):
        mu = _frozen(np.atleast_1d(self.mu))
        sigma = _frozen(np.atleast_2d(self.sigma))
        n = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (n, n):
            raise DimensionMismatch(f"mu {mu.shape} and sigma {sigma.shape} disagree")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise NonFinite("moments contain non-finite entries")
        if int(self.tau) < 2:
            raise InsufficientData("moments need tau >= 2")
        scale = np.max(np.abs(sigma)) if sigma.size else 0.0
        if np.any(np.abs(sigma - sigma.T) > 1e-12 * max(scale, 1e-300)):
            raise ValidationError("sigma is not symmetric")
        if n and scale > 0:
            if np.linalg.eigvalsh(sigma)[0] < -1e-10 * np.linalg.norm(sigma):
                raise ValidationError("sigma is not positive semidefinite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", int(self.tau))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def subset(self, index) -> "Moments":
        index = np.asarray(index)
        return Moments(self.mu[index], self.sigma[np.ix_(index, index)], self.tau)


@dataclass(frozen=True, eq=False)
class Alpha:
    """Signal coefficients, the per-step Sharpe they achieve in-sample, and
    which coefficients survived significance filtering."""

    coefficients: np.ndarray
    objective_value: float
    kept_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        coef = _frozen(np.atleast_1d(self.coefficients))
        if not np.all(np.isfinite(coef)):
            raise NonFinite("alpha coefficients must be finite")
        mask = self.kept_mask
        mask = np.ones(coef.shape, dtype=bool) if mask is None else _frozen(mask, bool)
        if mask.shape != coef.shape:
            raise DimensionMismatch("kept_mask must match coefficients")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "kept_mask", mask)
        object.__setattr__(self, "objective_value", float(self.objective_value))


def augment_with_intercept(panel: FeaturePanel) -> FeaturePanel:
    """Prepend the constant-1 column carrying the intercept coefficient."""
    if panel.has_intercept:
        raise AlreadyAugmented("panel already carries an intercept column")
    ones = np.ones((len(panel), 1))
    return FeaturePanel(
        panel.timestamps,
        np.hstack([ones, panel.values]),
        (INTERCEPT,) + panel.names,
        has_intercept=True,
    )


def check_aligned(panel: FeaturePanel, prices: PriceSeries) -> None:
    if panel.timestamps.shape != prices.timestamps.shape or not np.array_equal(
        panel.timestamps, prices.timestamps
    ):
        raise MisalignedIndex("feature and price timestamps differ")


def transform_features(panel: FeaturePanel, prices: PriceSeries) -> TransformedPanel:
    """Row ``t`` of the result is ``(p_t - p_{t-1}) * X_{t-1}``."""
    check_aligned(panel, prices)
    if not panel.has_intercept:
        raise ValidationError("transform_features expects an augmented panel")
    dp = np.diff(prices.prices)
    with np.errstate(over="ignore", invalid="ignore"):
        values = dp[:, None] * panel.values[:-1]
    if not np.all(np.isfinite(values)):
        raise NonFinite("transformed features overflow")
    return TransformedPanel(prices.timestamps[1:], values, panel.names)


def estimate_moments(transformed: TransformedPanel) -> Moments:
    """Column means and the unbiased (1/(tau-1)) sample covariance."""
    values = transformed.values
    tau = values.shape[0]
    if tau < 2:
        raise InsufficientData(f"need at least 2 transformed rows, got {tau}")
    mu = values.mean(axis=0)
    centered = values - mu
    sigma = centered.T @ centered / (tau - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return Moments(mu, sigma, tau)


def _variance(moments: Moments, alpha: np.ndarray) -> float:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != moments.mu.shape:
        raise DimensionMismatch(
            f"alpha has shape {alpha.shape}, expected {moments.mu.shape}"
        )
    var = float(alpha @ moments.sigma @ alpha)
    if not var > 0:
        raise DegenerateVariance("alpha lies in the null space of sigma")
    return var


def objective(moments: Moments, alpha) -> float:
    """Per-step empirical Sharpe ratio ``alpha @ mu / sqrt(alpha @ sigma @ alpha)``."""
    var = _variance(moments, alpha)
    return float(np.asarray(alpha, dtype=float) @ moments.mu) / np.sqrt(var)


def gradient(moments: Moments, alpha) -> np.ndarray:
    """Analytic gradient of :func:`objective`.

    ``mu / s - (alpha @ mu) * sigma @ alpha / s**3`` with ``s**2 = alpha @ sigma @ alpha``;
    it vanishes exactly when ``sigma @ alpha`` is proportional to ``mu``.
    """
    alpha = np.asarray(alpha, dtype=float)
    var = _variance(moments, alpha)
    s = np.sqrt(var)
    return moments.mu / s - float(alpha @ moments.mu) * (moments.sigma @ alpha) / (var * s)
