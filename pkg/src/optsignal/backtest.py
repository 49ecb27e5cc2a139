"""Rolling train-then-predict backtest.

At every step ``t`` past the first ``train_size`` rows the strategy holds the
coefficients fitted on rows ``[t - train_size, t)`` (refitted every
``retrain_every`` steps), evaluates ``signal_t = alpha @ X_t``, optionally
flips it with the sign of the uncorrected model's previous-step PnL, and
trades ``pos_t = signal_t * price_t`` only when the signal's trailing z-score
clears the gate.  Nothing at step ``t`` reads data from after ``t``.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .core import FeaturePanel, Moments, PriceSeries, check_aligned
from .errors import (
    ConfigError,
    ConstantColumn,
    DimensionMismatch,
    InsufficientData,
    MisalignedIndex,
    SignalError,
    ZeroVolatility,
)
from .preprocess import StandardizationSpec, standardize_rolling
from .solver import FitResult, SolverConfig, fit_moments

logger = logging.getLogger(__name__)

GATE_MODES = ("long_only", "two_sided")
DAILY_ANNUALIZATION = math.sqrt(252)


@dataclass(frozen=True)
class BacktestConfig:
    train_size: int
    retrain_every: int = 1
    gate_threshold: float = 1.0
    gate_mode: str = "two_sided"
    gating: bool = True
    corrective_factor: bool = False
    annualization_factor: float = DAILY_ANNUALIZATION
    solver: SolverConfig = field(default_factory=SolverConfig)
    std_spec: StandardizationSpec = field(default_factory=StandardizationSpec)

    def __post_init__(self):
        if int(self.train_size) < 3:
            raise ConfigError("train_size must be >= 3")
        if not 1 <= int(self.retrain_every) <= int(self.train_size):
            raise ConfigError("retrain_every must lie in [1, train_size]")
        if self.gate_mode not in GATE_MODES:
            raise ConfigError(f"gate_mode must be one of {GATE_MODES}")
        if not self.annualization_factor > 0:
            raise ConfigError("annualization_factor must be > 0")


@dataclass(frozen=True, eq=False)
class BacktestReport:
    """Per-step records and aggregate metrics of one backtest run.

    Arrays are aligned with ``timestamps``; ``pnl[i]`` is realized at step
    ``i`` from ``position[i-1]`` (the position before the first step is 0).
    ``fits`` holds one :class:`FitResult` per training window (``None`` where
    the solver failed).
    """

    timestamps: np.ndarray
    raw_signal: np.ndarray
    signal: np.ndarray
    zscore: np.ndarray
    gated: np.ndarray
    position: np.ndarray
    pnl: np.ndarray
    aggregates: dict
    warnings: dict
    n_fits: int
    fits: tuple = ()

    @property
    def cum_pnl(self) -> np.ndarray:
        return np.cumsum(self.pnl)

    def records(self) -> list:
        cum = self.cum_pnl
        return [
            {
                "timestamp": self.timestamps[i],
                "signal": float(self.signal[i]),
                "gated": bool(self.gated[i]),
                "position": float(self.position[i]),
                "pnl": float(self.pnl[i]),
                "cum_pnl": float(cum[i]),
            }
            for i in range(self.timestamps.shape[0])
        ]


# -- single-step operations ------------------------------------------------------


def prepare_row(fit: FitResult, raw_row) -> np.ndarray:
    """Standardize a raw feature row with the fit's training statistics and
    prepend the intercept."""
    raw_row = np.asarray(raw_row, dtype=float)
    if fit.standardizer is not None:
        if raw_row.shape != (len(fit.standardizer.names),):
            raise DimensionMismatch("row does not match the fitted feature columns")
        raw_row = fit.standardizer.transform_values(raw_row)
    return np.concatenate([[1.0], raw_row])


def generate_signal(fit: FitResult, row) -> float:
    """``alpha @ row`` (or ``alpha @ (projector @ row)`` for PCA fits).

    ``row`` must already be standardized and carry the leading 1.
    """
    row = np.asarray(row, dtype=float)
    if row.shape != (fit.dim,):
        raise DimensionMismatch(f"row has shape {row.shape}, expected ({fit.dim},)")
    if fit.projector is not None:
        row = fit.projector @ row
    return float(fit.alpha.coefficients @ row)


def _gate_open(z, threshold: float, mode: str):
    z = np.asarray(z, dtype=float)
    with np.errstate(invalid="ignore"):
        if mode == "long_only":
            out = z > threshold
        else:
            out = np.abs(z) > threshold
    return np.where(np.isfinite(z), out, False)


def gate_signal(signal_history, t: int, threshold: float = 1.0,
                mode: str = "two_sided", window: Optional[int] = None) -> bool:
    """Whether ``signal_history[t]`` clears the z-score gate.

    The z-score uses the (finite) values in ``signal_history[t-window:t]``;
    fewer than two of them, or zero spread, keeps the gate closed.
    """
    if mode not in GATE_MODES:
        raise ConfigError(f"mode must be one of {GATE_MODES}")
    history = np.asarray(signal_history, dtype=float)
    window = t if window is None else int(window)
    x = history[t]
    past = history[max(0, t - window):t]
    past = past[np.isfinite(past)]
    if past.size < 2 or not np.isfinite(x):
        return False
    std = past.std(ddof=1)
    if not std > 0:
        return False
    return bool(_gate_open((x - past.mean()) / std, threshold, mode))


def compute_pnl(positions, prices: PriceSeries) -> np.ndarray:
    """``PnL_t = pos_{t-1} * (p_t - p_{t-1}) / p_{t-1}``, length ``T - 1``.

    ``positions`` has one entry per price step (the last one is unused) or one
    per step except the last.
    """
    pos = np.asarray(positions, dtype=float)
    p = prices.prices
    if pos.shape == p.shape:
        pos = pos[:-1]
    elif pos.shape != (p.shape[0] - 1,):
        raise MisalignedIndex(
            f"{pos.shape[0]} positions for {p.shape[0]} prices"
        )
    pnl = pos * (p[1:] - p[:-1]) / p[:-1]
    return np.where(pos != 0, pnl, 0.0)


# -- metrics ------------------------------------------------------------------------


def sharpe_ratio(pnl, annualization_factor: float = 1.0) -> float:
    pnl = np.asarray(pnl, dtype=float)
    if pnl.size < 2:
        raise InsufficientData("need at least 2 PnL observations")
    std = pnl.std(ddof=1)
    if not std > 0:
        raise ZeroVolatility("PnL has zero standard deviation")
    return float(annualization_factor * pnl.mean() / std)


def _maybe_sharpe(pnl, factor):
    try:
        return sharpe_ratio(pnl, factor)
    except (ZeroVolatility, InsufficientData):
        return None


def metrics(positions, pnl, annualization_factor: float = DAILY_ANNUALIZATION,
            prior_position: float = 0.0) -> dict:
    """Aggregate statistics of a position/PnL path.

    * ``sharpe``: ``annualization_factor * mean(pnl) / std(pnl)`` (ddof=1);
      ``sharpe_per_step`` is the same without annualization.
    * ``effective_*``: restricted to steps whose previous position is nonzero
      (turnover: steps whose own position is nonzero).
    * ``turnover``: mean traded notional ``|pos_t - pos_{t-1}|`` per step over
      the mean held notional on active steps, in percent.
    * ``bips``: ``1e4 * total PnL / total traded notional``;
      ``effective_bips`` is ``1e4 * mean PnL / mean held notional`` over the
      effective steps.

    Undefined ratios (zero volatility, no activity) are ``None``.
    """
    pos = np.asarray(positions, dtype=float)
    pnl = np.asarray(pnl, dtype=float)
    if pos.shape != pnl.shape:
        raise DimensionMismatch("positions and pnl must have equal length")
    prev = np.concatenate([[prior_position], pos[:-1]])
    traded = np.abs(np.diff(np.concatenate([[prior_position], pos])))
    effective = prev != 0
    active = pos != 0
    held = float(np.abs(pos[active]).mean()) if np.any(active) else 0.0
    total_traded = float(traded.sum())
    f = annualization_factor

    out = {
        "n_steps": int(pnl.size),
        "n_active": int(active.sum()),
        "total_pnl": float(pnl.sum()),
        "sharpe": _maybe_sharpe(pnl, f),
        "sharpe_per_step": _maybe_sharpe(pnl, 1.0),
        "effective_sharpe": _maybe_sharpe(pnl[effective], f),
        "turnover": 100.0 * float(traded.mean()) / held if held > 0 and pnl.size else None,
        "effective_turnover": (
            100.0 * float(traded[active].mean()) / held if held > 0 else None
        ),
        "bips": 1e4 * float(pnl.sum()) / total_traded if total_traded > 0 else None,
        "effective_bips": None,
        "max_gross_position": float(np.abs(pos).max()) if pos.size else 0.0,
    }
    if np.any(effective):
        held_eff = float(np.abs(prev[effective]).mean())
        out["effective_bips"] = 1e4 * float(pnl[effective].mean()) / held_eff
    return out


# -- the engine -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _WindowFit:
    fit: Optional[FitResult]
    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    error: Optional[str] = None


def _price_beta(p_block, z_block):
    return np.concatenate([[p_block.mean()], (p_block[:, None] * z_block).mean(axis=0)])


def _fit_windows(values, prices, ends, config: BacktestConfig, names, standardize):
    tau = config.train_size
    means, stds, mus, sigmas = kernels.window_moments(values, prices, ends, tau, standardize)
    drop = config.std_spec.drop_constant
    fits = []
    for k, end in enumerate(ends):
        mean, std = means[k], stds[k]
        if standardize:
            flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        else:
            flat = np.zeros(mean.shape, dtype=bool)
        keep = np.flatnonzero(~flat)
        idx = np.concatenate([[0], keep + 1])
        try:
            if np.any(flat) and not drop:
                raise ConstantColumn("constant feature column in training window")
            moments = Moments(mus[k][idx], sigmas[k][np.ix_(idx, idx)], tau - 1)
            beta = None
            if config.solver.beta_target == "price":
                start = end - tau
                z = values[start:end][:, keep]
                if standardize:
                    z = (z - mean[keep]) / std[keep]
                beta = _price_beta(prices[start:end], z)
            kept_names = ("intercept",) + tuple(names[i] for i in keep)
            fit = fit_moments(moments, config.solver, beta, kept_names)
            fits.append(_WindowFit(fit, keep, mean[keep], std[keep]))
        except SignalError as exc:
            fits.append(_WindowFit(None, keep, mean[keep], std[keep], type(exc).__name__))
    return fits


def _trade(signal, p, steps, tau, config):
    zscore = kernels.trailing_zscores(signal, tau)
    if config.gating:
        gated = _gate_open(zscore, config.gate_threshold, config.gate_mode)
    else:
        gated = np.isfinite(signal)
    position = np.where(gated, np.nan_to_num(signal) * p[steps], 0.0)
    prev = np.concatenate([[0.0], position[:-1]])
    pnl = np.where(prev != 0, prev * (p[steps] - p[steps - 1]) / p[steps - 1], 0.0)
    return zscore, gated, position, pnl


def run(prices: PriceSeries, panel: FeaturePanel, config: BacktestConfig) -> BacktestReport:
    """Walk forward through the sample and trade the fitted signal.

    Solver failures in a window never abort the run: the strategy stands
    aside (position 0) until the next successful refit, and the failure is
    counted in ``report.warnings``.
    """
    check_aligned(panel, prices)
    if panel.has_intercept:
        raise ConfigError("pass the raw feature panel; the intercept is added internally")
    tau = int(config.train_size)
    std_spec = config.std_spec
    timestamps = prices.timestamps
    p = prices.prices
    values = panel.values
    names = panel.names
    standardize = std_spec.mode == "global"
    if std_spec.mode == "rolling":
        std_panel = standardize_rolling(panel, std_spec.window, std_spec.drop_constant)
        values, names = std_panel.values, std_panel.names
        p = p[std_spec.window:]
        timestamps = timestamps[std_spec.window:]
    T = p.shape[0]
    if T <= tau + 1:
        raise InsufficientData(
            f"{T} usable rows do not exceed train_size + 1 = {tau + 1}"
        )
    if tau < values.shape[1] + 3:
        raise ConfigError(
            f"train_size {tau} must be >= n_features + 3 = {values.shape[1] + 3}"
        )

    ends = np.arange(tau, T, int(config.retrain_every), dtype=np.int64)
    fits = _fit_windows(values, p, ends, config, names, standardize)

    steps = np.arange(tau, T)
    raw = np.full(steps.shape[0], np.nan)
    warnings = Counter()
    for k, wf in enumerate(fits):
        lo = ends[k] - tau
        hi = ends[k + 1] - tau if k + 1 < len(ends) else steps.shape[0]
        if wf.fit is None:
            warnings[wf.error] += 1
            continue
        coef = wf.fit.effective_coefficients
        rows = values[tau + lo:tau + hi][:, wf.keep]
        if standardize:
            rows = (rows - wf.mean) / wf.scale
        raw[lo:hi] = coef[0] + np.sum(rows * coef[1:], axis=1)

    signal = raw
    zscore, gated, position, pnl = _trade(raw, p, steps, tau, config)
    if config.corrective_factor:
        # flip with the sign of the uncorrected strategy's PnL realized at t-1
        sign = np.ones(steps.shape[0])
        sign[1:] = np.where(pnl[:-1] < 0, -1.0, 1.0)
        signal = sign * raw
        zscore, gated, position, pnl = _trade(signal, p, steps, tau, config)

    aggregates = metrics(position, pnl, config.annualization_factor)
    warnings = dict(sorted(warnings.items()))
    if warnings:
        logger.info("backtest stood aside after failed fits: %s", warnings)
    aggregates["failed_fits"] = int(sum(warnings.values()))
    aggregates["n_fits"] = len(fits)
    return BacktestReport(
        timestamps[steps], raw, signal, zscore, gated, position, pnl,
        aggregates, warnings, len(fits), tuple(wf.fit for wf in fits),
    )


SWEEP_COLUMNS = ("train_size", "sharpe", "effective_sharpe", "turnover", "bips", "error")


def sweep_train_sizes(prices: PriceSeries, panel: FeaturePanel,
                      base_config: BacktestConfig, sizes, max_workers=None) -> list:
    """One backtest per training size, run concurrently.

    Rows come back ordered by size (duplicates kept, in input order); a size
    whose run fails gets its error text in the ``error`` column.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        return []

    def one(size):
        row = {c: None for c in SWEEP_COLUMNS}
        row["train_size"] = size
        try:
            cfg = replace(base_config, train_size=size)
            agg = run(prices, panel, cfg).aggregates
        except SignalError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            return row
        for key in ("sharpe", "effective_sharpe", "turnover", "bips"):
            row[key] = agg[key]
        return row

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(one, sizes))
    order = sorted(range(len(sizes)), key=lambda i: (sizes[i], i))
    return [rows[i] for i in order]
