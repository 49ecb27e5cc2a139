"""Standardization of exogenous variables and panel sanity checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import FeaturePanel, PriceSeries, _frozen
from .errors import ConstantColumn, InsufficientHistory, ValidationError

logger = logging.getLogger(__name__)

MODES = ("global", "rolling")
REDUNDANCY_THRESHOLD = 0.999


@dataclass(frozen=True)
class StandardizationSpec:
    mode: str = "global"
    window: int = 20
    drop_constant: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"standardization mode must be one of {MODES}")
        if self.mode == "rolling" and int(self.window) < 2:
            raise ValidationError("rolling window must be >= 2")


def _is_constant(std: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return std <= 1e-12 * np.maximum(1.0, np.abs(mean))


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Column statistics learned on a training slice.

    ``keep`` indexes the input columns that survive (non-constant ones); the
    statistics are stored for those columns only.
    """

    names: tuple
    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    @property
    def kept_names(self) -> tuple:
        return tuple(self.names[i] for i in self.keep)

    def transform_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values[..., self.keep] - self.mean) / self.scale

    def apply(self, panel: FeaturePanel) -> FeaturePanel:
        if panel.has_intercept:
            raise ValidationError("standardize before adding the intercept")
        if panel.names != self.names:
            raise ValidationError("panel columns differ from the fitted columns")
        return FeaturePanel(
            panel.timestamps, self.transform_values(panel.values), self.kept_names
        )

    def to_dict(self) -> dict:
        return {
            "columns": list(self.kept_names),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }


def column_stats(values: np.ndarray, drop_constant: bool, names) -> tuple:
    """Mean, ddof=1 std and the kept-column index for a training block."""
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros_like(mean)
    constant = _is_constant(std, mean)
    if np.any(constant):
        dropped = [names[i] for i in np.flatnonzero(constant)]
        if not drop_constant:
            raise ConstantColumn(f"constant feature columns: {dropped}")
        logger.debug("dropping constant columns %s", dropped)
    keep = np.flatnonzero(~constant)
    return mean[keep], std[keep], keep


def fit_standardizer(panel: FeaturePanel, drop_constant: bool = True) -> Standardizer:
    if panel.has_intercept:
        raise ValidationError("standardize before adding the intercept")
    mean, std, keep = column_stats(panel.values, drop_constant, panel.names)
    return Standardizer(panel.names, _frozen(keep, int), _frozen(mean), _frozen(std))


def standardize_rolling(
    panel: FeaturePanel, window: int, drop_constant: bool = True
) -> FeaturePanel:
    """Z-score each row against the ``window`` rows strictly before it.

    The first ``window`` rows have no complete history and are dropped, so the
    output starts at ``panel.timestamps[window]``.  A column that is constant
    over the whole panel is dropped (or rejected); a window in which a column
    happens to be flat yields 0 for that entry.
    """
    if panel.has_intercept:
        raise ValidationError("standardize before adding the intercept")
    T = len(panel)
    if T < window:
        raise InsufficientHistory(f"rolling window {window} exceeds {T} rows")
    values = panel.values
    _, _, keep = column_stats(values, drop_constant, panel.names)
    values = values[:, keep]
    if T == window:
        out = np.empty((0, keep.size))
    else:
        windows = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
        windows = windows[: T - window]  # window ending at row t-1 for t >= window
        mean = windows.mean(axis=-1)
        std = windows.std(axis=-1, ddof=1)
        flat = _is_constant(std, mean)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(flat, 0.0, (values[window:] - mean) / np.where(flat, 1.0, std))
    names = tuple(panel.names[i] for i in keep)
    return FeaturePanel(panel.timestamps[window:], out, names)


def standardize(panel: FeaturePanel, spec: StandardizationSpec) -> FeaturePanel:
    """Z-score the exogenous variables.

    ``global`` mode uses the whole panel's mean and (ddof=1) standard
    deviation; ``rolling`` mode uses trailing statistics ending at ``t-1``.
    """
    if spec.mode == "rolling":
        out = standardize_rolling(panel, spec.window, spec.drop_constant)
    else:
        out = fit_standardizer(panel, spec.drop_constant).apply(panel)
    dropped = [n for n in panel.names if n not in out.names]
    if dropped:
        logger.warning("dropped constant feature columns %s", dropped)
    return out


def validate_panel(panel: FeaturePanel, prices: PriceSeries) -> list:
    """Report problems with a feature panel without raising.

    Accepts ``FeaturePanel``-like objects whose values may hold NaN (e.g. raw
    data wrapped in a ``types.SimpleNamespace``) since the typed constructor
    rejects them.
    """
    issues = []
    p_ts = np.asarray(prices.timestamps)
    f_ts = np.asarray(panel.timestamps)
    if p_ts.shape != f_ts.shape or not np.array_equal(p_ts, f_ts):
        missing = np.setdiff1d(p_ts, f_ts).size + np.setdiff1d(f_ts, p_ts).size
        issues.append(
            {"kind": "misaligned", "message": f"{missing} timestamps not shared"}
        )
    values = np.asarray(panel.values, dtype=float)
    names = list(panel.names)
    bad_rows, bad_cols = np.nonzero(~np.isfinite(values))
    for r, c in zip(bad_rows, bad_cols):
        issues.append(
            {
                "kind": "non_finite",
                "row": int(r),
                "column": names[c],
                "message": f"non-finite value at row {int(r)}, column {names[c]!r}",
            }
        )
    finite_rows = np.all(np.isfinite(values), axis=1)
    clean = values[finite_rows]
    if clean.shape[0] >= 2:
        mean = clean.mean(axis=0)
        std = clean.std(axis=0, ddof=1)
        constant = _is_constant(std, mean)
        for c in np.flatnonzero(constant):
            issues.append(
                {"kind": "constant", "column": names[c],
                 "message": f"column {names[c]!r} is constant"}
            )
        varying = np.flatnonzero(~constant)
        if varying.size > 1:
            corr = np.corrcoef(clean[:, varying], rowvar=False)
            for a in range(varying.size):
                for b in range(a + 1, varying.size):
                    if abs(corr[a, b]) > REDUNDANCY_THRESHOLD:
                        i, j = names[varying[a]], names[varying[b]]
                        issues.append(
                            {
                                "kind": "redundant",
                                "columns": [i, j],
                                "message": f"columns {i!r} and {j!r} have "
                                f"correlation {corr[a, b]:.6f}",
                            }
                        )
    return issues
