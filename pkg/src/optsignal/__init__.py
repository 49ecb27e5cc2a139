"""Sharpe-maximizing linear trading signals.

Typical use::

    from optsignal import BacktestConfig, SolverConfig, fit, run

    result = fit(prices, panel, SolverConfig(p_threshold=0.05))
    report = run(prices, panel, BacktestConfig(train_size=500))
"""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    compute_pnl,
    gate_signal,
    generate_signal,
    metrics,
    prepare_row,
    run,
    sweep_train_sizes,
)
from .core import (
    Alpha,
    FeaturePanel,
    Moments,
    PriceSeries,
    TransformedPanel,
    augment_with_intercept,
    estimate_moments,
    gradient,
    objective,
    transform_features,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .preprocess import StandardizationSpec, standardize, validate_panel
from .solver import (
    FitResult,
    SolverConfig,
    compute_beta,
    fit,
    fit_beta_neutral,
    fit_closed_form,
    fit_l1,
    fit_pca,
    regularize_l2,
    significance_filter,
)

__version__ = "0.1.0"

__all__ = [
    "Alpha",
    "BacktestConfig",
    "BacktestReport",
    "FeaturePanel",
    "FitResult",
    "KERNEL_BACKEND",
    "Moments",
    "PriceSeries",
    "SolverConfig",
    "StandardizationSpec",
    "TransformedPanel",
    "augment_with_intercept",
    "compute_beta",
    "compute_pnl",
    "estimate_moments",
    "fit",
    "fit_beta_neutral",
    "fit_closed_form",
    "fit_l1",
    "fit_pca",
    "gate_signal",
    "generate_signal",
    "gradient",
    "metrics",
    "objective",
    "prepare_row",
    "regularize_l2",
    "run",
    "significance_filter",
    "standardize",
    "sweep_train_sizes",
    "transform_features",
    "validate_panel",
]
