"""Sharpe-maximizing coefficient estimation.

The unconstrained optimum of ``alpha @ mu / sqrt(alpha @ sigma @ alpha)`` is
``sigma^-1 mu`` up to a positive scale; we pick the scale giving unit PnL
standard deviation in-sample (``alpha @ sigma @ alpha == 1``).  Everything
else here (beta neutrality, ridge, PCA, significance filtering, L1) is a
variation on that solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy import stats

from .core import (
    INTERCEPT,
    Alpha,
    FeaturePanel,
    Moments,
    PriceSeries,
    _frozen,
    augment_with_intercept,
    check_aligned,
    estimate_moments,
    gradient,
    objective,
    transform_features,
)
from .errors import (
    ConfigConflict,
    ConfigError,
    DegenerateConstraint,
    DimensionMismatch,
    EmptyModel,
    MisalignedIndex,
    NotConverged,
    RankDeficient,
    SingularCovariance,
    ZeroMeanVector,
)
from .preprocess import (
    StandardizationSpec,
    Standardizer,
    fit_standardizer,
    standardize_rolling,
)

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
L2_FORMS = ("additive", "normalized")
RIDGE_FALLBACK_LAMBDA = 1e-6
N_RESTARTS = 8


@dataclass(frozen=True)
class SolverConfig:
    """Regularization and constraint switches.

    ``beta_target`` is either ``None``, the string ``"price"`` (neutralize
    against the asset price over the training window) or an explicit vector
    in the augmented feature space.
    """

    l2_lambda: float = 0.0
    l2_form: str = "additive"
    pca_k: Optional[int] = None
    l1_lambda: float = 0.0
    l1_scaled: bool = False
    l1_restarts: bool = False
    l1_max_iter: int = 10_000
    p_threshold: Optional[float] = None
    beta_target: Union[None, str, Sequence[float]] = None
    ridge_fallback: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.l2_lambda >= 0:
            raise ConfigError("l2_lambda must be >= 0")
        if self.l2_form not in L2_FORMS:
            raise ConfigError(f"l2_form must be one of {L2_FORMS}")
        if self.pca_k is not None and int(self.pca_k) < 1:
            raise ConfigError("pca_k must be >= 1")
        if not self.l1_lambda >= 0:
            raise ConfigError("l1_lambda must be >= 0")
        if self.p_threshold is not None and not 0 < self.p_threshold <= 1:
            raise ConfigError("p_threshold must lie in (0, 1]")
        if self.pca_k is not None and self.l1_lambda > 0:
            raise ConfigConflict("PCA and L1 regularization cannot be combined")
        if isinstance(self.beta_target, str) and self.beta_target != "price":
            raise ConfigError("beta_target must be 'price' or a vector")
        if self.l1_max_iter < 1:
            raise ConfigError("l1_max_iter must be >= 1")

    def check_dimension(self, dim: int) -> None:
        if self.pca_k is not None and self.pca_k > dim:
            raise ConfigError(f"pca_k={self.pca_k} exceeds the {dim} coefficients")
        if self.beta_target is not None and not isinstance(self.beta_target, str):
            if len(self.beta_target) != dim:
                raise DimensionMismatch(f"beta_target needs {dim} entries")


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: Alpha
    p_values: Optional[np.ndarray] = None
    projector: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    names: tuple = ()
    standardizer: Optional[Standardizer] = None

    def __post_init__(self):
        if self.p_values is not None:
            p = _frozen(self.p_values)
            if np.any((p < 0) | (p > 1)):
                raise ValueError("p-values must lie in [0, 1]")
            object.__setattr__(self, "p_values", p)
        if self.projector is not None:
            proj = _frozen(np.atleast_2d(self.projector))
            gram = proj @ proj.T
            if np.max(np.abs(gram - np.eye(proj.shape[0]))) > 1e-8:
                raise ValueError("projector rows are not orthonormal")
            object.__setattr__(self, "projector", proj)

    @property
    def coefficients(self) -> np.ndarray:
        return self.alpha.coefficients

    @property
    def effective_coefficients(self) -> np.ndarray:
        """Weights on the augmented feature row, PCA projection folded in."""
        if self.projector is None:
            return self.alpha.coefficients
        return self.projector.T @ self.alpha.coefficients

    @property
    def dim(self) -> int:
        """Length of the augmented feature row the signal consumes."""
        if self.projector is None:
            return self.alpha.coefficients.shape[0]
        return self.projector.shape[1]


# -- linear algebra helpers -------------------------------------------------


def condition_number(sigma: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(sigma)
    if eig[-1] <= 0 or eig[0] <= 0:
        return float("inf")
    return float(eig[-1] / eig[0])


def _factor(sigma: np.ndarray):
    cond = condition_number(sigma)
    if not cond < MAX_CONDITION:
        raise SingularCovariance(
            f"covariance condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}",
            condition_number=cond,
        )
    return linalg.cho_factor(sigma, lower=True, check_finite=False)


def _normalize(sigma: np.ndarray, direction: np.ndarray) -> np.ndarray:
    return direction / np.sqrt(direction @ sigma @ direction)


def _diagonal_alpha(mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Closed form for a diagonal covariance: ``(mu_i/var_i) / sqrt(sum mu_j^2/var_j)``."""
    weights = mu / var
    norm = np.sqrt(np.sum(mu * mu / var))
    if not norm > 0:
        raise ZeroMeanVector("all component means are zero")
    return weights / norm


# -- closed form and constraints ---------------------------------------------


def fit_closed_form(moments: Moments) -> Alpha:
    """``sigma^-1 mu`` scaled to unit in-sample PnL variance.

    Raises
    ------
    ZeroMeanVector
        If ``mu`` is identically zero.
    SingularCovariance
        If ``sigma`` has condition number above 1e12.
    """
    mu, sigma = moments.mu, moments.sigma
    if not np.any(mu):
        raise ZeroMeanVector("mean vector is zero: no exploitable drift")
    factor = _factor(sigma)
    direction = linalg.cho_solve(factor, mu, check_finite=False)
    alpha = _normalize(sigma, direction)
    return Alpha(alpha, objective(moments, alpha))


def compute_beta(panel: FeaturePanel, target) -> np.ndarray:
    """Empirical ``mean_t(y_t * X_t)`` over the rows of an (augmented) panel.

    ``target`` is a :class:`PriceSeries` (timestamps must match) or a plain
    sequence with one value per panel row.
    """
    if isinstance(target, PriceSeries):
        check_aligned(panel, target)
        y = target.prices
    else:
        y = np.asarray(target, dtype=float)
        if y.shape != (len(panel),):
            raise MisalignedIndex(f"target needs {len(panel)} values, got {y.shape}")
    return (y[:, None] * panel.values).mean(axis=0)


def neutralize_mean(moments: Moments, beta) -> np.ndarray:
    """``mu - (mu' S^-1 beta / beta' S^-1 beta) * beta``."""
    beta = np.asarray(beta, dtype=float)
    factor = _factor(moments.sigma)
    b = linalg.cho_solve(factor, beta, check_finite=False)
    bb = float(beta @ b)
    if not bb > 0:
        raise DegenerateConstraint("beta has zero norm in the inverse-covariance metric")
    return moments.mu - (float(moments.mu @ b) / bb) * beta


def fit_beta_neutral(moments: Moments, beta) -> Alpha:
    """Best Sharpe among directions with ``alpha @ beta == 0``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != moments.mu.shape:
        raise DimensionMismatch("beta must match the coefficient dimension")
    sigma = moments.sigma
    factor = _factor(sigma)
    b = linalg.cho_solve(factor, beta, check_finite=False)
    bb = float(beta @ b)
    if not bb > 0:
        raise DegenerateConstraint("beta has zero norm in the inverse-covariance metric")
    mu_tilde = moments.mu - (float(moments.mu @ b) / bb) * beta
    if np.linalg.norm(mu_tilde) <= 1e-10 * np.linalg.norm(moments.mu):
        raise DegenerateConstraint("mean vector is parallel to beta: no neutral signal")
    direction = linalg.cho_solve(factor, mu_tilde, check_finite=False)
    # one refinement pass removes the rounding residue along beta
    direction = direction - (float(direction @ beta) / bb) * b
    alpha = _normalize(sigma, direction)
    if float(alpha @ moments.mu) < 0:
        alpha = -alpha
    return Alpha(alpha, objective(moments, alpha))


def regularize_l2(moments: Moments, lambda2: float, form: str = "additive") -> Moments:
    """Ridge the covariance.

    ``additive``: ``sigma + lambda2 * I``.
    ``normalized``: ``(sigma + lambda2 * ||sigma||_F / n * I) / (1 + lambda2)``
    with ``n`` the matrix dimension, which keeps the overall scale of sigma.
    """
    if lambda2 < 0:
        raise ConfigError("lambda2 must be >= 0")
    if form not in L2_FORMS:
        raise ConfigError(f"form must be one of {L2_FORMS}")
    if lambda2 == 0:
        return moments
    sigma = moments.sigma
    n = sigma.shape[0]
    eye = np.eye(n)
    if form == "additive":
        new = sigma + lambda2 * eye
    else:
        new = (sigma + lambda2 * np.linalg.norm(sigma, "fro") / n * eye) / (1 + lambda2)
    return Moments(moments.mu, new, moments.tau)


# -- PCA ----------------------------------------------------------------------


def principal_components(sigma: np.ndarray, k: int):
    """Top-``k`` eigenpairs of ``sigma`` with a deterministic sign convention."""
    eigvals, eigvecs = np.linalg.eigh(sigma)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    top = eigvals[0] if eigvals.size else 0.0
    rank = int(np.sum(eigvals > 1e-12 * top)) if top > 0 else 0
    if k > rank:
        raise RankDeficient(f"k={k} exceeds the covariance rank {rank}")
    vecs = eigvecs[:, :k].T.copy()
    for row in vecs:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return eigvals[:k], vecs


def fit_pca_moments(moments: Moments, k: int, beta=None) -> FitResult:
    variances, projector = principal_components(moments.sigma, int(k))
    comp = Moments(projector @ moments.mu, np.diag(variances), moments.tau)
    if beta is not None:
        alpha = fit_beta_neutral(comp, projector @ np.asarray(beta, dtype=float))
        coef = alpha.coefficients
    else:
        coef = _diagonal_alpha(comp.mu, variances)
    return FitResult(
        Alpha(coef, float(coef @ comp.mu)),
        projector=projector,
        diagnostics={"component_variances": variances.tolist()},
    )


def fit_pca(transformed, k: int) -> FitResult:
    """Diagonal closed form on the top-``k`` principal components of the
    transformed panel.  The signal is ``alpha @ (projector @ X_t)``."""
    return fit_pca_moments(estimate_moments(transformed), k)


# -- significance ---------------------------------------------------------------


def t_statistics(moments: Moments) -> np.ndarray:
    """Per-coordinate ``sqrt(tau) * mu_i / sigma_i``.

    For a diagonal covariance this equals ``sqrt(tau) * a_i * (a @ mu) * sigma_i``
    at the closed-form optimum ``a``.
    """
    sd = np.sqrt(np.clip(np.diag(moments.sigma), 0.0, None))
    mu = moments.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(moments.tau) * mu / sd
    return np.where(mu == 0, 0.0, t)


def p_values(moments: Moments) -> np.ndarray:
    """Two-sided Student-t p-values with ``tau - 1`` degrees of freedom."""
    t = t_statistics(moments)
    return np.clip(2.0 * stats.t.sf(np.abs(t), moments.tau - 1), 0.0, 1.0)


def significance_filter(
    moments: Moments,
    alpha: Alpha,
    p_threshold: float,
    refit: Optional[Callable[[Moments, np.ndarray], Alpha]] = None,
) -> FitResult:
    """Drop coefficients whose p-value is ``>= p_threshold`` and re-solve on
    the survivors.

    ``refit(sub_moments, kept_index)`` produces the sub-problem solution; the
    default is :func:`fit_closed_form`.
    """
    if not 0 < p_threshold <= 1:
        raise ConfigError("p_threshold must lie in (0, 1]")
    pv = p_values(moments)
    keep = pv < p_threshold if p_threshold < 1 else np.ones(pv.shape, dtype=bool)
    if not np.any(keep):
        raise EmptyModel("no coefficient passed the significance test", p_values=pv)
    if refit is None:
        refit = lambda sub, _index: fit_closed_form(sub)  # noqa: E731
    index = np.flatnonzero(keep)
    sub = refit(moments.subset(index), index)
    coef = np.zeros(moments.dim)
    coef[index] = sub.coefficients
    return FitResult(Alpha(coef, sub.objective_value, keep), p_values=pv)


# -- L1 -------------------------------------------------------------------------


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def penalized_objective(moments: Moments, alpha, lam: float) -> float:
    return objective(moments, alpha) - lam * float(np.sum(np.abs(alpha)))


def _l1_ascent(moments, start, lam, max_iter, tol):
    sigma = moments.sigma
    alpha = _normalize(sigma, start)
    value = penalized_objective(moments, alpha, lam)
    top = np.linalg.eigvalsh(sigma)[-1]
    eta = 1.0 / top
    min_eta = eta * 1e-14
    for it in range(1, max_iter + 1):
        g = gradient(moments, alpha)
        improved = False
        while eta > min_eta:
            cand = _soft_threshold(alpha + eta * g, eta * lam)
            if np.any(cand):
                cand = _normalize(sigma, cand)
                cand_value = penalized_objective(moments, cand, lam)
                if cand_value > value:
                    improved = True
                    break
            eta *= 0.5
        if not improved:
            return alpha, value, it, True
        gain = cand_value - value
        alpha, value = cand, cand_value
        if gain < tol:
            return alpha, value, it, True
        eta *= 2.0
    return alpha, value, max_iter, False


def fit_l1(
    moments: Moments,
    lambda1: float,
    scaled: bool = False,
    max_iter: int = 10_000,
    tol: float = 1e-10,
    restarts: bool = False,
    seed: int = 0,
) -> FitResult:
    """Maximize ``L(alpha) - lam * ||alpha||_1`` on ``alpha' sigma alpha = 1``.

    Proximal ascent (gradient step, soft threshold, renormalization, with
    backtracking) started at the closed-form optimum, so the result never
    scores below it.  With ``scaled`` the penalty is ``lambda1 * max L``.
    """
    if lambda1 < 0:
        raise ConfigError("lambda1 must be >= 0")
    start = fit_closed_form(moments)
    lam = lambda1 * start.objective_value if scaled else lambda1
    starts = [start.coefficients]
    if restarts:
        rng = np.random.default_rng(seed)
        starts += list(rng.standard_normal((N_RESTARTS, moments.dim)))
    best = None
    total_iter = 0
    for s in starts:
        alpha, value, iters, converged = _l1_ascent(moments, s, lam, max_iter, tol)
        total_iter += iters
        if best is None or value > best[1]:
            best = (alpha, value, converged)
    alpha, value, converged = best
    if not converged:
        raise NotConverged(
            f"L1 ascent did not converge in {max_iter} iterations",
            best_alpha=alpha,
            gap=None,
        )
    alpha = np.where(np.abs(alpha) < 1e-8, 0.0, alpha)
    if not np.any(alpha):
        raise EmptyModel("L1 penalty removed every coefficient")
    alpha = _normalize(moments.sigma, alpha)
    return FitResult(
        Alpha(alpha, objective(moments, alpha)),
        diagnostics={
            "iterations": total_iter,
            "penalty": lam,
            "penalized_objective": penalized_objective(moments, alpha, lam),
        },
    )


# -- pipeline -------------------------------------------------------------------


def fit_moments(
    moments: Moments, config: SolverConfig, beta=None, names: tuple = ()
) -> FitResult:
    """Regularize, constrain, solve and filter, starting from moments.

    ``beta`` is the resolved neutrality vector (or ``None``).
    """
    config.check_dimension(moments.dim)
    if beta is None and config.beta_target is not None and not isinstance(
        config.beta_target, str
    ):
        beta = np.asarray(config.beta_target, dtype=float)
    if config.l2_lambda > 0:
        moments = regularize_l2(moments, config.l2_lambda, config.l2_form)
    diagnostics = {"condition_number": condition_number(moments.sigma)}
    try:
        result = _solve(moments, config, beta)
    except SingularCovariance:
        if not config.ridge_fallback:
            raise
        logger.warning("singular covariance, retrying with ridge %g", RIDGE_FALLBACK_LAMBDA)
        moments = regularize_l2(moments, RIDGE_FALLBACK_LAMBDA, "normalized")
        diagnostics["ridge_fallback"] = True
        diagnostics["condition_number"] = condition_number(moments.sigma)
        result = _solve(moments, config, beta)
    diagnostics.update(result.diagnostics)
    diagnostics["objective"] = result.alpha.objective_value
    diagnostics["tau"] = moments.tau
    return replace(result, diagnostics=diagnostics, names=tuple(names))


def _solve(moments: Moments, config: SolverConfig, beta) -> FitResult:
    if config.pca_k is not None:
        base = fit_pca_moments(moments, config.pca_k, beta)
        if config.p_threshold is None:
            return base
        proj = base.projector
        variances = np.asarray(base.diagnostics["component_variances"])
        comp = Moments(proj @ moments.mu, np.diag(variances), moments.tau)
        comp_beta = None if beta is None else proj @ beta

        def refit(sub, index):
            if comp_beta is not None:
                return fit_beta_neutral(sub, comp_beta[index])
            coef = _diagonal_alpha(sub.mu, np.diag(sub.sigma))
            return Alpha(coef, float(coef @ sub.mu))

        filtered = significance_filter(comp, base.alpha, config.p_threshold, refit)
        return replace(filtered, projector=proj, diagnostics=base.diagnostics)

    if config.l1_lambda > 0:
        work = moments
        if beta is not None:
            work = Moments(neutralize_mean(moments, beta), moments.sigma, moments.tau)

        def solve(m):
            res = fit_l1(
                m, config.l1_lambda, config.l1_scaled,
                max_iter=config.l1_max_iter, restarts=config.l1_restarts,
                seed=config.seed,
            )
            return res

        base = solve(work)
        if config.p_threshold is None:
            return base

        def refit(sub, index):
            return solve(sub).alpha

        filtered = significance_filter(moments, base.alpha, config.p_threshold, refit)
        return replace(filtered, diagnostics=base.diagnostics)

    if beta is not None:
        alpha = fit_beta_neutral(moments, beta)

        def refit(sub, index):
            return fit_beta_neutral(sub, beta[index])
    else:
        alpha = fit_closed_form(moments)
        refit = None
    if config.p_threshold is None:
        return FitResult(alpha)
    return significance_filter(moments, alpha, config.p_threshold, refit)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Moments of one training window plus what is needed to score new rows."""

    moments: Moments
    names: tuple
    standardizer: Optional[Standardizer]
    augmented: FeaturePanel
    prices: PriceSeries


def prepare_training(
    prices: PriceSeries, panel: FeaturePanel, std_spec: StandardizationSpec
) -> TrainingSet:
    """standardize -> add intercept -> transform -> moments."""
    check_aligned(panel, prices)
    if std_spec.mode == "rolling":
        std_panel = standardize_rolling(panel, std_spec.window, std_spec.drop_constant)
        prices = prices.slice(std_spec.window, len(prices))
        standardizer = None
    else:
        standardizer = fit_standardizer(panel, std_spec.drop_constant)
        std_panel = standardizer.apply(panel)
    dropped = [n for n in panel.names if n not in std_panel.names]
    if dropped:
        logger.warning("dropped constant feature columns %s", dropped)
    augmented = augment_with_intercept(std_panel)
    moments = estimate_moments(transform_features(augmented, prices))
    return TrainingSet(moments, augmented.names, standardizer, augmented, prices)


def fit(
    prices: PriceSeries,
    panel: FeaturePanel,
    config: SolverConfig = SolverConfig(),
    std_spec: StandardizationSpec = StandardizationSpec(),
) -> FitResult:
    """Fit signal coefficients on one training window.

    The returned result carries the training standardizer so that future
    rows can be scored with :func:`optsignal.backtest.generate_signal`.
    """
    training = prepare_training(prices, panel, std_spec)
    beta = None
    if config.beta_target == "price":
        beta = compute_beta(training.augmented, training.prices)
    result = fit_moments(training.moments, config, beta, training.names)
    return replace(result, standardizer=training.standardizer)


__all__ = [
    "INTERCEPT",
    "FitResult",
    "SolverConfig",
    "TrainingSet",
    "compute_beta",
    "condition_number",
    "fit",
    "fit_beta_neutral",
    "fit_closed_form",
    "fit_l1",
    "fit_moments",
    "fit_pca",
    "fit_pca_moments",
    "neutralize_mean",
    "p_values",
    "penalized_objective",
    "prepare_training",
    "principal_components",
    "regularize_l2",
    "significance_filter",
    "t_statistics",
]
