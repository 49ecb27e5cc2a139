import math

import numpy as np
import pytest

from optsignal import oracle
from optsignal.backtest import generate_signal
from optsignal.core import (
    FeaturePanel,
    Moments,
    PriceSeries,
    TransformedPanel,
    augment_with_intercept,
    estimate_moments,
    objective,
    transform_features,
)
from optsignal.errors import (
    ConfigConflict,
    DegenerateConstraint,
    EmptyModel,
    RankDeficient,
    SingularCovariance,
    ZeroMeanVector,
)
from optsignal.preprocess import StandardizationSpec
from optsignal.solver import (
    SolverConfig,
    compute_beta,
    fit,
    fit_beta_neutral,
    fit_closed_form,
    fit_l1,
    fit_moments,
    fit_pca,
    p_values,
    penalized_objective,
    prepare_training,
    regularize_l2,
    significance_filter,
    t_statistics,
)
from optsignal.synthetic import planted_dataset

from conftest import random_moments


def _days(n):
    return np.datetime64("2020-01-01") + np.arange(n)


# -- closed form ------------------------------------------------------------------


def test_closed_form_one_dim():
    a = fit_closed_form(Moments([0.5], [[4.0]], 10))
    assert a.coefficients[0] == pytest.approx(0.5, abs=1e-15)
    assert a.objective_value == pytest.approx(0.25, abs=1e-15)


def test_closed_form_identity():
    a = fit_closed_form(Moments([1.0, 0.0], np.eye(2), 10))
    np.testing.assert_allclose(a.coefficients, [1.0, 0.0], atol=1e-15)
    assert a.objective_value == pytest.approx(1.0, abs=1e-15)


def test_closed_form_diagonal_example():
    m = Moments([1.0, 1.0], np.diag([2.0, 1.0]), 10)
    a = fit_closed_form(m)
    np.testing.assert_allclose(
        a.coefficients, [0.4082482904638631, 0.8164965809277261], atol=1e-12
    )
    assert a.objective_value == pytest.approx(1.224744871391589, abs=1e-12)
    _, best = oracle.brute_force_max(m)
    assert a.objective_value >= best - 1e-12
    # fine grid on the ellipse a' sigma a = 1
    theta = np.linspace(0, 2 * np.pi, 200_001)
    grid = np.column_stack([np.cos(theta) / math.sqrt(2), np.sin(theta)])
    assert a.objective_value >= np.max(grid @ m.mu) - 1e-12


def test_closed_form_errors():
    with pytest.raises(ZeroMeanVector):
        fit_closed_form(Moments([0.0, 0.0], np.eye(2), 10))
    with pytest.raises(SingularCovariance, match="L2.*PCA"):
        fit_closed_form(Moments([1.0, 1.0], np.ones((2, 2)), 10))


def test_closed_form_invariants(rng):
    for _ in range(50):
        m = random_moments(rng, int(rng.integers(1, 9)))
        a = fit_closed_form(m)
        c = a.coefficients
        assert abs(c @ m.sigma @ c - 1) <= 1e-8
        assert c @ m.mu >= 0
        bound = math.sqrt(m.mu @ np.linalg.solve(m.sigma, m.mu))
        assert a.objective_value == pytest.approx(bound, rel=1e-9)


# -- beta -----------------------------------------------------------------------------


def _augmented(values):
    values = np.asarray(values, dtype=float)
    return augment_with_intercept(
        FeaturePanel(_days(values.shape[0]), values, tuple(f"f{i}" for i in range(values.shape[1])))
    )


def test_compute_beta_examples(rng):
    panel = _augmented(rng.standard_normal((30, 3)))
    np.testing.assert_array_equal(compute_beta(panel, np.zeros(30)), np.zeros(4))
    ones = compute_beta(panel, np.ones(30))
    assert ones[0] == 1.0
    np.testing.assert_allclose(ones[1:], panel.values[:, 1:].mean(axis=0), atol=1e-15)


def test_compute_beta_direct(rng):
    panel = _augmented(rng.standard_normal((40, 2)))
    y = rng.standard_normal(40)
    expected = [sum(y[t] * panel.values[t, j] for t in range(40)) / 40 for j in range(3)]
    np.testing.assert_allclose(compute_beta(panel, y), expected, rtol=1e-12, atol=1e-14)
    prices = PriceSeries(_days(40), 100 + np.arange(40.0))
    np.testing.assert_allclose(
        compute_beta(panel, prices), (prices.prices[:, None] * panel.values).mean(axis=0)
    )


def test_beta_neutral_inactive_constraint():
    a = fit_beta_neutral(Moments([1.0, 0.0], np.eye(2), 10), [0.0, 1.0])
    np.testing.assert_allclose(a.coefficients, [1.0, 0.0], atol=1e-15)


def test_beta_neutral_conflicting_constraint():
    with pytest.raises(DegenerateConstraint):
        fit_beta_neutral(Moments([1.0, 2.0], np.eye(2), 10), [1.0, 2.0])


def test_beta_neutral_projection_example():
    m = Moments([1.0, 1.0], np.eye(2), 10)
    a = fit_beta_neutral(m, [1.0, 0.0])
    np.testing.assert_allclose(a.coefficients, [0.0, 1.0], atol=1e-15)
    assert a.coefficients @ [1.0, 0.0] == 0.0
    _, best = oracle.constrained_max(m, [1.0, 0.0])
    assert a.objective_value == pytest.approx(best, abs=1e-12)


def test_beta_neutral_matches_circle_oracle(rng):
    for _ in range(10):
        m = random_moments(rng, 3, cond_max=100)
        beta = rng.standard_normal(3)
        a = fit_beta_neutral(m, beta)
        _, best = oracle.constrained_max(m, beta, n_grid=200_001)
        assert a.objective_value >= best - 1e-9
        assert a.objective_value - best <= 1e-6


# -- L2 ------------------------------------------------------------------------------


def test_regularize_l2_zero_lambda(rng):
    m = random_moments(rng, 3)
    for form in ("additive", "normalized"):
        assert np.array_equal(regularize_l2(m, 0.0, form).sigma, m.sigma)


def test_regularize_l2_normalized_example():
    out = regularize_l2(Moments([1.0, 1.0], np.diag([3.0, 1.0]), 10), 1.0, "normalized")
    np.testing.assert_allclose(
        np.diag(out.sigma), [2.290569415042095, 1.290569415042095], atol=1e-12
    )
    assert out.sigma[0, 1] == 0.0
    assert np.array_equal(out.mu, [1.0, 1.0]) and out.tau == 10


def test_regularize_l2_rescues_zero_sigma():
    out = regularize_l2(Moments([1.0, 0.0], np.zeros((2, 2)), 10), 0.5, "additive")
    np.testing.assert_array_equal(out.sigma, 0.5 * np.eye(2))
    a = fit_closed_form(out)
    np.testing.assert_allclose(a.coefficients, [math.sqrt(2), 0.0])


def test_ridge_fallback():
    m = Moments([1.0, 1.0], np.ones((2, 2)), 10)
    with pytest.raises(SingularCovariance):
        fit_moments(m, SolverConfig())
    res = fit_moments(m, SolverConfig(ridge_fallback=True))
    assert res.diagnostics["ridge_fallback"] is True


# -- PCA -------------------------------------------------------------------------


def _diag_transformed(mu, sd, n=400):
    """Rows whose sample mean and covariance are exactly diag-structured."""
    rng = np.random.default_rng(3)
    z = rng.standard_normal((n, len(mu)))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    rows = q * math.sqrt(n - 1) * np.asarray(sd) + np.asarray(mu)
    return TransformedPanel(_days(n), rows)


def test_pca_diagonal_example():
    tp = _diag_transformed([0.2, 0.1], [1.0, 2.0])
    m = estimate_moments(tp)
    np.testing.assert_allclose(m.sigma, np.diag([1.0, 4.0]), atol=1e-12)
    res = fit_pca(tp, 2)
    coef = res.alpha.coefficients
    # components come out ordered by variance; map back through the projector
    direct = res.projector.T @ coef
    np.testing.assert_allclose(direct, [0.9701425001453319, 0.12126781251816648], atol=1e-10)
    np.testing.assert_allclose(direct, fit_closed_form(m).coefficients, atol=1e-10)


def test_pca_single_component(rng):
    tp = TransformedPanel(_days(200), rng.standard_normal((200, 4)) * [1, 3, 0.5, 2] + 0.1)
    res = fit_pca(tp, 1)
    proj = res.projector
    np.testing.assert_allclose(proj @ proj.T, np.eye(1), atol=1e-12)
    eigval, eigvec = np.linalg.eigh(estimate_moments(tp).sigma)
    top = eigvec[:, -1]
    assert abs(abs(proj[0] @ top) - 1) < 1e-10
    assert proj[0, np.argmax(np.abs(proj[0]))] > 0


def test_pca_rank_deficient(rng):
    x = rng.standard_normal((100, 2))
    tp = TransformedPanel(_days(100), np.column_stack([x, x[:, 0] + x[:, 1]]))
    fit_pca(tp, 2)
    with pytest.raises(RankDeficient):
        fit_pca(tp, 3)


def test_pca_full_rank_signal_equivalence():
    prices, panel = planted_dataset(n_steps=800, seed=7)
    base = fit(prices, panel)
    pca = fit(prices, panel, SolverConfig(pca_k=6))
    rows = np.column_stack([np.ones(800), base.standardizer.transform_values(panel.values)])
    s_base = np.array([generate_signal(base, r) for r in rows])
    s_pca = np.array([generate_signal(pca, r) for r in rows])
    np.testing.assert_allclose(s_pca, s_base, rtol=1e-8, atol=1e-8 * np.abs(s_base).max())


# -- significance ---------------------------------------------------------------


def test_significance_diagonal_example():
    sd = np.array([2.0, 1.0])
    m = Moments(0.3 * sd, np.diag(sd**2), 100)
    t = t_statistics(m)
    np.testing.assert_allclose(t, [3.0, 3.0], atol=1e-12)
    pv = p_values(m)
    assert pv[0] == pytest.approx(0.0034155079, abs=1e-9)
    assert abs(pv[0] - 0.00339) <= 1e-4
    assert pv[0] == pytest.approx(oracle.student_t_sf(3.0, 99), abs=1e-10)
    res = significance_filter(m, fit_closed_form(m), 0.05)
    assert res.alpha.kept_mask.all()


def test_significance_zero_mean_dropped():
    m = Moments([0.5, 0.0], np.eye(2), 100)
    assert t_statistics(m)[1] == 0.0
    assert p_values(m)[1] == 1.0
    res = significance_filter(m, fit_closed_form(m), 0.999)
    assert res.alpha.kept_mask.tolist() == [True, False]
    assert res.alpha.coefficients[1] == 0.0


def test_significance_threshold_one_is_identity(rng):
    m = random_moments(rng, 4)
    a = fit_closed_form(m)
    res = significance_filter(m, a, 1.0)
    assert res.alpha.kept_mask.all()
    np.testing.assert_allclose(res.alpha.coefficients, a.coefficients, atol=1e-14)


def test_significance_all_dropped():
    m = Moments([1e-6, 1e-6], np.eye(2), 10)
    with pytest.raises(EmptyModel):
        significance_filter(m, fit_closed_form(m), 0.01)


def test_significance_diagonal_identity_general_path(rng):
    sd = rng.uniform(0.5, 3, 5)
    mu = rng.standard_normal(5)
    tau = 250
    m = Moments(mu, np.diag(sd**2), tau)
    np.testing.assert_allclose(t_statistics(m), math.sqrt(tau) * mu / sd, rtol=0, atol=1e-10)


def test_refit_keeps_unit_variance(rng):
    m = random_moments(rng, 5)
    mu = np.array(m.mu)
    mu[2] = 0.0
    m = Moments(mu, m.sigma, m.tau)
    res = significance_filter(m, fit_closed_form(m), 0.5)
    c = res.alpha.coefficients
    assert abs(c @ m.sigma @ c - 1) < 1e-10
    assert c[2] == 0.0


# -- L1 ---------------------------------------------------------------------------------


def test_l1_zero_penalty_matches_closed_form(rng):
    for _ in range(10):
        m = random_moments(rng, 4, cond_max=100)
        res = fit_l1(m, 0.0)
        np.testing.assert_allclose(
            res.alpha.coefficients, fit_closed_form(m).coefficients, atol=1e-6
        )


def test_l1_sparse_example():
    m = Moments([1.0, 0.05], np.eye(2), 100)
    res = fit_l1(m, 0.5, scaled=True)
    assert res.alpha.coefficients[1] == 0.0
    lam = 0.5 * fit_closed_form(m).objective_value
    achieved = penalized_objective(m, res.alpha.coefficients, lam)
    _, best = oracle.dense_grid_penalized_max(m, lam)
    assert abs(achieved - best) <= 1e-4
    assert achieved >= best - 1e-12


def test_l1_never_below_start(rng):
    for _ in range(10):
        m = random_moments(rng, 4, cond_max=100)
        lam = 0.1
        start = fit_closed_form(m).coefficients
        res = fit_l1(m, lam)
        assert penalized_objective(m, res.alpha.coefficients, lam) >= (
            penalized_objective(m, start, lam) - 1e-12
        )


def test_l1_restarts_are_seeded(rng):
    m = random_moments(rng, 4, cond_max=100)
    a = fit_l1(m, 0.2, restarts=True, seed=5).alpha.coefficients
    b = fit_l1(m, 0.2, restarts=True, seed=5).alpha.coefficients
    assert np.array_equal(a, b)


# -- pipeline -----------------------------------------------------------------------------


def test_pca_with_l1_conflicts():
    with pytest.raises(ConfigConflict):
        SolverConfig(pca_k=2, l1_lambda=0.1)


def test_intercept_only_model(rng):
    n = 300
    prices = PriceSeries(_days(n), 100 + np.cumsum(rng.standard_normal(n) + 0.05))
    panel = FeaturePanel(_days(n), np.empty((n, 0)), ())
    res = fit(prices, panel)
    dp = np.diff(prices.prices)
    assert res.alpha.coefficients.shape == (1,)
    assert res.alpha.coefficients[0] == pytest.approx(
        np.sign(dp.mean()) / dp.std(ddof=1), rel=1e-12
    )
    assert generate_signal(res, [1.0]) == res.alpha.coefficients[0]


def test_beta_price_target_is_neutral():
    prices, panel = planted_dataset(n_steps=600, seed=2)
    res = fit(prices, panel, SolverConfig(beta_target="price"))
    training = prepare_training(prices, panel, StandardizationSpec())
    beta = compute_beta(training.augmented, training.prices)
    c = res.alpha.coefficients
    assert abs(c @ beta) <= 1e-10 * np.linalg.norm(c) * np.linalg.norm(beta)


def test_planted_fit_recovers_signal():
    corr_ok, dropped = 0, 0
    for seed in range(100):
        prices, panel = planted_dataset(n_steps=2001, n_noise=1, price0=2000, seed=seed)
        res = fit(prices, panel)
        z = res.standardizer.transform_values(panel.values)
        signal = z @ res.alpha.coefficients[1:]
        corr_ok += np.corrcoef(signal, 0.1 * panel.values[:, 0])[0, 1] >= 0.9
        filtered = fit(prices, panel, SolverConfig(p_threshold=0.01))
        dropped += not filtered.alpha.kept_mask[2]
    assert corr_ok >= 95
    assert dropped >= 95
