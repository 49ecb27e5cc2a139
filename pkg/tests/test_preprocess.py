from types import SimpleNamespace

import numpy as np
import pytest

from optsignal.core import FeaturePanel, PriceSeries
from optsignal.errors import ConstantColumn, InsufficientHistory
from optsignal.preprocess import (
    StandardizationSpec,
    fit_standardizer,
    standardize,
    standardize_rolling,
    validate_panel,
)


def _days(n):
    return np.datetime64("2020-01-01") + np.arange(n)


def _panel(values, names=None):
    values = np.asarray(values, dtype=float)
    names = names or tuple(f"f{i}" for i in range(values.shape[1]))
    return FeaturePanel(_days(values.shape[0]), values, names)


def test_global_standardization_example():
    out = standardize(_panel([[1.0], [2.0], [3.0]]), StandardizationSpec())
    np.testing.assert_allclose(out.values[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)


def test_standardization_is_idempotent(rng):
    panel = _panel(rng.standard_normal((200, 3)) * 4 + 7)
    once = standardize(panel, StandardizationSpec())
    twice = standardize(once, StandardizationSpec())
    np.testing.assert_allclose(twice.values, once.values, atol=1e-10)


def test_constant_column_dropped_with_warning(rng, caplog):
    values = np.column_stack([rng.standard_normal(30), np.full(30, 2.5)])
    with caplog.at_level("WARNING"):
        out = standardize(_panel(values, ("a", "flat")), StandardizationSpec())
    assert out.names == ("a",)
    assert "flat" in caplog.text


def test_constant_column_kept_raises(rng):
    values = np.column_stack([rng.standard_normal(30), np.full(30, 2.5)])
    with pytest.raises(ConstantColumn):
        standardize(_panel(values), StandardizationSpec(drop_constant=False))


def test_standardizer_applies_training_statistics(rng):
    train = _panel(rng.standard_normal((50, 2)) * 3 + 1)
    std = fit_standardizer(train)
    row = np.array([4.0, -2.0])
    expected = (row - train.values.mean(axis=0)) / train.values.std(axis=0, ddof=1)
    np.testing.assert_allclose(std.transform_values(row), expected, rtol=1e-14)


def test_rolling_uses_only_past_rows(rng):
    values = rng.standard_normal((60, 2))
    window = 10
    out = standardize_rolling(_panel(values), window)
    assert len(out) == 60 - window
    for t in range(window, 60):
        past = values[t - window:t]
        expected = (values[t] - past.mean(axis=0)) / past.std(axis=0, ddof=1)
        np.testing.assert_allclose(out.values[t - window], expected, rtol=1e-12)


def test_rolling_is_causal(rng):
    values = rng.standard_normal((60, 2))
    out = standardize_rolling(_panel(values), 10).values
    mutated = values.copy()
    mutated[40:] = 1e6
    out2 = standardize_rolling(_panel(mutated), 10).values
    # output row t - window depends on rows < t and row t itself
    np.testing.assert_array_equal(out[:30], out2[:30])


def test_rolling_needs_history(rng):
    with pytest.raises(InsufficientHistory):
        standardize_rolling(_panel(rng.standard_normal((5, 1))), 10)


def test_validate_clean_panel(rng):
    panel = _panel(rng.standard_normal((40, 3)))
    prices = PriceSeries(_days(40), 100 + np.arange(40.0))
    assert validate_panel(panel, prices) == []


def test_validate_duplicated_column(rng):
    x = rng.standard_normal(40)
    panel = _panel(np.column_stack([x, rng.standard_normal(40), x]), ("a", "b", "c"))
    prices = PriceSeries(_days(40), 100 + np.arange(40.0))
    issues = validate_panel(panel, prices)
    assert len(issues) == 1
    assert issues[0]["kind"] == "redundant"
    assert set(issues[0]["columns"]) == {"a", "c"}


def test_validate_reports_nan_cell(rng):
    values = rng.standard_normal((40, 2))
    values[7, 1] = np.nan
    # FeaturePanel rejects NaN at construction, so pass the raw data
    panel = SimpleNamespace(timestamps=_days(40), values=values, names=("a", "b"))
    prices = PriceSeries(_days(40), 100 + np.arange(40.0))
    issues = validate_panel(panel, prices)
    nf = [i for i in issues if i["kind"] == "non_finite"]
    assert nf and nf[0]["row"] == 7 and nf[0]["column"] == "b"
