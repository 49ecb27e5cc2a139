import csv
import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

import optsignal
from optsignal.cli import main
from optsignal.io import load_csv, load_inputs
from optsignal.errors import UnsortedInput

DATA = Path(optsignal.__file__).parent / "data"
GOLDEN_SHARPE = 1.6959421518158682  # shipped dataset, shipped config


@pytest.fixture
def data(tmp_path):
    d = tmp_path / "in"
    shutil.copytree(DATA, d)
    return d


def _run(*argv):
    return main([str(a) for a in argv])


def _read_report(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("signal", "gated", "position", "pnl", "cum_pnl")}


def test_fit_writes_schema(data, tmp_path):
    out = tmp_path / "out"
    assert _run("fit", "--config", data / "config.json", "--out", out) == 0
    doc = json.loads((out / "fit_result.json").read_text())
    for key in ("schema_version", "coefficients", "objective", "p_values", "kept",
                "condition_number", "config", "inputs"):
        assert key in doc
    assert list(doc["coefficients"])[:2] == ["intercept", "x1"]
    assert doc["kept"]["x1"] is True
    assert len(doc["inputs"]["prices"]["sha256"]) == 64


def _twice(argv, out, names):
    """Run the same invocation twice into ``out`` and return both outputs."""
    runs = []
    for _ in range(2):
        assert _run(*argv) == 0
        runs.append({n: (out / n).read_bytes() for n in names})
        shutil.rmtree(out)
    return runs


def test_fit_is_deterministic(data, tmp_path):
    out = tmp_path / "out"
    first, second = _twice(
        ["fit", "--config", data / "config.json", "--out", out, "--l1-lambda", "0.1",
         "--l1-restarts"], out, ["fit_result.json"])
    assert first == second


def test_fit_singular_covariance_exit_3(tmp_path, capsys):
    n = 60
    dates = [str(np.datetime64("2021-01-01") + i) for i in range(n)]
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    (tmp_path / "p.csv").write_text(
        "date,price\n" + "".join(f"{d},{100 + i + rng.random()}\n" for i, d in enumerate(dates))
    )
    (tmp_path / "f.csv").write_text(
        "date,a,b\n" + "".join(f"{d},{x[i]},{2 * x[i]}\n" for i, d in enumerate(dates))
    )
    code = _run("fit", "--prices", tmp_path / "p.csv", "--features", tmp_path / "f.csv",
                "--out", tmp_path / "o")
    assert code == 3
    err = capsys.readouterr().err
    assert "--l2-lambda" in err and "--pca-k" in err
    code = _run("fit", "--prices", tmp_path / "p.csv", "--features", tmp_path / "f.csv",
                "--out", tmp_path / "o", "--l2-lambda", "0.1")
    assert code == 0


def test_backtest_golden_run(data, tmp_path):
    out = tmp_path / "out"
    assert _run("backtest", "--config", data / "config.json", "--out", out) == 0
    doc = json.loads((out / "metrics.json").read_text())
    sharpe = doc["metrics"]["sharpe"]
    assert math.isfinite(sharpe)
    assert sharpe == pytest.approx(GOLDEN_SHARPE, rel=1e-9)
    assert (out / "plot.svg").read_text().startswith("<?xml")


def test_metrics_recompute_from_report(data, tmp_path):
    out = tmp_path / "out"
    assert _run("backtest", "--config", data / "config.json", "--out", out,
                "--corrective-factor") == 0
    m = json.loads((out / "metrics.json").read_text())["metrics"]
    r = _read_report(out / "report.csv")
    pnl, pos = r["pnl"], r["position"]
    assert abs(pnl.sum() - m["total_pnl"]) <= 1e-9
    assert abs(r["cum_pnl"][-1] - m["total_pnl"]) <= 1e-9
    af = math.sqrt(252)
    assert abs(af * pnl.mean() / pnl.std(ddof=1) - m["sharpe"]) <= 1e-9
    prev = np.concatenate([[0.0], pos[:-1]])
    eff = pnl[prev != 0]
    assert abs(af * eff.mean() / eff.std(ddof=1) - m["effective_sharpe"]) <= 1e-9
    traded = np.abs(np.diff(np.concatenate([[0.0], pos])))
    assert abs(1e4 * pnl.sum() / traded.sum() - m["bips"]) <= 1e-9
    held = np.abs(pos[pos != 0]).mean()
    assert abs(100 * traded.mean() / held - m["turnover"]) <= 1e-9
    assert np.all(r["position"][r["gated"] == 0] == 0)


def test_backtest_too_short_exit_2(data, tmp_path, capsys):
    code = _run("backtest", "--config", data / "config.json", "--out", tmp_path / "o",
                "--train-size", "1499")
    assert code == 2
    assert "train_size" in capsys.readouterr().err


def test_backtest_is_deterministic(data, tmp_path):
    out = tmp_path / "out"
    first, second = _twice(["backtest", "--config", data / "config.json", "--out", out],
                           out, ["report.csv", "metrics.json", "plot.svg"])
    assert first == second


def test_sweep_rows_and_failure(data, tmp_path):
    out = tmp_path / "out"
    assert _run("sweep", "--config", data / "config.json", "--out", out,
                "--sizes", "750", "250", "5000") == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["train_size"]) for r in rows] == [250, 750, 5000]
    assert rows[0]["error"] == "" and rows[1]["error"] == ""
    assert "InsufficientData" in rows[2]["error"]


def test_sweep_all_failing_exit_3(data, tmp_path):
    assert _run("sweep", "--config", data / "config.json", "--out", tmp_path / "o",
                "--sizes", "5000") == 3


def test_inputs_not_mutated(data, tmp_path):
    before = {p.name: p.read_bytes() for p in data.iterdir()}
    _run("backtest", "--config", data / "config.json", "--out", tmp_path / "o")
    assert {p.name: p.read_bytes() for p in data.iterdir()} == before


def test_config_errors_exit_2(data, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"solver": {"lambda": 1}}))
    assert _run("fit", "--config", bad, "--prices", data / "prices.csv",
                "--features", data / "features.csv") == 2
    assert _run("fit", "--config", data / "config.json", "--pca-k", "2",
                "--l1-lambda", "0.1", "--out", tmp_path / "o") == 2
    assert _run("backtest", "--config", data / "config.json", "--p-threshold", "1.5",
                "--out", tmp_path / "o") == 2


# -- ingestion -----------------------------------------------------------------------


def test_load_small_price_file(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("date,price\n2020-01-01,10\n2020-01-02,11\n2020-01-03,10.5\n")
    assert len(load_csv(f, "prices")) == 3


def test_duplicate_date_names_it(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("date,price\n2020-01-01,10\n2020-01-02,11\n2020-01-02,12\n")
    with pytest.raises(UnsortedInput, match="2020-01-02"):
        load_csv(f, "prices")


def test_intersection_drops_missing_date(tmp_path, caplog):
    p, f = tmp_path / "p.csv", tmp_path / "f.csv"
    p.write_text("date,price\n2020-01-01,10\n2020-01-02,11\n2020-01-03,12\n")
    f.write_text("date,a\n2020-01-01,1\n2020-01-03,2\n")
    with caplog.at_level("INFO"):
        prices, panel, alignment = load_inputs(p, f)
    assert len(prices) == len(panel) == 2
    assert alignment["dropped_from_prices"] == 1
    assert "dropped 1 price rows" in caplog.text


def test_forward_fill_policy(tmp_path):
    f = tmp_path / "f.csv"
    f.write_text("date,a\n2020-01-01,1\n2020-01-02,\n2020-01-03,3\n")
    from optsignal.errors import NonFinite

    with pytest.raises(NonFinite):
        load_csv(f, "features")
    assert load_csv(f, "features", fill="ffill").values[:, 0].tolist() == [1.0, 1.0, 3.0]


def test_synth_command(tmp_path):
    assert _run("synth", "--out", tmp_path, "--steps", "50") == 0
    assert len(load_csv(tmp_path / "prices.csv", "prices")) == 50
