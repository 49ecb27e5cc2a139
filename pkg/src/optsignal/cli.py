"""Command line interface: ``optsignal fit | backtest | sweep | synth``.

Settings come from an optional JSON config file (see README for the schema)
and are overridden by command-line flags.  Exit codes: 0 success, 2 invalid
configuration or input data, 3 numerical/solver failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

from . import io
from .backtest import SWEEP_COLUMNS, BacktestConfig, run, sweep_train_sizes
from .errors import ConfigError, NumericalError, SignalError, ValidationError
from .preprocess import StandardizationSpec, validate_panel
from .solver import SolverConfig, fit

logger = logging.getLogger("optsignal")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "data": {"prices": None, "features": None, "fill": "strict"},
    "solver": {
        "l2_lambda": 0.0,
        "l2_form": "additive",
        "pca_k": None,
        "l1_lambda": 0.0,
        "l1_scaled": False,
        "l1_restarts": False,
        "p_threshold": None,
        "beta_target": None,
        "ridge_fallback": False,
    },
    "standardization": {"mode": "global", "window": 20, "drop_constant": True},
    "backtest": {
        "train_size": 250,
        "retrain_every": 1,
        "gate_threshold": 1.0,
        "gate_mode": "two_sided",
        "gating": True,
        "corrective_factor": False,
        "annualization_factor": math.sqrt(252),
    },
    "fit": {"last": None},
    "sweep": {"sizes": []},
    "output": {"dir": "out", "plot": False},
    "seed": 0,
}

# flag dest -> (section, key)
OVERRIDES = {
    "prices": ("data", "prices"),
    "features": ("data", "features"),
    "fill": ("data", "fill"),
    "l2_lambda": ("solver", "l2_lambda"),
    "l2_form": ("solver", "l2_form"),
    "pca_k": ("solver", "pca_k"),
    "l1_lambda": ("solver", "l1_lambda"),
    "l1_scaled": ("solver", "l1_scaled"),
    "l1_restarts": ("solver", "l1_restarts"),
    "p_threshold": ("solver", "p_threshold"),
    "beta": ("solver", "beta_target"),
    "ridge_fallback": ("solver", "ridge_fallback"),
    "std_mode": ("standardization", "mode"),
    "std_window": ("standardization", "window"),
    "keep_constant": ("standardization", "drop_constant"),
    "train_size": ("backtest", "train_size"),
    "retrain_every": ("backtest", "retrain_every"),
    "gate_threshold": ("backtest", "gate_threshold"),
    "gate_mode": ("backtest", "gate_mode"),
    "no_gate": ("backtest", "gating"),
    "corrective_factor": ("backtest", "corrective_factor"),
    "annualization_factor": ("backtest", "annualization_factor"),
    "last": ("fit", "last"),
    "sizes": ("sweep", "sizes"),
    "out": ("output", "dir"),
    "plot": ("output", "plot"),
    "seed": (None, "seed"),
}
NEGATED = {"keep_constant", "no_gate"}


def _merge(base: dict, update: dict, where="config") -> dict:
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown key {where}.{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{key} must be an object")
            _merge(base[key], value, f"{where}.{key}")
        else:
            base[key] = value
    return base


def load_config(path, args=None) -> dict:
    """Defaults <- config file <- command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, raw)
        for key in ("prices", "features"):
            p = cfg["data"][key]
            if p is not None and not Path(p).is_absolute():
                cfg["data"][key] = str(path.parent / p)
    if args is not None:
        for dest, (section, key) in OVERRIDES.items():
            value = getattr(args, dest, None)
            if value is None:
                continue
            if dest in NEGATED:
                value = not value
            if dest == "beta" and value != "price":
                value = [float(x) for x in value.split(",")]
            if section is None:
                cfg[key] = value
            else:
                cfg[section][key] = value
    return cfg


def _num(value, name, kind=float, lo=None, hi=None, allow_none=False):
    if value is None:
        if allow_none:
            return None
        raise ConfigError(f"{name} is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if kind is int and float(value) != int(value):
        raise ConfigError(f"{name} must be an integer")
    value = kind(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if lo is not None and value < lo:
        raise ConfigError(f"{name} must be >= {lo}")
    if hi is not None and value > hi:
        raise ConfigError(f"{name} must be <= {hi}")
    return value


def _flag(value, name):
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false")
    return value


def build_settings(cfg: dict, need_backtest: bool = True) -> dict:
    """Validate every field and build the typed configuration objects."""
    data = cfg["data"]
    for key in ("prices", "features"):
        if data[key] is None:
            raise ConfigError(f"data.{key} is required")
        if not Path(data[key]).is_file():
            raise ConfigError(f"data.{key}: file {data[key]} does not exist")
    if data["fill"] not in io.FILL_POLICIES:
        raise ConfigError(f"data.fill must be one of {io.FILL_POLICIES}")
    s = cfg["solver"]
    beta = s["beta_target"]
    if beta is not None and beta != "price":
        if not isinstance(beta, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in beta
        ):
            raise ConfigError("solver.beta_target must be 'price' or a list of numbers")
        beta = tuple(float(x) for x in beta)
    seed = _num(cfg["seed"], "seed", int, lo=0)
    solver = SolverConfig(
        l2_lambda=_num(s["l2_lambda"], "solver.l2_lambda", lo=0),
        l2_form=s["l2_form"],
        pca_k=_num(s["pca_k"], "solver.pca_k", int, lo=1, allow_none=True),
        l1_lambda=_num(s["l1_lambda"], "solver.l1_lambda", lo=0),
        l1_scaled=_flag(s["l1_scaled"], "solver.l1_scaled"),
        l1_restarts=_flag(s["l1_restarts"], "solver.l1_restarts"),
        p_threshold=_num(s["p_threshold"], "solver.p_threshold", allow_none=True),
        beta_target=beta,
        ridge_fallback=_flag(s["ridge_fallback"], "solver.ridge_fallback"),
        seed=seed,
    )
    st = cfg["standardization"]
    std_spec = StandardizationSpec(
        mode=st["mode"],
        window=_num(st["window"], "standardization.window", int, lo=2),
        drop_constant=_flag(st["drop_constant"], "standardization.drop_constant"),
    )
    b = cfg["backtest"]
    backtest = None
    if need_backtest:
        backtest = BacktestConfig(
            train_size=_num(b["train_size"], "backtest.train_size", int, lo=3),
            retrain_every=_num(b["retrain_every"], "backtest.retrain_every", int, lo=1),
            gate_threshold=_num(b["gate_threshold"], "backtest.gate_threshold"),
            gate_mode=b["gate_mode"],
            gating=_flag(b["gating"], "backtest.gating"),
            corrective_factor=_flag(b["corrective_factor"], "backtest.corrective_factor"),
            annualization_factor=_num(
                b["annualization_factor"], "backtest.annualization_factor"
            ),
            solver=solver,
            std_spec=std_spec,
        )
    last = _num(cfg["fit"]["last"], "fit.last", int, lo=3, allow_none=True)
    sizes = cfg["sweep"]["sizes"]
    if not isinstance(sizes, list):
        raise ConfigError("sweep.sizes must be a list of integers")
    sizes = [_num(x, "sweep.sizes[]", int, lo=3) for x in sizes]
    out = cfg["output"]
    return {
        "solver": solver,
        "std_spec": std_spec,
        "backtest": backtest,
        "last": last,
        "sizes": sizes,
        "out_dir": Path(out["dir"]),
        "plot": _flag(out["plot"], "output.plot"),
        "seed": seed,
    }


def _inputs_echo(cfg) -> dict:
    return {
        key: {"path": cfg["data"][key], "sha256": io.file_sha256(cfg["data"][key])}
        for key in ("prices", "features")
    }


def cmd_fit(cfg: dict) -> int:
    settings = build_settings(cfg, need_backtest=False)
    prices, panel, alignment = io.load_inputs(
        cfg["data"]["prices"], cfg["data"]["features"], cfg["data"]["fill"]
    )
    for issue in validate_panel(panel, prices):
        logger.warning("input check: %s", issue["message"])
    if settings["last"] is not None:
        n = len(prices)
        start = max(0, n - settings["last"])
        prices, panel = prices.slice(start, n), panel.slice(start, n)
    result = fit(prices, panel, settings["solver"], settings["std_spec"])
    names = list(result.names)
    coef_names = names if result.projector is None else [
        f"pc{i + 1}" for i in range(result.projector.shape[0])
    ]
    payload = {
        "schema_version": io.SCHEMA_VERSION,
        "features": names,
        "coefficients": dict(zip(coef_names, result.alpha.coefficients.tolist())),
        "effective_coefficients": dict(zip(names, result.effective_coefficients.tolist())),
        "objective": result.alpha.objective_value,
        "p_values": None if result.p_values is None else dict(
            zip(coef_names, result.p_values.tolist())
        ),
        "kept": dict(zip(coef_names, result.alpha.kept_mask.tolist())),
        "condition_number": result.diagnostics.get("condition_number"),
        "iterations": result.diagnostics.get("iterations"),
        "projector": None if result.projector is None else result.projector.tolist(),
        "standardization": (
            None if result.standardizer is None else result.standardizer.to_dict()
        ),
        "training_rows": len(prices),
        "alignment": alignment,
        "config": cfg,
        "inputs": _inputs_echo(cfg),
    }
    out = settings["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "fit_result.json", payload)
    logger.info("wrote %s", out / "fit_result.json")
    return EXIT_OK


def cmd_backtest(cfg: dict) -> int:
    settings = build_settings(cfg)
    prices, panel, alignment = io.load_inputs(
        cfg["data"]["prices"], cfg["data"]["features"], cfg["data"]["fill"]
    )
    report = run(prices, panel, settings["backtest"])
    out = settings["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    io.write_report_csv(out / "report.csv", report)
    io.write_json(
        out / "metrics.json",
        {
            "schema_version": io.SCHEMA_VERSION,
            "metrics": report.aggregates,
            "warnings": report.warnings,
            "alignment": alignment,
            "config": cfg,
            "inputs": _inputs_echo(cfg),
        },
    )
    if settings["plot"]:
        from .plot import plot_report

        plot_report(report, out / "plot.svg")
    logger.info("wrote %s", out)
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    settings = build_settings(cfg)
    sizes = settings["sizes"]
    if not sizes:
        raise ConfigError("sweep needs at least one training size (--sizes)")
    prices, panel, _ = io.load_inputs(
        cfg["data"]["prices"], cfg["data"]["features"], cfg["data"]["fill"]
    )
    rows = sweep_train_sizes(prices, panel, settings["backtest"], sizes)
    out = settings["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    io.write_sweep_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    for row in rows:
        if row["error"]:
            logger.warning("train_size %d failed: %s", row["train_size"], row["error"])
    if all(row["error"] for row in rows):
        logger.error("every training size failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import planted_dataset

    prices, panel = planted_dataset(
        n_steps=args.steps, n_noise=args.noise_features, coef=args.coef,
        noise_scale=args.noise_scale, seed=args.seed or 0,
    )
    p, f = io.write_dataset(args.out or ".", prices, panel)
    logger.info("wrote %s and %s", p, f)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--prices", help="price CSV (date,price)")
    p.add_argument("--features", help="feature CSV (date,name1,...)")
    p.add_argument("--fill", choices=io.FILL_POLICIES, help="missing-value policy")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    g = p.add_argument_group("solver")
    g.add_argument("--l2-lambda", type=float)
    g.add_argument("--l2-form", choices=("additive", "normalized"))
    g.add_argument("--pca-k", type=int)
    g.add_argument("--l1-lambda", type=float)
    g.add_argument("--l1-scaled", action="store_true", default=None)
    g.add_argument("--l1-restarts", action="store_true", default=None)
    g.add_argument("--p-threshold", type=float)
    g.add_argument("--beta", help="'price' or comma-separated vector")
    g.add_argument("--ridge-fallback", action="store_true", default=None)
    g = p.add_argument_group("standardization")
    g.add_argument("--std-mode", choices=("global", "rolling"))
    g.add_argument("--std-window", type=int)
    g.add_argument("--keep-constant", action="store_true", default=None,
                   help="reject constant columns instead of dropping them")


def _add_backtest(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("backtest")
    g.add_argument("--train-size", type=int)
    g.add_argument("--retrain-every", type=int)
    g.add_argument("--gate-threshold", type=float)
    g.add_argument("--gate-mode", choices=("long_only", "two_sided"))
    g.add_argument("--no-gate", action="store_true", default=None)
    g.add_argument("--corrective-factor", action="store_true", default=None)
    g.add_argument("--annualization-factor", type=float)
    g.add_argument("--plot", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optsignal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit coefficients and write fit_result.json")
    _add_common(p)
    p.add_argument("--last", type=int, help="train on the last N rows only")

    p = sub.add_parser("backtest", help="rolling backtest; writes report.csv and metrics.json")
    _add_common(p)
    _add_backtest(p)

    p = sub.add_parser("sweep", help="backtest several training sizes; writes sweep.csv")
    _add_common(p)
    _add_backtest(p)
    p.add_argument("--sizes", type=int, nargs="+")

    p = sub.add_parser("synth", help="write a synthetic planted-signal dataset")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--out", default=".")
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--noise-features", type=int, default=4)
    p.add_argument("--coef", type=float, default=0.1)
    p.add_argument("--noise-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    return parser


COMMANDS = {"fit": cmd_fit, "backtest": cmd_backtest, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SignalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
