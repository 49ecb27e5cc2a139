"""Monte Carlo runs used to fix the synthetic-data thresholds of the
acceptance suite.  Output is recorded in ``benchmarks/calibration.txt``.

    python benchmarks/calibrate.py [--seeds 100]
"""

import argparse

import numpy as np

from optsignal.backtest import BacktestConfig, run
from optsignal.solver import SolverConfig
from optsignal.synthetic import planted_dataset

TRAIN = dict(train_size=500, retrain_every=20)


def noise_drop_rate(report):
    dropped = total = 0
    for f in report.fits:
        if f is None:
            continue
        for name, kept in zip(f.names, f.alpha.kept_mask):
            if name.startswith("noise"):
                total += 1
                dropped += not kept
    return dropped / total


def planted(seeds, noise_scale):
    sharpe, drop = [], []
    for seed in range(seeds):
        prices, panel = planted_dataset(n_steps=4000, noise_scale=noise_scale, seed=seed)
        sharpe.append(run(prices, panel, BacktestConfig(**TRAIN)).aggregates["sharpe"])
        cfg = BacktestConfig(**TRAIN, solver=SolverConfig(p_threshold=0.01))
        drop.append(noise_drop_rate(run(prices, panel, cfg)))
    sharpe, drop = np.array(sharpe), np.array(drop)
    print(f"planted, noise_scale={noise_scale}: Sharpe >= 1.5 in {np.mean(sharpe >= 1.5):.0%} "
          f"(median {np.median(sharpe):.2f}, min {sharpe.min():.2f}); noise dropped in "
          f"{drop.mean():.2%} of windows (worst seed {drop.min():.2%})")


def null(seeds, n_steps):
    sharpe = []
    for seed in range(seeds):
        prices, panel = planted_dataset(n_steps=n_steps, coef=0.0, seed=10_000 + seed)
        s = run(prices, panel, BacktestConfig(**TRAIN)).aggregates["sharpe"]
        sharpe.append(0.0 if s is None else s)
    sharpe = np.array(sharpe)
    print(f"null, T={n_steps}: |Sharpe| < 0.5 in {np.mean(np.abs(sharpe) < 0.5):.0%} "
          f"(mean {sharpe.mean():+.3f}, sd {sharpe.std(ddof=1):.3f})")


def variants(seeds):
    configs = {
        "base": BacktestConfig(**TRAIN),
        "significance": BacktestConfig(**TRAIN, solver=SolverConfig(p_threshold=0.01)),
        "corrective": BacktestConfig(**TRAIN, corrective_factor=True),
        "corrective+significance": BacktestConfig(
            **TRAIN, corrective_factor=True, solver=SolverConfig(p_threshold=0.01)),
    }
    eff = {k: [] for k in configs}
    for seed in range(seeds):
        prices, panel = planted_dataset(n_steps=4000, seed=seed)
        for k, cfg in configs.items():
            eff[k].append(run(prices, panel, cfg).aggregates["effective_sharpe"])
    base = np.array(eff["base"])
    for k, v in eff.items():
        v = np.array(v)
        print(f"planted effective Sharpe, {k}: mean {v.mean():.2f}, "
              f">= base in {np.mean(v >= base):.0%} of seeds")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=100)
    args = parser.parse_args()
    print(f"{args.seeds} seeds, train_size 500, retrain_every 20")
    for scale in (0.5, 1.0):
        planted(args.seeds, scale)
    for n in (4000, 6000):
        null(args.seeds, n)
    variants(args.seeds)


if __name__ == "__main__":
    main()
