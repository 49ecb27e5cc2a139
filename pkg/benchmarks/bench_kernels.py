"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--steps 4000] [--tau 500] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from optsignal import kernels
from optsignal.backtest import BacktestConfig, run
from optsignal.synthetic import planted_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=4000)
    parser.add_argument("--tau", type=int, default=500)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    prices, panel = planted_dataset(n_steps=args.steps)
    values, p = panel.values, prices.prices
    ends = np.arange(args.tau, args.steps, dtype=np.int64)
    signal = np.random.default_rng(0).standard_normal(args.steps)

    names = ["python"] + (["cython"] if kernels.compiled_available() else [])
    print(f"{len(ends)} windows of {args.tau} rows, {values.shape[1]} features")
    print(f"{'backend':<8} {'window_moments':>15} {'trailing_zscores':>17} {'run':>8}")
    for name in names:
        mod = kernels.backend(name)
        t_mom = min(timeit.repeat(
            lambda: mod.window_moments(values, p, ends, args.tau), number=1, repeat=args.repeat))
        t_z = min(timeit.repeat(
            lambda: mod.trailing_zscores(signal, args.tau), number=1, repeat=args.repeat))
        saved = kernels.window_moments, kernels.trailing_zscores
        kernels.window_moments, kernels.trailing_zscores = mod.window_moments, mod.trailing_zscores
        try:
            cfg = BacktestConfig(train_size=args.tau)
            t_run = min(timeit.repeat(lambda: run(prices, panel, cfg), number=1, repeat=args.repeat))
        finally:
            kernels.window_moments, kernels.trailing_zscores = saved
        print(f"{name:<8} {t_mom:>14.3f}s {t_z:>16.3f}s {t_run:>7.3f}s")


if __name__ == "__main__":
    main()
