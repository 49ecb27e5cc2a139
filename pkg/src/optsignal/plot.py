"""SVG figure of a backtest: cumulative PnL with traded intervals shaded."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_report(report, path):
    # fixed hash salt and no date metadata keep the SVG byte-stable
    with plt.rc_context({"svg.hashsalt": "optsignal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(10, 4))
        x = np.arange(report.pnl.shape[0])
        cum = report.cum_pnl
        ax.plot(x, cum, color="black", lw=0.8, label="cumulative PnL")
        ax.fill_between(
            x, 0, 1, where=report.gated, transform=ax.get_xaxis_transform(),
            color="red", alpha=0.15, lw=0, label="position held",
        )
        ticks = np.linspace(0, x.size - 1, min(6, x.size)).astype(int)
        ax.set_xticks(ticks)
        ax.set_xticklabels([str(report.timestamps[i])[:10] for i in ticks])
        ax.set_ylabel("PnL (currency)")
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
