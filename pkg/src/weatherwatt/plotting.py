"""Matplotlib figures for a finished forecast report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from weatherwatt.pipeline import ForecastReport, TargetResult, gap_breaks  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _with_gaps(times: np.ndarray, values: np.ndarray, breaks: list[int]):
    """Insert NaN at each gap so lines are not drawn across missing data."""
    if not breaks:
        return times, values
    t = np.insert(times, breaks, times[breaks])
    v = np.insert(values.astype(float), breaks, np.nan)
    return t, v


def forecast_figure(result: TargetResult):
    times = np.asarray(result.timestamps, dtype="datetime64[s]")
    breaks = gap_breaks(result.timestamps)
    t, actual = _with_gaps(times, np.asarray(result.actual), breaks)
    _, pred = _with_gaps(times, np.asarray(result.predicted), breaks)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(t, actual, color="black", lw=1.4, label="actual")
        ax.plot(t, pred, color="tab:red", lw=1.0, label="predicted")
        feats = ", ".join(result.model.feature_names) or "intercept only"
        ax.set_title(f"{result.target} forecast from {feats} (test $R^2$ = {result.r2_test:.3f})")
        ax.set_xlabel("time (UTC)")
        ax.set_ylabel(result.target)
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d\n%H:%M"))
        ax.legend(loc="upper left")
        fig.tight_layout()
    return fig


def lag_figure(result: TargetResult):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 4))
        for scan in result.lag_scans:
            ks = [k for k, _ in scan.lags]
            rs = [r for _, r in scan.lags]
            ax.plot(ks, rs, marker="o", ms=3, label=scan.feature)
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_xlabel("lag (rows)")
        ax.set_ylabel("Pearson r")
        ax.set_title(f"{result.target}: lag correlation")
        if result.lag_scans:
            ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0), borderaxespad=0.0)
        fig.tight_layout()
    return fig


def _save(fig, path: Path) -> Path:
    # drop the variable Software/date fields so output depends only on the data
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def render_report_figures(report: ForecastReport, out_dir) -> list[Path]:
    """One forecast-vs-actual PNG per target, plus a lag-correlation PNG when scanned."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in report.results:
        paths.append(_save(forecast_figure(r), out / f"{r.target}_forecast.png"))
        if r.lag_scans:
            paths.append(_save(lag_figure(r), out / f"{r.target}_lags.png"))
    return paths
