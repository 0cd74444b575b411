"""PNG figures for simulation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MINUTES_PER_DAY, OPERATIONS, PERCENTILES, SeasonMetrics, arrival_table, nearest_rank  # noqa: E402

# strip the matplotlib version so identical data gives identical bytes
_PNG_METADATA = {"Software": None}

STYLE = {
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def plot_arrivals(metrics: SeasonMetrics, path: str | Path) -> Path:
    header, rows = arrival_table(metrics)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        days = [r[0] for r in rows]
        for j, op in enumerate(header[1:], start=1):
            ax.plot(days, [r[j] for r in rows], label=op, linewidth=1)
        ax.set_xlabel("day of season")
        ax.set_ylabel("transactions per day")
        ax.set_title(f"Transaction arrivals ({metrics.chain_mode}, {metrics.integrity_mode})")
        ax.legend(ncol=4, fontsize=6, loc="upper right")
        return _save(fig, Path(path))


def plot_wait_percentiles(series: Mapping[str, dict[str, list[float]]], path: str | Path,
                          title: str) -> Path:
    """Grouped 5/50/95th percentile markers per operation, one colour per series."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        ops = [op for op in OPERATIONS if any(w.get(op) for w in series.values())]
        width = 0.8 / max(1, len(series))
        for s, (label, waits) in enumerate(series.items()):
            xs, lo, mid, hi = [], [], [], []
            for i, op in enumerate(ops):
                samples = waits.get(op)
                if not samples:
                    continue
                p5, p50, p95 = (nearest_rank(samples, p) * MINUTES_PER_DAY for p in PERCENTILES)
                xs.append(i - 0.4 + width * (s + 0.5))
                lo.append(p50 - p5)
                mid.append(p50)
                hi.append(p95 - p50)
            ax.errorbar(xs, mid, yerr=[lo, hi], fmt="o", capsize=3, markersize=4, label=label)
        ax.set_xticks(range(len(ops)))
        ax.set_xticklabels(ops, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("minutes (median, bars to 5th/95th)")
        ax.set_yscale("log")
        ax.set_title(title)
        ax.legend()
        return _save(fig, Path(path))


def render_report(metrics: SeasonMetrics, out: str | Path) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = {"arrivals_png": plot_arrivals(metrics, out / "arrivals.png")}
    label = metrics.chain_mode
    if any(metrics.online_waits.values()):
        written["waits_online_png"] = plot_wait_percentiles(
            {label: metrics.online_waits}, out / "waits_online.png", "Online validation waiting time")
    if any(metrics.onsite_waits.values()):
        written["waits_onsite_png"] = plot_wait_percentiles(
            {label: metrics.onsite_waits}, out / "waits_onsite.png", "On-site verification waiting time")
    return written
