"""Season metrics, nearest-rank percentiles and CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from ..domain import OperationUnit

OPERATIONS = tuple(op.value for op in OperationUnit)
MINUTES_PER_DAY = 24 * 60
PERCENTILES = (5, 50, 95)


class NoSamples(ValueError):
    pass


@dataclass
class SeasonMetrics:
    chain_mode: str
    integrity_mode: str
    seed: int
    lot_count: int
    k_fp: int = 0
    k_fh: int = 0
    k_fq: int = 0
    done: int = 0
    destroyed: int = 0
    # times in days
    arrivals: dict[str, list[float]] = field(default_factory=dict)
    online_waits: dict[str, list[float]] = field(default_factory=dict)
    onsite_waits: dict[str, list[float]] = field(default_factory=dict)
    commit_latency: dict[str, list[float]] = field(default_factory=dict)
    commit_times: list[float] = field(default_factory=list)
    # (time, operation, shard) of every online submission
    submissions: list[tuple[float, str, int]] = field(default_factory=list)
    end_time: float = 0.0

    @property
    def q_fp(self) -> float:
        return self.k_fp / self.lot_count

    @property
    def q_fh(self) -> float:
        return self.k_fh / self.lot_count

    @property
    def q_fq(self) -> float:
        return self.k_fq / self.lot_count

    @property
    def transactions(self) -> int:
        return sum(len(v) for v in self.arrivals.values())

    def rates(self) -> dict[str, float]:
        return {"q_fp": self.q_fp, "q_fh": self.q_fh, "q_fq": self.q_fq}

    def waits(self, kind: str) -> dict[str, list[float]]:
        try:
            return {"online": self.online_waits, "onsite": self.onsite_waits,
                    "commit": self.commit_latency}[kind]
        except KeyError:
            raise ValueError(f"unknown wait kind {kind!r}") from None


def nearest_rank(samples: Sequence[float], p: float) -> float:
    """Smallest sample with at least p% of the data at or below it."""
    if not 0 <= p <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    if len(samples) == 0:
        raise NoSamples("no samples")
    ordered = sorted(samples)
    rank = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[rank - 1]


def waiting_percentiles(metrics: SeasonMetrics, operation: str | OperationUnit, p: float,
                        kind: str = "online") -> float:
    """p-th nearest-rank percentile of one operation's waits, in days."""
    op = operation.value if isinstance(operation, OperationUnit) else operation
    samples = metrics.waits(kind).get(op, [])
    if not samples:
        raise NoSamples(f"no {kind} waiting samples for {op}")
    return nearest_rank(samples, p)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def arrival_table(metrics: SeasonMetrics) -> tuple[list[str], list[list[int]]]:
    """One row per season day, one column per operation."""
    ops = [op for op in OPERATIONS if metrics.arrivals.get(op)]
    last = max((max(v) for v in metrics.arrivals.values() if v), default=0.0)
    days = int(math.floor(last)) + 1
    columns = []
    for op in ops:
        counts = np.bincount(np.floor(metrics.arrivals[op]).astype(int), minlength=days)
        columns.append(counts)
    rows = [[day] + [int(c[day]) for c in columns] for day in range(days)]
    return ["day"] + ops, rows


def percentile_rows(waits: dict[str, list[float]]) -> list[list]:
    rows = []
    for op in OPERATIONS:
        samples = waits.get(op)
        if not samples:
            continue
        values = [nearest_rank(samples, p) * MINUTES_PER_DAY for p in PERCENTILES]
        rows.append([op, len(samples)] + [_fmt(v) for v in values])
    return rows


WAIT_HEADER = ["operation", "samples", "p5_min", "p50_min", "p95_min"]


def export_metrics(metrics: SeasonMetrics, path: str | Path) -> dict[str, Path]:
    """Write arrivals.csv, waits_online.csv, waits_onsite.csv and commit_latency.csv.

    Waiting times are reported in minutes; arrivals are daily counts.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    header, rows = arrival_table(metrics)
    written["arrivals"] = out / "arrivals.csv"
    _write_rows(written["arrivals"], header, rows)
    for name, waits in (("waits_online", metrics.online_waits), ("waits_onsite", metrics.onsite_waits),
                        ("commit_latency", metrics.commit_latency)):
        written[name] = out / f"{name}.csv"
        _write_rows(written[name], WAIT_HEADER, percentile_rows(waits))
    return written


@dataclass(frozen=True)
class RateSummary:
    metric: str
    mean: float
    std: float
    ci_low: float
    ci_high: float
    replications: int


def summarize_rates(runs: Sequence[SeasonMetrics], confidence: float = 0.95) -> list[RateSummary]:
    """Mean, sample std and Student-t interval of each false-pass rate."""
    if not runs:
        raise NoSamples("no replications")
    out = []
    for metric in ("q_fp", "q_fh", "q_fq"):
        values = np.array([getattr(m, metric) for m in runs], dtype=float)
        n = len(values)
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if n > 1 else 0.0
        if n > 1 and std > 0:
            half = float(stats.t.ppf(0.5 + confidence / 2, n - 1)) * std / math.sqrt(n)
        else:
            half = 0.0
        out.append(RateSummary(metric, mean, std, mean - half, mean + half, n))
    return out


def export_safety(runs: Sequence[SeasonMetrics], path: str | Path) -> dict[str, Path]:
    """safety.csv holds the summary; safety_replications.csv one row per seed."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    summary = out / "safety.csv"
    _write_rows(summary, ["metric", "mean", "std", "ci95_low", "ci95_high", "replications"],
                [[s.metric, _fmt(s.mean), _fmt(s.std), _fmt(s.ci_low), _fmt(s.ci_high), s.replications]
                 for s in summarize_rates(runs)])
    per_seed = out / "safety_replications.csv"
    _write_rows(per_seed, ["seed", "lots", "k_fp", "k_fh", "k_fq", "q_fp", "q_fh", "q_fq", "done", "destroyed"],
                [[m.seed, m.lot_count, m.k_fp, m.k_fh, m.k_fq, _fmt(m.q_fp), _fmt(m.q_fh), _fmt(m.q_fq),
                  m.done, m.destroyed] for m in runs])
    return {"safety": summary, "safety_replications": per_seed}
