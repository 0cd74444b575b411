"""Block production as seen by the simulator.

Producers fire on a fixed tick grid and take at most ``capacity`` items per
tick, oldest first. Because submissions reach a queue in non-decreasing time
order, the tick an item lands in can be computed on arrival instead of
simulating every (mostly empty) tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SECONDS_PER_DAY, SINGLE_CHAIN, TWO_LAYER, SimConfig


class BatchQueue:
    """FIFO queue drained by a producer firing every ``interval`` time units."""

    def __init__(self, interval: float, capacity: int):
        if interval <= 0 or capacity <= 0:
            raise ValueError("interval and capacity must be positive")
        self.interval = interval
        self.capacity = capacity
        self._tick = 0
        self._used = 0
        self._last_submit = -math.inf
        self.blocks: list[tuple[int, int]] = []  # (tick index, items)

    def assign(self, t: float) -> tuple[int, bool]:
        """Tick index that commits an item submitted at ``t``, and whether it opens a new block."""
        if t < self._last_submit:
            raise ValueError("submissions must arrive in time order")
        self._last_submit = t
        # first tick strictly after submission
        k = max(math.floor(t / self.interval) + 1, self._tick)
        if k == self._tick and self._used >= self.capacity:
            k += 1
        opened = k != self._tick
        if opened:
            self._tick, self._used = k, 0
            self.blocks.append((k, 0))
        self._used += 1
        self.blocks[-1] = (k, self._used)
        return k, opened

    def time_of(self, tick: int) -> float:
        return tick * self.interval


@dataclass
class Submission:
    operation: str
    shard: int
    submitted: float
    validated: float = math.nan
    committed: float = math.nan


@dataclass
class ChainNetwork:
    """Online validation path for one chain mode, in days."""

    mode: str
    config: SimConfig
    queues: list[BatchQueue] = field(init=False)
    root_queue: BatchQueue | None = field(init=False, default=None)
    submissions: list[Submission] = field(init=False, default_factory=list)

    def __post_init__(self):
        cfg = self.config
        if self.mode == TWO_LAYER:
            self.queues = [BatchQueue(cfg.shard_interval_s / SECONDS_PER_DAY, cfg.shard_block_capacity)
                           for _ in range(cfg.shard_count)]
            self.root_queue = BatchQueue(cfg.root_interval_s / SECONDS_PER_DAY, cfg.root_block_capacity)
        elif self.mode == SINGLE_CHAIN:
            self.queues = [BatchQueue(cfg.single_interval_s / SECONDS_PER_DAY, cfg.single_block_capacity)]
        else:
            raise ValueError(f"unknown chain mode {self.mode!r}")

    def queue_for(self, shard: int) -> BatchQueue:
        return self.queues[shard] if self.mode == TWO_LAYER else self.queues[0]

    def submit(self, operation: str, shard: int, now: float) -> tuple[Submission, int, bool]:
        sub = Submission(operation, shard, now)
        queue = self.queue_for(shard)
        tick, opened = queue.assign(now)
        sub.validated = queue.time_of(tick)
        if self.mode == SINGLE_CHAIN:
            sub.committed = sub.validated
        self.submissions.append(sub)
        return sub, tick, opened

    def commit_times(self) -> np.ndarray:
        """Layer-1 commit time of every validated record, sorted."""
        return np.sort(np.array([s.validated for s in self.submissions], dtype=float))


def replay_online(config: SimConfig, mode: str, stream) -> dict[str, list[float]]:
    """Online waits per operation for a recorded ``(time, operation, shard)`` stream."""
    net = ChainNetwork(mode, config)
    for t, op, shard in sorted(stream):
        net.submit(op, shard, t)
    waits: dict[str, list[float]] = {}
    for sub in net.submissions:
        waits.setdefault(sub.operation, []).append(sub.validated - sub.submitted)
    return waits


def ceiling_per_minute(config: SimConfig, mode: str) -> float:
    if mode == TWO_LAYER:
        return config.shard_count * config.shard_block_capacity * 60.0 / config.shard_interval_s
    if mode == SINGLE_CHAIN:
        return config.single_block_capacity * 60.0 / config.single_interval_s
    raise ValueError(f"unknown chain mode {mode!r}")


def windowed_rates(times_days: np.ndarray, window_min: float, start_day: float = 0.0,
                   end_day: float | None = None) -> np.ndarray:
    """Commits per minute in consecutive windows covering [start, end)."""
    times = np.asarray(times_days, dtype=float)
    if end_day is None:
        end_day = float(times.max()) if times.size else start_day
    window = window_min / (24 * 60)
    n = int(math.floor((end_day - start_day) / window + 1e-9))
    if n <= 0:
        return np.zeros(0)
    edges = start_day + window * np.arange(n + 1)
    counts, _ = np.histogram(times, bins=edges)
    return counts / window_min


def saturated_network(config: SimConfig, mode: str, load_factor: float = 1.5,
                      duration_min: float = 600.0, seed: int = 0) -> ChainNetwork:
    """Chain network fed Poisson load at ``load_factor`` x ceiling, spread uniformly over shards."""
    rng = np.random.default_rng(seed)
    rate_per_day = load_factor * ceiling_per_minute(config, mode) * 24 * 60
    horizon = duration_min / (24 * 60)
    count = rng.poisson(rate_per_day * horizon)
    arrivals = np.sort(rng.uniform(0.0, horizon, size=count))
    shards = rng.integers(0, config.shard_count, size=count)
    net = ChainNetwork(mode, config)
    for t, shard in zip(arrivals, shards):
        net.submit("load", int(shard), float(t))
    return net


def measure_throughput(config: SimConfig, mode: str, load_factor: float = 1.5,
                       duration_min: float = 600.0, window_min: float = 60.0,
                       warmup_min: float = 60.0, seed: int = 0) -> np.ndarray:
    """Windowed commit rates (records/min) of a saturated network.

    Windows start after the warm-up and stop at the end of the arrival
    horizon so the backlog drain is excluded.
    """
    net = saturated_network(config, mode, load_factor, duration_min, seed)
    return windowed_rates(net.commit_times(), window_min,
                          start_day=warmup_min / (24 * 60), end_day=duration_min / (24 * 60))
