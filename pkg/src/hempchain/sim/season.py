"""Discrete-event model of one hemp season.

Lots run as SimPy processes competing for machine pools. Regulated
checkpoints (pre-harvest test, harvest, PLC) wait for on-site verification,
and every record is then submitted to the chain model for online validation.

Three independent random streams keep comparisons fair. One stream holds the
lot attributes (shard, true violations, tamper uniforms). Another holds the
stage durations. The third holds the service times. Changing p2 or the chain
mode therefore leaves each lot's violations and stage durations unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import simpy

from ..domain import OperationUnit as Op
from .chainmodel import ChainNetwork, Submission
from .config import (
    CHAIN_MODES,
    INTEGRITY_MODES,
    SINGLE_CHAIN,
    TWO_LAYER,
    WITH_BLOCKCHAIN,
    WITHOUT_BLOCKCHAIN,
    ConfigError,
    SimConfig,
)
from .metrics import SeasonMetrics

STAGES = ("cultivating", "sampled", "tested", "harvesting", "drying", "extracting",
          "winterizing", "plc", "done", "destroyed")
TERMINAL = ("done", "destroyed")
_TRANSITIONS = {
    None: {"cultivating"},
    "cultivating": {"sampled"},
    "sampled": {"tested"},
    "tested": {"harvesting", "destroyed"},
    # a failed harvest-window check sends the lot back for a retest
    "harvesting": {"tested", "drying"},
    "drying": {"extracting"},
    "extracting": {"winterizing"},
    "winterizing": {"plc"},
    "plc": {"done", "destroyed"},
}

CHECKPOINT_THC = "thc"
CHECKPOINT_WINDOW = "harvest_window"
CHECKPOINT_FINAL = "final_thc"


class IllegalTransition(RuntimeError):
    pass


@dataclass
class LotState:
    lot_id: int
    shard: int
    thc_violation: bool
    window_violation: bool
    final_violation: bool
    tampered: dict[str, bool]
    stage: str | None = None
    history: list[tuple[str, float]] = field(default_factory=list)

    def advance(self, stage: str, now: float) -> None:
        if stage not in _TRANSITIONS.get(self.stage, ()):
            raise IllegalTransition(f"lot {self.lot_id}: {self.stage} -> {stage}")
        self.stage = stage
        self.history.append((stage, now))

    @property
    def terminal(self) -> bool:
        return self.stage in TERMINAL


class Season:
    def __init__(self, config: SimConfig, chain_mode: str, integrity_mode: str):
        if chain_mode not in CHAIN_MODES:
            raise ConfigError(f"unknown chain mode {chain_mode!r}")
        if integrity_mode not in INTEGRITY_MODES:
            raise ConfigError(f"unknown integrity mode {integrity_mode!r}")
        self.config = config
        self.chain_mode = chain_mode
        self.integrity_mode = integrity_mode
        self.env = simpy.Environment()
        pools = config.pools()
        self.field = simpy.Resource(self.env, pools["field_machines"])
        self.lab = simpy.Resource(self.env, pools["lab_equipment"])
        self.dryers = simpy.Resource(self.env, pools["drying_machines"])
        self.processors = simpy.Resource(self.env, pools["processing_machines"])
        self.regulators = simpy.Resource(self.env, pools["regulators"])
        self.validators = [simpy.Resource(self.env, pools["validators_per_shard"])
                           for _ in range(config.shard_count)]
        self.chain = ChainNetwork(chain_mode, config) if integrity_mode == WITH_BLOCKCHAIN else None
        self._open_blocks: dict[tuple[int, int], list[Submission]] = {}

        attr_ss, dur_ss, svc_ss = np.random.SeedSequence(config.seed).spawn(3)
        self.service_rng = np.random.default_rng(svc_ss)
        self.lots = self._draw_lots(np.random.default_rng(attr_ss))
        self.durations = self._draw_durations(np.random.default_rng(dur_ss))
        self.metrics = SeasonMetrics(chain_mode, integrity_mode, config.seed, config.lots)
        self.event_log: list[tuple[float, int, str]] = []

    def _draw_lots(self, rng: np.random.Generator) -> list[LotState]:
        cfg = self.config
        k = cfg.lots
        shards = rng.integers(0, cfg.shard_count, size=k)
        flags = rng.random((3, k)) < np.array([[cfg.p_thc], [cfg.p_harvest_window], [cfg.p_final_thc]])
        uniforms = rng.random((3, k))
        tamper = uniforms < cfg.tamper_probability
        lots = []
        for i in range(k):
            # only a lot that truly violates has anything to hide
            lots.append(LotState(
                lot_id=i,
                shard=int(shards[i]),
                thc_violation=bool(flags[0, i]),
                window_violation=bool(flags[1, i]),
                final_violation=bool(flags[2, i]),
                tampered={
                    CHECKPOINT_THC: bool(flags[0, i] and tamper[0, i]),
                    CHECKPOINT_WINDOW: bool(flags[1, i] and tamper[1, i]),
                    CHECKPOINT_FINAL: bool(flags[2, i] and tamper[2, i]),
                },
            ))
        return lots

    def _draw_durations(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        k = self.config.lots
        stages = self.config.stages
        out = {name: rng.uniform(lo, hi, size=k) for name, (lo, hi) in sorted(stages.items())}
        out["retest"] = rng.uniform(*stages["pre_harvest_test"], size=k)
        out["reharvest"] = rng.uniform(*stages["harvest"], size=k)
        return out

    def run(self) -> SeasonMetrics:
        for lot in self.lots:
            self.env.process(self._lot(lot))
        self.env.run()
        m = self.metrics
        m.end_time = float(self.env.now)
        for lot in self.lots:
            if not lot.terminal:
                raise RuntimeError(f"lot {lot.lot_id} ended in non-terminal stage {lot.stage}")
        m.done = sum(lot.stage == "done" for lot in self.lots)
        m.destroyed = sum(lot.stage == "destroyed" for lot in self.lots)
        if self.chain is not None:
            for sub in self.chain.submissions:
                m.online_waits.setdefault(sub.operation, []).append(sub.validated - sub.submitted)
                m.commit_latency.setdefault(sub.operation, []).append(sub.committed - sub.submitted)
            m.commit_times = self.chain.commit_times().tolist()
            m.submissions = [(s.submitted, s.operation, s.shard) for s in self.chain.submissions]
        return m

    # -- records -------------------------------------------------------

    def _transaction(self, lot: LotState, op: Op) -> None:
        now = float(self.env.now)
        self.metrics.arrivals.setdefault(op.value, []).append(now)
        self.event_log.append((now, lot.lot_id, op.value))

    def _submit(self, lot: LotState, op: Op) -> None:
        if self.chain is None:
            return
        sub, tick, opened = self.chain.submit(op.value, lot.shard, float(self.env.now))
        if self.chain_mode != TWO_LAYER:
            return
        key = (lot.shard, tick)
        if opened:
            self._open_blocks[key] = []
            self.env.process(self._confirm_shard_block(key, sub.validated))
        self._open_blocks[key].append(sub)

    def _confirm_shard_block(self, key, block_time: float):
        yield self.env.timeout(block_time - self.env.now)
        with self.regulators.request() as req:
            yield req
            yield self.env.timeout(self.service_rng.exponential(self.config.confirmation_mean_days))
        tick, _ = self.chain.root_queue.assign(float(self.env.now))
        committed = self.chain.root_queue.time_of(tick)
        for sub in self._open_blocks.pop(key):
            sub.committed = committed

    def _record(self, lot: LotState, op: Op):
        self._transaction(lot, op)
        self._submit(lot, op)

    def _onsite(self, lot: LotState, op: Op):
        if self.chain_mode == TWO_LAYER:
            pool, mean = self.validators[lot.shard], self.config.onsite_mean_days
        else:
            pool, mean = self.regulators, self.config.single_chain_verification_mean_days
        requested = self.env.now
        with pool.request() as req:
            yield req
            yield self.env.timeout(self.service_rng.exponential(mean))
        self.metrics.onsite_waits.setdefault(op.value, []).append(self.env.now - requested)

    def _false_pass(self, checkpoint: str) -> None:
        # the ledger path must never reach here
        assert self.integrity_mode == WITHOUT_BLOCKCHAIN, "false pass recorded with blockchain"
        if checkpoint == CHECKPOINT_THC:
            self.metrics.k_fp += 1
        elif checkpoint == CHECKPOINT_WINDOW:
            self.metrics.k_fh += 1
        else:
            self.metrics.k_fq += 1

    def _regulated(self, lot: LotState, op: Op, checkpoint: str | None, violation: bool):
        """Run a regulated checkpoint; the generator's value is True when the lot passes."""
        self._transaction(lot, op)
        tampered = checkpoint is not None and lot.tampered[checkpoint]
        if self.integrity_mode == WITHOUT_BLOCKCHAIN:
            if violation and tampered:
                self._false_pass(checkpoint)
                return True
            return not violation
        yield from self._onsite(lot, op)
        if tampered:
            # the inspector sees the true state; the record is unapproved
            return False
        self._submit(lot, op)
        return not violation

    # -- lot life cycle ------------------------------------------------

    def _hold(self, pool: simpy.Resource, duration: float):
        with pool.request() as req:
            yield req
            yield self.env.timeout(duration)

    def _lot(self, lot: LotState):
        d = {name: float(values[lot.lot_id]) for name, values in self.durations.items()}
        env = self.env
        yield env.timeout(d["start"])
        self._record(lot, Op.SEED_SOURCING)
        self._record(lot, Op.SEED_PICKUP)
        yield env.timeout(d["seed_transit"])
        self._record(lot, Op.SEED_ARRIVAL)
        # germination with its holding period runs alongside soil preparation
        yield env.timeout(max(d["germination"] + d["holding"], d["soil_preparation"]))
        yield from self._hold(self.field, d["transplant"])
        self._record(lot, Op.GERMINATION_FIELD_PREPARATION)
        lot.advance("cultivating", env.now)
        yield env.timeout(d["cultivation"])
        self._record(lot, Op.CULTIVATION)
        lot.advance("sampled", env.now)
        self._record(lot, Op.PRE_HARVEST_SAMPLE)
        yield from self._hold(self.lab, d["pre_harvest_test"])
        lot.advance("tested", env.now)
        passed = yield from self._regulated(lot, Op.PRE_HARVEST_TEST, CHECKPOINT_THC, lot.thc_violation)
        if not passed:
            lot.advance("destroyed", env.now)
            return
        yield env.timeout(d["harvest_delay"])
        lot.advance("harvesting", env.now)
        yield from self._hold(self.field, d["harvest"])
        passed = yield from self._regulated(lot, Op.HARVEST, CHECKPOINT_WINDOW, lot.window_violation)
        if not passed:
            # outside the window: retest, then harvest again inside it
            yield from self._hold(self.lab, d["retest"])
            lot.advance("tested", env.now)
            yield from self._regulated(lot, Op.PRE_HARVEST_TEST, None, False)
            lot.advance("harvesting", env.now)
            yield from self._hold(self.field, d["reharvest"])
            yield from self._regulated(lot, Op.HARVEST, None, False)
        self._record(lot, Op.IH_PICKUP)
        yield env.timeout(d["ih_transit"])
        self._record(lot, Op.IH_ARRIVAL)
        lot.advance("drying", env.now)
        yield from self._hold(self.dryers, d["drying"])
        self._record(lot, Op.DRYING_STABILIZING)
        self._record(lot, Op.DRIED_IH_PICKUP)
        yield env.timeout(d["dried_transit"])
        self._record(lot, Op.DRIED_IH_ARRIVAL)
        lot.advance("extracting", env.now)
        yield from self._hold(self.processors, d["extraction"])
        self._record(lot, Op.EXTRACTION)
        lot.advance("winterizing", env.now)
        yield from self._hold(self.processors, d["winterization"])
        self._record(lot, Op.WINTERIZATION)
        lot.advance("plc", env.now)
        yield from self._hold(self.processors, d["plc"])
        passed = yield from self._regulated(lot, Op.PLC, CHECKPOINT_FINAL, lot.final_violation)
        lot.advance("done" if passed else "destroyed", env.now)


def run_season(config: SimConfig, chain_mode: str = TWO_LAYER,
               integrity_mode: str = WITH_BLOCKCHAIN) -> SeasonMetrics:
    return Season(config, chain_mode, integrity_mode).run()


def run_replications(config: SimConfig, chain_mode: str, integrity_mode: str,
                     seeds) -> list[SeasonMetrics]:
    return [run_season(config.with_seed(int(s)), chain_mode, integrity_mode) for s in seeds]


__all__ = ["LotState", "Season", "run_season", "run_replications", "STAGES", "SINGLE_CHAIN", "TWO_LAYER"]
