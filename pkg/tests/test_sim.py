import math

import numpy as np
import pytest

from hempchain.domain import OperationUnit as Op
from hempchain.sim import (
    SINGLE_CHAIN,
    TWO_LAYER,
    WITH_BLOCKCHAIN,
    WITHOUT_BLOCKCHAIN,
    BatchQueue,
    ConfigError,
    NoSamples,
    SimConfig,
    ceiling_per_minute,
    export_metrics,
    export_safety,
    nearest_rank,
    run_season,
    waiting_percentiles,
)
from hempchain.sim.season import _TRANSITIONS, TERMINAL, IllegalTransition, LotState, Season

SMALL = SimConfig(lot_count=300)


def test_desk_pools():
    pools = SimConfig().pools()
    assert SimConfig().lots == 1000
    assert pools == {"field_machines": 200, "lab_equipment": 200, "drying_machines": 60,
                     "processing_machines": 40, "validators_per_shard": 4, "regulators": 1}
    assert SimConfig.full().lots == 40000


def test_zeroed_pool_is_a_config_error():
    with pytest.raises(ConfigError, match="regulators"):
        SimConfig(scale=1 / 200)
    with pytest.raises(ConfigError):
        SimConfig.from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        SimConfig(tamper_probability=1.2)


def test_config_round_trip(tmp_path):
    path = tmp_path / "sim.yaml"
    path.write_text("sim:\n  seed: 4\n  stages:\n    drying: [3, 5]\n")
    cfg = SimConfig.load(path)
    assert cfg.seed == 4 and cfg.stages["drying"] == (3, 5)
    assert cfg.stages["plc"] == SimConfig().stages["plc"]
    assert SimConfig.from_mapping(cfg.to_mapping()) == cfg


def test_batch_queue_is_fifo_with_capacity():
    q = BatchQueue(15, 4)
    ticks = [q.assign(t)[0] for t in (0, 1, 2, 3, 4, 5, 14.9, 15)]
    assert ticks == [1, 1, 1, 1, 2, 2, 2, 2]
    assert q.blocks == [(1, 4), (2, 4)]
    assert q.assign(100)[0] == 7  # strictly after submission
    with pytest.raises(ValueError):
        q.assign(50)


def test_ceilings():
    assert ceiling_per_minute(SimConfig(), TWO_LAYER) == pytest.approx(64.0)
    assert ceiling_per_minute(SimConfig(), SINGLE_CHAIN) == pytest.approx(4 / 1.5)


def test_nearest_rank():
    assert nearest_rank([10.0] * 7, 5) == nearest_rank([10.0] * 7, 95) == 10.0
    data = list(range(1, 101))
    assert (nearest_rank(data, 5), nearest_rank(data, 50), nearest_rank(data, 95)) == (5, 50, 95)
    assert nearest_rank([3, 1, 2], 0) == 1
    with pytest.raises(NoSamples):
        nearest_rank([], 50)
    with pytest.raises(ValueError):
        nearest_rank([1], 101)


def test_lot_transitions():
    lot = LotState(0, 0, False, False, False, {})
    lot.advance("cultivating", 0)
    with pytest.raises(IllegalTransition):
        lot.advance("drying", 1)
    assert set(TERMINAL) & set(_TRANSITIONS) == set()


@pytest.fixture(scope="module")
def season():
    s = Season(SMALL, TWO_LAYER, WITH_BLOCKCHAIN)
    return s, s.run()


def test_every_lot_terminates_and_is_counted(season):
    s, m = season
    assert m.done + m.destroyed == SMALL.lots
    for lot in s.lots:
        stages = [stage for stage, _ in lot.history]
        prev = None
        for stage in stages:
            assert stage in _TRANSITIONS[prev]
            prev = stage
        times = [t for _, t in lot.history]
        assert times == sorted(times)


def test_arrivals_match_event_log(season):
    s, m = season
    assert m.transactions == len(s.event_log)
    assert len(m.arrivals[Op.SEED_SOURCING.value]) == SMALL.lots


def test_waits_are_nonnegative_and_ordered(season):
    _, m = season
    for kind in ("online", "onsite", "commit"):
        for op, samples in m.waits(kind).items():
            assert min(samples) >= 0
            p5, p50, p95 = (waiting_percentiles(m, op, p, kind) for p in (5, 50, 95))
            assert p5 <= p50 <= p95
    # online validation of a record never takes longer than its commit
    for op in m.online_waits:
        assert all(v <= c + 1e-12 for v, c in zip(m.online_waits[op], m.commit_latency[op]))
    assert set(m.onsite_waits) == {Op.PRE_HARVEST_TEST.value, Op.HARVEST.value, Op.PLC.value}
    with pytest.raises(NoSamples):
        waiting_percentiles(m, "nothing", 50)


def test_with_blockchain_has_no_false_passes(season):
    _, m = season
    assert (m.k_fp, m.k_fh, m.k_fq) == (0, 0, 0)


def test_zero_tamper_means_zero_false_passes():
    m = run_season(SimConfig(lot_count=300, tamper_probability=0.0), TWO_LAYER, WITHOUT_BLOCKCHAIN)
    assert m.rates() == {"q_fp": 0.0, "q_fh": 0.0, "q_fq": 0.0}
    assert m.online_waits == {} and m.onsite_waits == {}


def test_rates_monotone_in_tamper_probability():
    counts = []
    for p2 in (0.0, 0.15, 0.30, 0.6):
        m = run_season(SimConfig(lot_count=500, tamper_probability=p2, seed=3), TWO_LAYER, WITHOUT_BLOCKCHAIN)
        counts.append((m.k_fp, m.k_fh, m.k_fq))
    for a, b in zip(counts, counts[1:]):
        assert all(x <= y for x, y in zip(a, b))
    assert all(x > 0 for x in counts[-1])


def test_false_pass_lots_continue_down_the_chain():
    cfg = SimConfig(lot_count=500, tamper_probability=1.0, seed=2)
    honest = run_season(SimConfig(lot_count=500, tamper_probability=0.0, seed=2), TWO_LAYER,
                        WITHOUT_BLOCKCHAIN)
    cheating = run_season(cfg, TWO_LAYER, WITHOUT_BLOCKCHAIN)
    assert cheating.destroyed < honest.destroyed
    assert cheating.done + cheating.destroyed == 500


def test_single_chain_mode_runs():
    m = run_season(SimConfig(lot_count=100), SINGLE_CHAIN, WITH_BLOCKCHAIN)
    assert m.done + m.destroyed == 100
    assert m.online_waits and all(min(v) > 0 for v in m.online_waits.values())


def test_reproducible_and_byte_stable(tmp_path, season):
    _, m = season
    again = run_season(SMALL, TWO_LAYER, WITH_BLOCKCHAIN)
    a = export_metrics(m, tmp_path / "a")
    b = export_metrics(again, tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    other = run_season(SMALL.with_seed(1), TWO_LAYER, WITH_BLOCKCHAIN)
    assert other.arrivals != m.arrivals


def test_csv_shapes(tmp_path, season):
    _, m = season
    paths = export_metrics(m, tmp_path)
    rows = paths["arrivals"].read_text().splitlines()
    header = rows[0].split(",")
    assert header[0] == "day" and len(header) == 17
    assert len(rows) - 1 == math.floor(max(max(v) for v in m.arrivals.values())) + 1
    total = sum(sum(int(x) for x in r.split(",")[1:]) for r in rows[1:])
    assert total == m.transactions
    onsite = paths["waits_onsite"].read_text().splitlines()
    assert onsite[0] == "operation,samples,p5_min,p50_min,p95_min"
    assert len(onsite) == 4
    online = paths["waits_online"].read_text().splitlines()
    assert len(online) == 17
    safety = export_safety([m, run_season(SMALL.with_seed(1))], tmp_path)
    lines = safety["safety"].read_text().splitlines()
    assert lines[0] == "metric,mean,std,ci95_low,ci95_high,replications"
    assert [l.split(",")[0] for l in lines[1:]] == ["q_fp", "q_fh", "q_fq"]


def test_common_random_numbers_across_modes():
    a = Season(SimConfig(lot_count=50, seed=9), TWO_LAYER, WITH_BLOCKCHAIN)
    b = Season(SimConfig(lot_count=50, seed=9, tamper_probability=0.1), SINGLE_CHAIN, WITHOUT_BLOCKCHAIN)
    assert [(l.shard, l.thc_violation, l.window_violation) for l in a.lots] == \
        [(l.shard, l.thc_violation, l.window_violation) for l in b.lots]
    for name in a.durations:
        assert np.array_equal(a.durations[name], b.durations[name])
