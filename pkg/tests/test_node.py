import pytest

from hempchain.chain import revalidate
from hempchain.domain import OperationUnit as Op
from hempchain.node import (
    ACCEPTED,
    BUFFERED,
    PENDING_VERIFICATION,
    REJECTED_VALIDATION,
    REJECTED_VERIFICATION,
    Node,
    NodeConfig,
)
from hempchain.samples import sample_record
from hempchain.store import DatabaseTampered

from conftest import online_record


def _submit_many(node, pid, n, shard):
    return [node.submit_record(online_record(node.registry, pid), shard) for _ in range(n)]


def test_ten_records_make_three_blocks(node):
    pid = node.create_product()
    _submit_many(node, pid, 10, 1)
    blocks = node.produce_blocks(45)
    assert [len(b.body) for b in blocks] == [4, 4, 2]
    assert node.ledger.shard_tip(1).height == 3


def test_each_shard_gets_its_own_block(node):
    pid = node.create_product()
    for shard in range(1, 5):
        _submit_many(node, pid, 2, shard)
    blocks = node.produce_blocks(15)
    assert sorted(b.shard_index for b in blocks) == [1, 2, 3, 4]


def test_thirty_headers_give_roots_of_24_and_6(node):
    pid = node.create_product()
    # 30 headers: shards 1-2 get 8 blocks each, shards 3-4 get 7 each
    for shard, blocks in ((1, 8), (2, 8), (3, 7), (4, 7)):
        _submit_many(node, pid, 4 * blocks, shard)
    node.produce_blocks(89)
    node.next_root_tick = 180  # hold the root tick until every header is buffered
    node.produce_blocks(179)
    assert len(node.buffer.headers) == 30
    node.produce_blocks(180 + 90)
    assert [len(r.body) for r in node.ledger.root_chain[1:]] == [24, 6]
    assert revalidate(node.ledger) is None


def test_receipt_lifecycle(node):
    pid = node.create_product()
    rec = online_record(node.registry, pid)
    receipt = node.submit_record(rec, 2)
    assert receipt.status == BUFFERED and receipt.success == 0
    final = node.create_record(online_record(node.registry, pid), 2)
    assert final.status == ACCEPTED and final.success == 1
    assert node.receipts[rec.record_id].status == ACCEPTED
    assert final.shard_height is not None and final.root_height is not None


def test_rejections(node):
    pid = node.create_product()
    unknown = node.submit_record(online_record(node.registry, "P-none"), 1)
    assert unknown.status == REJECTED_VALIDATION
    rec = online_record(node.registry, pid)
    bad = rec.__class__(rec.product_id, rec.lot_number, rec.operation, rec.info, (), (), rec.created_at)
    assert node.submit_record(bad.with_id(), 1).status == REJECTED_VERIFICATION
    node.create_record(rec, 1)
    again = node.submit_record(rec, 1)
    assert again.status == REJECTED_VALIDATION and again.reasons == ("duplicate record",)
    assert node.receipts[rec.record_id].status == ACCEPTED
    with pytest.raises(ValueError):
        node.submit_record(online_record(node.registry, pid), 5)


def test_tampered_onsite_record_is_rejected(node):
    pid = node.create_product()
    rec = sample_record(node.registry, Op.HARVEST, pid)
    receipt = node.create_record(rec, 1, decision=False)
    assert receipt.status == REJECTED_VERIFICATION
    assert node.ledger.locations(pid) == []


def test_live_decision(tmp_path):
    from hempchain.samples import register_defaults
    live = Node(NodeConfig(seed=1, store_root=str(tmp_path / "s")))
    register_defaults(live.registry)
    pid = live.create_product()
    rec = sample_record(live.registry, Op.PLC, pid)
    assert live.create_record(rec, 3).status == PENDING_VERIFICATION
    assert live.decide(rec.record_id, True).status == BUFFERED
    live.run_until_idle()
    assert live.receipts[rec.record_id].status == ACCEPTED
    with pytest.raises(KeyError):
        live.decide(rec.record_id, True)


def test_retrieval_is_ordered_and_verified(node):
    pids = [node.create_product() for _ in range(2)]
    ids = {p: [] for p in pids}
    for n in range(12):
        pid = pids[n % 2]
        rec = online_record(node.registry, pid)
        files = [f"file {n}".encode()] if n % 4 == 0 else []
        ids[pid].append(node.submit_record(rec, 1 + n % 4, files).record_id)
    pending = node.retrieve_records(pids[0])
    assert pending == []  # nothing committed yet
    node.run_until_idle()
    for pid in pids:
        got = node.retrieve_records(pid)
        assert sorted(r.record.record_id for r in got) == sorted(ids[pid])
        keys = [(node.ledger.block_at(r.location).header.created_at, r.location.shard_index,
                 r.location.height, r.location.position) for r in got]
        assert keys == sorted(keys)
        assert all(r.record.product_id == pid for r in got)
    first = node.retrieve_records(pids[0])[0]
    assert first.files == (b"file 0",)
    (node.store.root / first.record.file_refs[0].uri).write_bytes(b"file O")
    with pytest.raises(DatabaseTampered):
        node.retrieve_records(pids[0])


def test_save_and_load_round_trip(node, tmp_path):
    pid = node.create_product()
    for _ in range(6):
        node.submit_record(online_record(node.registry, pid), 2)
    node.produce_blocks(100)
    node.submit_record(online_record(node.registry, pid), 3)
    node.save()
    again = Node.load(node.config)
    assert again.ledger.dump() == node.ledger.dump()
    assert again.status() == node.status()
    assert again.receipts == node.receipts
    node.run_until_idle()
    again.run_until_idle()
    assert again.ledger.dump() == node.ledger.dump()
