from __future__ import annotations

import itertools

import pytest

from hempchain.chain import ChainConfig, Ledger, TrustingVerifier, append_root_block, append_shard_block, \
    build_root_block, build_shard_block
from hempchain.canonical import sign
from hempchain.domain import OperationUnit, Registry
from hempchain.node import Node, NodeConfig
from hempchain.samples import PROCESS_ORDER, register_defaults, sample_record

ONLINE_OPS = [op for op in PROCESS_ORDER if op not in
              (OperationUnit.PRE_HARVEST_TEST, OperationUnit.HARVEST, OperationUnit.PLC)]

_counter = itertools.count()


def fake_confirm(payload: bytes):
    return sign(b"regulator-key", payload, "regulator-test")


@pytest.fixture
def registry():
    reg = Registry(seed=7)
    register_defaults(reg)
    return reg


def online_record(registry, product_id="P-1", tag=None):
    """A distinct valid online-only record."""
    n = next(_counter) if tag is None else tag
    op = ONLINE_OPS[n % len(ONLINE_OPS)]
    return sample_record(registry, op, product_id, lot_number=f"LOT-{n}", tag=f"-{n}", created_at=n)


def grow_ledger(registry, shard_heights: dict[int, int], config: ChainConfig | None = None,
                ledger: Ledger | None = None, t0: int = 15) -> Ledger:
    """Append online-only shard blocks until each shard reaches the given height."""
    ledger = ledger or Ledger(config or ChainConfig(), TrustingVerifier())
    t = t0
    for shard, target in sorted(shard_heights.items()):
        while ledger.shard_tip(shard).height < target:
            block = build_shard_block(ledger, shard, [online_record(registry)], [], t)
            append_shard_block(ledger, block)
            t += 15
    return ledger


def cover(ledger: Ledger, upto: dict[int, int], created_at: int = 90):
    """Append a root block covering each listed shard up to the given height."""
    headers = []
    for shard, height in sorted(upto.items()):
        last = ledger.covered_height(shard)
        headers += [ledger.shard_chain(shard)[h].header for h in range(last + 1, height + 1)]
    block = build_root_block(ledger, headers, created_at, fake_confirm)
    append_root_block(ledger, block)
    return block


@pytest.fixture
def node(tmp_path):
    cfg = NodeConfig(seed=3, store_root=str(tmp_path / "store"), data_dir=str(tmp_path / "data"),
                     tamper_probability=0.0)
    n = Node(cfg)
    register_defaults(n.registry)
    return n


# (number, title, passed, details) appended by tests/test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, dict]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, details in sorted(ACCEPTANCE_RESULTS):
        extra = "; ".join(f"{k}={v}" for k, v in details.items())
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
                                    + (f"  [{extra}]" if extra else ""))
