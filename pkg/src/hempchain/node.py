"""A single logical full node: record creation, block production and retrieval."""

from __future__ import annotations

import json
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .canonical import KeyedSignature
from .chain import (
    BlockRejected,
    ChainConfig,
    Ledger,
    Location,
    RootBlock,
    ShardBlock,
    ShardHeader,
    VerificationEntry,
    append_root_block,
    append_shard_block,
    build_root_block,
    build_shard_block,
)
from .domain import (
    ParticipantProfile,
    Registry,
    Role,
    TransactionRecord,
    requires_onsite,
    validate_schema,
)
from .poa import (
    UNAPPROVED,
    AuthorityVerifier,
    DispatchError,
    RegulatorPool,
    TamperModel,
    ValidatorPool,
    confirm_root,
    dispatch_onsite,
)
from .store import FileStore

PENDING_VERIFICATION = "pending-verification"
BUFFERED = "buffered"
IN_SHARD_BLOCK = "in-shard-block"
ACCEPTED = "accepted"
REJECTED_VERIFICATION = "rejected-verification"
REJECTED_VALIDATION = "rejected-validation"
FINAL_STATUSES = {ACCEPTED, REJECTED_VERIFICATION, REJECTED_VALIDATION}


@dataclass(frozen=True)
class NodeConfig:
    chain: ChainConfig = field(default_factory=ChainConfig)
    validators_per_shard: int = 175
    regulators: int = 50
    seed: int = 0
    store_root: str = "store"
    data_dir: str | None = None
    # None selects live mode: on-site verdicts arrive through decide()
    tamper_probability: float | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Path | None = None) -> "NodeConfig":
        data = dict(data)
        chain = ChainConfig(**data.pop("chain", {}))
        known = {"validators_per_shard", "regulators", "seed", "store_root", "data_dir", "tamper_probability"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown node config keys: {sorted(unknown)}")
        if base is not None:
            for key in ("store_root", "data_dir"):
                if data.get(key) is not None and not Path(data[key]).is_absolute():
                    data[key] = str(base / data[key])
        return cls(chain=chain, **data)

    @classmethod
    def load(cls, path: str | Path) -> "NodeConfig":
        path = Path(path)
        data = yaml.safe_load(path.read_text()) or {}
        return cls.from_mapping(data.get("node", data), base=path.parent)


@dataclass
class CreationReceipt:
    record_id: str
    status: str
    shard_index: int | None
    shard_height: int | None = None
    root_height: int | None = None
    reasons: tuple[str, ...] = ()

    @property
    def success(self) -> int:
        """Outcome flag U: 1 once the covering root block validated."""
        return int(self.status == ACCEPTED)

    def to_canonical(self) -> dict:
        return {
            "record_id": self.record_id,
            "status": self.status,
            "shard_index": self.shard_index,
            "shard_height": self.shard_height,
            "root_height": self.root_height,
            "reasons": list(self.reasons),
            "U": self.success,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "CreationReceipt":
        return cls(data["record_id"], data["status"], data["shard_index"], data["shard_height"],
                   data["root_height"], tuple(data["reasons"]))


@dataclass
class PendingBuffer:
    shards: dict[int, deque] = field(default_factory=dict)
    headers: deque = field(default_factory=deque)

    @classmethod
    def for_shards(cls, shard_count: int) -> "PendingBuffer":
        return cls({i: deque() for i in range(1, shard_count + 1)})

    def is_empty(self) -> bool:
        return not self.headers and not any(self.shards.values())


@dataclass(frozen=True)
class RetrievedRecord:
    record: TransactionRecord
    location: Location
    files: tuple[bytes, ...]


class Node:
    def __init__(self, config: NodeConfig, decision_source=None):
        self.config = config
        chain = config.chain
        self.registry = Registry(seed=config.seed)
        self.validators = ValidatorPool.create(chain.shard_count, config.validators_per_shard, config.seed)
        self.regulators = RegulatorPool.create(config.regulators, config.seed)
        self.verifier = AuthorityVerifier(self.registry, self.validators, self.regulators)
        self.ledger = Ledger(chain, self.verifier)
        self.store = FileStore(config.store_root)
        self.rng = random.Random(config.seed)
        if decision_source is None and config.tamper_probability is not None:
            decision_source = TamperModel(config.tamper_probability, seed=config.seed)
        self.decision_source = decision_source
        self.buffer = PendingBuffer.for_shards(chain.shard_count)
        self.pending_onsite: dict[str, tuple[TransactionRecord, int]] = {}
        self.receipts: dict[str, CreationReceipt] = {}
        self.products: list[str] = []
        self.clock = 0
        self.next_shard_tick = chain.shard_interval
        self.next_root_tick = chain.root_interval
        self._lock = threading.RLock()

    # -- identities and products -------------------------------------------

    def register_participant(self, role: Role | str, info: Mapping[str, str],
                             participant_id: str | None = None) -> tuple[ParticipantProfile, bytes]:
        role = Role(role) if isinstance(role, str) else role
        with self._lock:
            if participant_id is None:
                participant_id = f"{role.label.lower()}-{len(self.registry.profiles) + 1:04d}"
            profile = ParticipantProfile(participant_id, role, dict(info))
            secret = self.registry.register(profile)
            return profile, secret

    def create_product(self, product_id: str | None = None) -> str:
        with self._lock:
            if product_id is None:
                product_id = f"P-{len(self.products) + 1:06d}"
            if not product_id:
                raise ValueError("product id must be non-empty")
            if product_id in self.products:
                raise ValueError(f"duplicate product id {product_id!r}")
            self.products.append(product_id)
            return product_id

    # -- record creation ----------------------------------------------------

    def submit_record(self, record: TransactionRecord, shard_index: int,
                      files: Iterable[bytes] = (), decision=None) -> CreationReceipt:
        """First half of record creation: offload files, verify, buffer."""
        if not 1 <= shard_index <= self.config.chain.shard_count:
            raise ValueError(f"unknown shard index {shard_index}")
        with self._lock:
            refs = [self.store.put_file(data) for data in files]
            if refs:
                record = record.with_files(refs)
            elif not record.record_id:
                record = record.with_id()
            if record.record_id in self.receipts:
                return self._receipt(record.record_id, REJECTED_VALIDATION, shard_index,
                                     reasons=("duplicate record",), store=False)
            if record.product_id not in self.products:
                return self._receipt(record.record_id, REJECTED_VALIDATION, shard_index,
                                     reasons=(f"unknown product {record.product_id}",))
            violations = validate_schema(record, self.registry)
            if violations:
                return self._receipt(record.record_id, REJECTED_VERIFICATION, shard_index,
                                     reasons=tuple(violations))
            if not requires_onsite(record.operation):
                self.buffer.shards[shard_index].append((record, None))
                return self._receipt(record.record_id, BUFFERED, shard_index)
            decision = decision if decision is not None else self.decision_source
            if decision is None:
                self.pending_onsite[record.record_id] = (record, shard_index)
                return self._receipt(record.record_id, PENDING_VERIFICATION, shard_index)
            return self._dispatch(record, shard_index, decision)

    def decide(self, record_id: str, approve: bool) -> CreationReceipt:
        """Deliver a live on-site verdict for a pending regulated record."""
        with self._lock:
            if record_id not in self.pending_onsite:
                raise KeyError(f"no pending on-site verification for {record_id}")
            record, shard_index = self.pending_onsite.pop(record_id)
            return self._dispatch(record, shard_index, bool(approve))

    def _dispatch(self, record, shard_index, decision) -> CreationReceipt:
        try:
            outcome = dispatch_onsite(self.validators, shard_index, record, decision, self.rng)
        except DispatchError as exc:
            self.pending_onsite[record.record_id] = (record, shard_index)
            return self._receipt(record.record_id, PENDING_VERIFICATION, shard_index, reasons=(str(exc),))
        if not outcome.approved:
            return self._receipt(record.record_id, REJECTED_VERIFICATION, shard_index, reasons=(UNAPPROVED,))
        entry = VerificationEntry(record.record_id, outcome.signature)
        self.buffer.shards[shard_index].append((record, entry))
        return self._receipt(record.record_id, BUFFERED, shard_index)

    def _receipt(self, record_id, status, shard_index, reasons=(), store=True) -> CreationReceipt:
        receipt = CreationReceipt(record_id, status, shard_index, reasons=tuple(reasons))
        if store:
            self.receipts[record_id] = receipt
        return receipt

    def create_record(self, record: TransactionRecord, shard_index: int,
                      files: Iterable[bytes] = (), decision=None) -> CreationReceipt:
        """Run the full creation pipeline and return the receipt once final.

        Block production is driven forward tick by tick until the covering
        root block is appended.  A live-mode regulated record without a
        verdict returns its pending receipt immediately.
        """
        receipt = self.submit_record(record, shard_index, files, decision)
        with self._lock:
            while receipt.status in (BUFFERED, IN_SHARD_BLOCK):
                self.produce_blocks(min(self.next_shard_tick, self.next_root_tick))
                receipt = self.receipts[receipt.record_id]
        return receipt

    # -- block production ---------------------------------------------------

    def produce_blocks(self, now: int) -> list[ShardBlock | RootBlock]:
        """Fire every shard and root tick due up to ``now``."""
        produced: list[ShardBlock | RootBlock] = []
        with self._lock:
            if now < self.clock:
                raise ValueError("tick times must be monotone")
            while min(self.next_shard_tick, self.next_root_tick) <= now:
                if self.next_shard_tick <= self.next_root_tick:
                    t = self.next_shard_tick
                    produced += self._shard_tick(t)
                    self.next_shard_tick += self.config.chain.shard_interval
                else:
                    t = self.next_root_tick
                    produced += self._root_tick(t)
                    self.next_root_tick += self.config.chain.root_interval
                self.clock = t
            self.clock = now
        return produced

    def run_until_idle(self, max_ticks: int = 1_000_000) -> list[ShardBlock | RootBlock]:
        produced = []
        for _ in range(max_ticks):
            if self.buffer.is_empty():
                break
            produced += self.produce_blocks(min(self.next_shard_tick, self.next_root_tick))
        return produced

    def _shard_tick(self, t: int) -> list[ShardBlock]:
        blocks = []
        capacity = self.config.chain.shard_block_capacity
        for shard_index, queue in self.buffer.shards.items():
            if not queue:
                continue
            batch = [queue.popleft() for _ in range(min(capacity, len(queue)))]
            records = [r for r, _ in batch]
            entries = [e for _, e in batch if e is not None]
            block = build_shard_block(self.ledger, shard_index, records, entries, t)
            try:
                append_shard_block(self.ledger, block)
            except BlockRejected as exc:
                for record in records:
                    self._receipt(record.record_id, REJECTED_VALIDATION, shard_index, reasons=(exc.clause,))
                continue
            for record in records:
                receipt = self.receipts[record.record_id]
                receipt.status = IN_SHARD_BLOCK
                receipt.shard_height = block.height
            self.buffer.headers.append(block.header)
            blocks.append(block)
        return blocks

    def _root_tick(self, t: int) -> list[RootBlock]:
        if not self.buffer.headers:
            return []
        capacity = self.config.chain.root_block_capacity
        headers = [self.buffer.headers.popleft() for _ in range(min(capacity, len(self.buffer.headers)))]

        def is_validated(header: ShardHeader) -> bool:
            chain = self.ledger.shard_chain(header.shard_index)
            return header.height < len(chain) and chain[header.height].header == header

        def confirm(payload: bytes) -> KeyedSignature:
            return confirm_root(self.regulators, headers, is_validated, self.rng, payload)

        block = build_root_block(self.ledger, headers, t, confirm)
        try:
            append_root_block(self.ledger, block)
        except BlockRejected as exc:
            for header in headers:
                for record in self.ledger.shard_chain(header.shard_index)[header.height].body:
                    self.receipts[record.record_id].status = REJECTED_VALIDATION
                    self.receipts[record.record_id].reasons = (exc.clause,)
            return []
        for header in headers:
            for record in self.ledger.shard_chain(header.shard_index)[header.height].body:
                receipt = self.receipts[record.record_id]
                receipt.status = ACCEPTED
                receipt.root_height = block.height
        return [block]

    # -- retrieval ----------------------------------------------------------

    def retrieve_records(self, product_id: str) -> list[RetrievedRecord]:
        """Committed history of a product with every anchored file verified.

        Any tampered file aborts the whole retrieval with ``DatabaseTampered``.
        """
        with self._lock:
            out = []
            for loc in self.ledger.locations(product_id):
                record = self.ledger.record_at(loc)
                files = tuple(self.store.get_verified(ref) for ref in record.file_refs)
                out.append(RetrievedRecord(record, loc, files))
            return out

    def status(self) -> dict:
        with self._lock:
            return {
                "clock": self.clock,
                "root_height": self.ledger.root_tip.height,
                "shard_heights": [self.ledger.shard_tip(i).height
                                  for i in range(1, self.config.chain.shard_count + 1)],
                "covered_heights": list(self.ledger.coverage[-1]),
                "root_tip": self.ledger.root_tip.hash().hex(),
                "pending_onsite": len(self.pending_onsite),
                "buffered_records": sum(len(q) for q in self.buffer.shards.values()),
                "buffered_headers": len(self.buffer.headers),
                "products": len(self.products),
                "participants": len(self.registry.profiles),
            }

    # -- persistence --------------------------------------------------------

    def save(self, data_dir: str | Path | None = None) -> Path:
        data_dir = Path(data_dir or self.config.data_dir or ".")
        data_dir.mkdir(parents=True, exist_ok=True)
        with self._lock:
            (data_dir / "ledger.dump").write_bytes(self.ledger.dump())
            state = {
                "clock": self.clock,
                "next_shard_tick": self.next_shard_tick,
                "next_root_tick": self.next_root_tick,
                "participants": [p.to_canonical() for p in self.registry.profiles.values()],
                "products": self.products,
                "receipts": [r.to_canonical() for r in self.receipts.values()],
                "pending_onsite": [
                    {"record": r.to_canonical(), "shard": s} for r, s in self.pending_onsite.values()
                ],
                "shard_buffers": {
                    str(i): [{"record": r.to_canonical(), "verification": e.to_canonical() if e else None}
                             for r, e in q]
                    for i, q in self.buffer.shards.items()
                },
                "header_buffer": [h.to_canonical() for h in self.buffer.headers],
                "rng": _rng_state(self.rng),
            }
            tmp = data_dir / "state.json.tmp"
            tmp.write_text(json.dumps(state, sort_keys=True, indent=1))
            tmp.replace(data_dir / "state.json")
        return data_dir

    @classmethod
    def load(cls, config: NodeConfig, data_dir: str | Path | None = None, decision_source=None) -> "Node":
        """Restore a saved node; the ledger dump is fully revalidated on the way in."""
        node = cls(config, decision_source)
        data_dir = Path(data_dir or config.data_dir or ".")
        state_path = data_dir / "state.json"
        if not state_path.exists():
            return node
        state = json.loads(state_path.read_text())
        for profile in state["participants"]:
            node.registry.register(ParticipantProfile.from_canonical(profile))
        node.ledger = Ledger.load((data_dir / "ledger.dump").read_bytes(), node.verifier)
        node.products = list(state["products"])
        node.receipts = {r["record_id"]: CreationReceipt.from_canonical(r) for r in state["receipts"]}
        node.pending_onsite = {
            item["record"]["record_id"]: (TransactionRecord.from_canonical(item["record"]), item["shard"])
            for item in state["pending_onsite"]
        }
        for key, items in state["shard_buffers"].items():
            node.buffer.shards[int(key)] = deque(
                (TransactionRecord.from_canonical(it["record"]),
                 VerificationEntry.from_canonical(it["verification"]) if it["verification"] else None)
                for it in items
            )
        node.buffer.headers = deque(ShardHeader.from_canonical(h) for h in state["header_buffer"])
        node.clock = state["clock"]
        node.next_shard_tick = state["next_shard_tick"]
        node.next_root_tick = state["next_root_tick"]
        version, internal, gauss = state["rng"]
        node.rng.setstate((version, tuple(internal), gauss))
        return node


def _rng_state(rng: random.Random) -> list:
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]
