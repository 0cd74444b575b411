"""Two-layer chain: shard blocks, root blocks and the replicated ledger.

Shard chains carry records; the root chain periodically covers new shard
headers.  Block hashes are taken over headers only.  The header commits to
the body through ``merkle_root`` (shard) or ``body_hash`` (root).

Every chain starts with an implicit genesis block at height 0 whose
``prev_hash`` is the all-zero digest.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .canonical import (
    ZERO_DIGEST,
    Digest,
    KeyedSignature,
    canonical_decode,
    canonical_encode,
    hash_value,
)
from .domain import TransactionRecord, requires_onsite

DUMP_FORMAT = "hempchain-ledger/1"


class BlockRejected(Exception):
    """A block failed validation; ``clause`` names the failed condition."""

    def __init__(self, clause: str, block=None):
        super().__init__(clause)
        self.clause = clause
        self.block = block


@dataclass(frozen=True)
class ChainConfig:
    shard_count: int = 4
    shard_block_capacity: int = 4
    root_block_capacity: int = 24
    shard_interval: int = 15
    root_interval: int = 90

    def __post_init__(self):
        for name in ("shard_count", "shard_block_capacity", "root_block_capacity",
                     "shard_interval", "root_interval"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.root_interval < self.shard_interval:
            raise ValueError("root_interval must be >= shard_interval")

    def to_canonical(self) -> dict:
        return {
            "shard_count": self.shard_count,
            "shard_block_capacity": self.shard_block_capacity,
            "root_block_capacity": self.root_block_capacity,
            "shard_interval": self.shard_interval,
            "root_interval": self.root_interval,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "ChainConfig":
        return cls(**{k: int(v) for k, v in data.items()})


@dataclass(frozen=True)
class ShardHeader:
    shard_index: int
    height: int
    prev_hash: Digest
    created_at: int
    merkle_root: Digest

    def to_canonical(self) -> dict:
        return {
            "shard_index": self.shard_index,
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "created_at": self.created_at,
            "merkle_root": self.merkle_root.hex(),
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "ShardHeader":
        return cls(
            shard_index=int(data["shard_index"]),
            height=int(data["height"]),
            prev_hash=Digest.from_hex(data["prev_hash"]),
            created_at=int(data["created_at"]),
            merkle_root=Digest.from_hex(data["merkle_root"]),
        )

    def hash(self) -> Digest:
        return hash_value(self)


@dataclass(frozen=True)
class VerificationEntry:
    """On-site approval for one record of a shard block."""

    record_id: str
    signature: KeyedSignature

    def to_canonical(self) -> dict:
        return {"record_id": self.record_id, "signature": self.signature.to_canonical()}

    @classmethod
    def from_canonical(cls, data: Mapping) -> "VerificationEntry":
        return cls(data["record_id"], KeyedSignature.from_canonical(data["signature"]))


@dataclass(frozen=True)
class ShardBlock:
    header: ShardHeader
    body: tuple[TransactionRecord, ...] = ()
    verification: tuple[VerificationEntry, ...] = ()

    @property
    def shard_index(self) -> int:
        return self.header.shard_index

    @property
    def height(self) -> int:
        return self.header.height

    def hash(self) -> Digest:
        return self.header.hash()

    def verification_for(self, record_id: str) -> KeyedSignature | None:
        for entry in self.verification:
            if entry.record_id == record_id:
                return entry.signature
        return None

    def to_canonical(self) -> dict:
        return {
            "kind": "shard",
            "header": self.header.to_canonical(),
            "body": [r.to_canonical() for r in self.body],
            "verification": [v.to_canonical() for v in self.verification],
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "ShardBlock":
        return cls(
            header=ShardHeader.from_canonical(data["header"]),
            body=tuple(TransactionRecord.from_canonical(r) for r in data["body"]),
            verification=tuple(VerificationEntry.from_canonical(v) for v in data["verification"]),
        )


@dataclass(frozen=True)
class RootHeader:
    height: int
    prev_hash: Digest
    created_at: int
    body_hash: Digest

    def to_canonical(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "created_at": self.created_at,
            "body_hash": self.body_hash.hex(),
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "RootHeader":
        return cls(
            height=int(data["height"]),
            prev_hash=Digest.from_hex(data["prev_hash"]),
            created_at=int(data["created_at"]),
            body_hash=Digest.from_hex(data["body_hash"]),
        )

    def hash(self) -> Digest:
        return hash_value(self)


@dataclass(frozen=True)
class RootBlock:
    header: RootHeader
    body: tuple[ShardHeader, ...] = ()
    confirmation: KeyedSignature | None = None

    @property
    def height(self) -> int:
        return self.header.height

    def hash(self) -> Digest:
        return self.header.hash()

    def highest_per_shard(self) -> dict[int, ShardHeader]:
        """``ob_i`` for every shard this block includes."""
        best: dict[int, ShardHeader] = {}
        for h in self.body:
            if h.shard_index not in best or h.height > best[h.shard_index].height:
                best[h.shard_index] = h
        return best

    def to_canonical(self) -> dict:
        return {
            "kind": "root",
            "header": self.header.to_canonical(),
            "body": [h.to_canonical() for h in self.body],
            "confirmation": self.confirmation.to_canonical() if self.confirmation else None,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "RootBlock":
        conf = data.get("confirmation")
        return cls(
            header=RootHeader.from_canonical(data["header"]),
            body=tuple(ShardHeader.from_canonical(h) for h in data["body"]),
            confirmation=KeyedSignature.from_canonical(conf) if conf else None,
        )


def merkle_root(body: Sequence[TransactionRecord], verification: Sequence[VerificationEntry] | None) -> Digest:
    """Digest over all record contents, all record signatures and the verification part."""
    if not body:
        raise ValueError("merkle root of an empty body is undefined")
    infos = []
    signatures = []
    for record in body:
        content = record.to_canonical()
        signatures.append(content.pop("signatures"))
        infos.append(content)
    return hash_value({
        "infos": infos,
        "signatures": signatures,
        "verification": [v.to_canonical() for v in verification] if verification else None,
    })


def root_body_hash(body: Sequence[ShardHeader], confirmation: KeyedSignature | None) -> Digest:
    return hash_value({"body": list(body), "confirmation": confirmation})


def confirmation_payload(height: int, prev_hash: Digest, created_at: int, body: Sequence[ShardHeader]) -> bytes:
    """Bytes a regulator signs to confirm a root block."""
    return canonical_encode({
        "headers": list(body),
        "height": height,
        "prev_hash": prev_hash,
        "created_at": created_at,
    })


def genesis_shard(shard_index: int) -> ShardBlock:
    return ShardBlock(ShardHeader(shard_index, 0, ZERO_DIGEST, 0, ZERO_DIGEST))


def genesis_root() -> RootBlock:
    return RootBlock(RootHeader(0, ZERO_DIGEST, 0, ZERO_DIGEST))


class Verifier(Protocol):
    def record_verified(self, shard_index: int, record: TransactionRecord,
                        onsite_signature: KeyedSignature | None) -> bool: ...

    def confirmation_valid(self, payload: bytes, signature: KeyedSignature) -> bool: ...


class TrustingVerifier:
    """Accepts every record and confirmation; structural checks only."""

    def record_verified(self, shard_index, record, onsite_signature):
        return requires_onsite(record.operation) == (onsite_signature is not None)

    def confirmation_valid(self, payload, signature):
        return True


@dataclass(frozen=True)
class Location:
    shard_index: int
    height: int
    position: int


@dataclass(frozen=True)
class Failure:
    """First failing block found while replaying a ledger."""

    kind: str  # "shard" | "root" | "parse"
    shard_index: int | None
    height: int | None
    step: int
    reason: str


class Ledger:
    """Root chain plus ``shard_count`` shard chains, genesis blocks included.

    Only validated blocks are ever stored, so a stored predecessor is a
    validated predecessor.
    """

    def __init__(self, config: ChainConfig, verifier: Verifier | None = None):
        self.config = config
        self.verifier = verifier or TrustingVerifier()
        self.root_chain: list[RootBlock] = [genesis_root()]
        self.shard_chains: list[list[ShardBlock]] = [
            [genesis_shard(i)] for i in range(1, config.shard_count + 1)
        ]
        # coverage[q][i-1] = highest shard-i height covered up to root block q
        self.coverage: list[tuple[int, ...]] = [(0,) * config.shard_count]
        self.index: dict[str, list[Location]] = {}
        self._headers_by_hash: list[dict[Digest, ShardHeader]] = [
            {chain[0].hash(): chain[0].header} for chain in self.shard_chains
        ]

    # -- accessors -------------------------------------------------------

    def shard_chain(self, shard_index: int) -> list[ShardBlock]:
        if not 1 <= shard_index <= self.config.shard_count:
            raise ValueError(f"unknown shard index {shard_index}")
        return self.shard_chains[shard_index - 1]

    def shard_tip(self, shard_index: int) -> ShardBlock:
        return self.shard_chain(shard_index)[-1]

    @property
    def root_tip(self) -> RootBlock:
        return self.root_chain[-1]

    def covered_height(self, shard_index: int, root_height: int | None = None) -> int:
        """``o_i`` of the given root block (default: the root tip)."""
        q = self.root_tip.height if root_height is None else root_height
        return self.coverage[q][shard_index - 1]

    def headers_by_hash(self, shard_index: int) -> Mapping[Digest, ShardHeader]:
        return self._headers_by_hash[shard_index - 1]

    @property
    def block_count(self) -> int:
        """Number of non-genesis blocks across all chains."""
        return len(self.root_chain) - 1 + sum(len(c) - 1 for c in self.shard_chains)

    def record_at(self, loc: Location) -> TransactionRecord:
        return self.shard_chain(loc.shard_index)[loc.height].body[loc.position]

    def block_at(self, loc: Location) -> ShardBlock:
        return self.shard_chain(loc.shard_index)[loc.height]

    def locations(self, product_id: str, committed_only: bool = True) -> list[Location]:
        """Locations of a product's records in commit order."""
        locs = self.index.get(product_id, [])
        if committed_only:
            locs = [l for l in locs if l.height <= self.covered_height(l.shard_index)]

        def order(loc: Location):
            return (self.block_at(loc).header.created_at, loc.shard_index, loc.height, loc.position)

        return sorted(locs, key=order)

    def copy(self) -> "Ledger":
        verifier = self.verifier
        self.verifier = None
        try:
            clone = copy.deepcopy(self)
        finally:
            self.verifier = verifier
        clone.verifier = verifier
        return clone

    # -- mutation ----------------------------------------------------------

    def _store_shard_block(self, block: ShardBlock) -> None:
        self.shard_chain(block.shard_index).append(block)
        self._headers_by_hash[block.shard_index - 1][block.hash()] = block.header
        for pos, record in enumerate(block.body):
            self.index.setdefault(record.product_id, []).append(
                Location(block.shard_index, block.height, pos))

    def _store_root_block(self, block: RootBlock) -> None:
        cov = list(self.coverage[-1])
        for shard_index, header in block.highest_per_shard().items():
            cov[shard_index - 1] = max(cov[shard_index - 1], header.height)
        self.root_chain.append(block)
        self.coverage.append(tuple(cov))

    # -- dump / load -------------------------------------------------------

    def dump(self) -> bytes:
        lines = [canonical_encode({"format": DUMP_FORMAT, "config": self.config})]
        lines += [canonical_encode(b) for b in self.root_chain[1:]]
        for chain in self.shard_chains:
            lines += [canonical_encode(b) for b in chain[1:]]
        return b"".join(line + b"\n" for line in lines)

    @classmethod
    def load(cls, data: bytes, verifier: Verifier | None = None) -> "Ledger":
        """Rebuild and fully revalidate a dumped ledger; raises on the first bad block."""
        ledger, failure = revalidate_dump(data, verifier)
        if failure is not None:
            raise BlockRejected(f"{failure.kind} block invalid at step {failure.step}: {failure.reason}")
        return ledger


# -- validity functions -----------------------------------------------------


def check_shard_block(ledger: Ledger, candidate: ShardBlock) -> str | None:
    """Return the failed clause of the shard validity function, or None if valid."""
    chain = ledger.shard_chain(candidate.shard_index)  # raises on unknown shard
    header = candidate.header
    if header.height < 1:
        return "genesis is implicit"
    if header.height - 1 >= len(chain):
        return "predecessor not validated"
    predecessor = chain[header.height - 1]
    if header.prev_hash != predecessor.hash():
        return "hash link broken"
    if not candidate.body:
        return "empty body"
    if len(candidate.body) > ledger.config.shard_block_capacity:
        return "capacity exceeded"
    try:
        expected_root = merkle_root(candidate.body, candidate.verification)
    except ValueError:
        return "empty body"
    if header.merkle_root != expected_root:
        return "merkle root mismatch"
    onsite_ids = [r.record_id for r in candidate.body if requires_onsite(r.operation)]
    if [v.record_id for v in candidate.verification] != onsite_ids:
        return "verification does not match on-site records"
    seen = set()
    for record in candidate.body:
        if record.record_id in seen:
            return "duplicate record"
        seen.add(record.record_id)
        if record.record_id != record.computed_id():
            return "record_id mismatch"
        if not ledger.verifier.record_verified(
                candidate.shard_index, record, candidate.verification_for(record.record_id)):
            return f"unverified record {record.record_id[:12]}"
    return None


def validate_shard_block(ledger: Ledger, candidate: ShardBlock) -> bool:
    return check_shard_block(ledger, candidate) is None


def k_hash_link_check(headers_by_hash: Mapping[Digest, ShardHeader],
                      newer: ShardHeader, older: ShardHeader, k: int) -> bool:
    """True iff following ``prev_hash`` from ``newer`` exactly k times lands on ``older``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    current = newer
    for _ in range(k):
        current = headers_by_hash.get(current.prev_hash)
        if current is None:
            return False
    return current.hash() == older.hash()


def check_root_block(ledger: Ledger, candidate: RootBlock) -> str | None:
    """Return the failed clause of the root validity function, or None if valid."""
    header = candidate.header
    q = header.height - 1
    if header.height < 1:
        return "genesis is implicit"
    if q >= len(ledger.root_chain):
        return "predecessor not validated"
    if header.prev_hash != ledger.root_chain[q].hash():
        return "hash link broken"
    if not candidate.body:
        return "empty body"
    if len(candidate.body) > ledger.config.root_block_capacity:
        return "capacity exceeded"
    if header.body_hash != root_body_hash(candidate.body, candidate.confirmation):
        return "body hash mismatch"
    if candidate.confirmation is None:
        return "missing confirmation"
    payload = confirmation_payload(header.height, header.prev_hash, header.created_at, candidate.body)
    if not ledger.verifier.confirmation_valid(payload, candidate.confirmation):
        return "confirmation invalid"

    per_shard: dict[int, list[ShardHeader]] = {}
    for h in candidate.body:
        if not 1 <= h.shard_index <= ledger.config.shard_count:
            return "unknown shard block"
        per_shard.setdefault(h.shard_index, []).append(h)

    for shard_index, headers in per_shard.items():
        chain = ledger.shard_chain(shard_index)
        last = ledger.coverage[q][shard_index - 1]
        heights = sorted(h.height for h in headers)
        if len(set(heights)) != len(heights):
            return "duplicate header"
        if heights != list(range(last + 1, last + 1 + len(heights))):
            return f"shard {shard_index} coverage not contiguous"
        for h in headers:
            if h.height >= len(chain) or chain[h.height].hash() != h.hash():
                return "unknown shard block"
        newest = max(headers, key=lambda h: h.height)
        older = chain[last].header
        if not k_hash_link_check(ledger.headers_by_hash(shard_index), newest, older, newest.height - last):
            return "k-hash-link broken"
        # blocks last+1..newest are stored, hence already shard-validated
    return None


def validate_root_block(ledger: Ledger, candidate: RootBlock) -> bool:
    return check_root_block(ledger, candidate) is None


def append_shard_block(ledger: Ledger, block: ShardBlock) -> Ledger:
    tip = ledger.shard_tip(block.shard_index)
    if block.height != tip.height + 1:
        clause = "hash link broken" if block.height <= tip.height else "predecessor not validated"
        raise BlockRejected(clause, block)
    clause = check_shard_block(ledger, block)
    if clause is not None:
        raise BlockRejected(clause, block)
    ledger._store_shard_block(block)
    return ledger


def append_root_block(ledger: Ledger, block: RootBlock) -> Ledger:
    if block.height != ledger.root_tip.height + 1:
        clause = "hash link broken" if block.height <= ledger.root_tip.height else "predecessor not validated"
        raise BlockRejected(clause, block)
    clause = check_root_block(ledger, block)
    if clause is not None:
        raise BlockRejected(clause, block)
    ledger._store_root_block(block)
    return ledger


def build_shard_block(ledger: Ledger, shard_index: int, records: Sequence[TransactionRecord],
                      verification: Sequence[VerificationEntry], created_at: int) -> ShardBlock:
    """Assemble (but do not append) the next block of a shard chain."""
    tip = ledger.shard_tip(shard_index)
    header = ShardHeader(
        shard_index=shard_index,
        height=tip.height + 1,
        prev_hash=tip.hash(),
        created_at=created_at,
        merkle_root=merkle_root(records, verification),
    )
    return ShardBlock(header, tuple(records), tuple(verification))


def build_root_block(ledger: Ledger, headers: Sequence[ShardHeader], created_at: int,
                     confirm) -> RootBlock:
    """Assemble the next root block; ``confirm(payload)`` returns the regulator signature."""
    tip = ledger.root_tip
    height = tip.height + 1
    payload = confirmation_payload(height, tip.hash(), created_at, headers)
    confirmation = confirm(payload)
    header = RootHeader(height, tip.hash(), created_at, root_body_hash(headers, confirmation))
    return RootBlock(header, tuple(headers), confirmation)


def fork_choice(candidates: Iterable[Ledger]) -> Ledger:
    """Longest root chain; ties go to the earlier tip, then the smaller tip digest."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("fork choice needs at least one candidate ledger")
    return min(
        candidates,
        key=lambda l: (-l.root_tip.height, l.root_tip.header.created_at, l.root_tip.hash().raw),
    )


# -- replay -----------------------------------------------------------------


def replay(config: ChainConfig, root_blocks: Sequence[RootBlock],
           shard_blocks: Sequence[Sequence[ShardBlock]],
           verifier: Verifier | None = None) -> tuple[Ledger, Failure | None]:
    """Rebuild a ledger block by block, stopping at the first invalid block.

    Shard blocks are appended just before the first root block that covers
    them, so a bad record is always reported no later than its covering root.
    """
    ledger = Ledger(config, verifier)
    cursors = [0] * config.shard_count
    step = 0

    def push_shard(shard_pos: int) -> Failure | None:
        nonlocal step
        block = shard_blocks[shard_pos][cursors[shard_pos]]
        cursors[shard_pos] += 1
        step += 1
        try:
            append_shard_block(ledger, block)
        except (BlockRejected, ValueError) as exc:
            return Failure("shard", shard_pos + 1, cursors[shard_pos], step, str(exc))
        return None

    for position, root in enumerate(root_blocks, start=1):
        for shard_index, header in sorted(root.highest_per_shard().items()):
            pos = shard_index - 1
            if not 0 <= pos < config.shard_count:
                continue
            while cursors[pos] < min(header.height, len(shard_blocks[pos])):
                failure = push_shard(pos)
                if failure:
                    return ledger, failure
        step += 1
        try:
            append_root_block(ledger, root)
        except BlockRejected as exc:
            return ledger, Failure("root", None, position, step, str(exc))
    for pos in range(config.shard_count):
        while cursors[pos] < len(shard_blocks[pos]):
            failure = push_shard(pos)
            if failure:
                return ledger, failure
    return ledger, None


def parse_dump(data: bytes) -> tuple[ChainConfig, list[RootBlock], list[list[ShardBlock]]]:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise ValueError("empty ledger dump")
    head = canonical_decode(lines[0])
    if head.get("format") != DUMP_FORMAT:
        raise ValueError(f"unsupported dump format {head.get('format')!r}")
    config = ChainConfig.from_canonical(head["config"])
    roots: list[RootBlock] = []
    shards: list[list[ShardBlock]] = [[] for _ in range(config.shard_count)]
    for number, line in enumerate(lines[1:], start=2):
        item = canonical_decode(line)
        if item["kind"] == "root":
            block = RootBlock.from_canonical(item)
        elif item["kind"] == "shard":
            block = ShardBlock.from_canonical(item)
            if not 1 <= block.shard_index <= config.shard_count:
                raise ValueError(f"unknown shard index {block.shard_index}")
        else:
            raise ValueError(f"unknown block kind {item['kind']!r}")
        # fields the decoder ignores or defaults would otherwise slip through
        if canonical_encode(block) != line.encode("utf-8"):
            raise ValueError(f"line {number} is not the canonical form of its block")
        if isinstance(block, RootBlock):
            roots.append(block)
        else:
            shards[block.shard_index - 1].append(block)
    return config, roots, shards


def revalidate_dump(data: bytes, verifier: Verifier | None = None) -> tuple[Ledger | None, Failure | None]:
    """Parse and replay a dump.  Unparseable content is reported as a failure."""
    try:
        config, roots, shards = parse_dump(data)
    except (ValueError, KeyError, TypeError, IndexError, AttributeError) as exc:
        return None, Failure("parse", None, None, 0, f"malformed dump: {exc}")
    return replay(config, roots, shards, verifier)


def revalidate(ledger: Ledger) -> Failure | None:
    """Full revalidation of a (possibly tampered) in-memory ledger."""
    _, failure = replay(
        ledger.config,
        ledger.root_chain[1:],
        [chain[1:] for chain in ledger.shard_chains],
        ledger.verifier,
    )
    return failure
