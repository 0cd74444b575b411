"""Proof-of-authority verification.

Local authorities (one pool per shard area) inspect regulated records on
site; state regulators confirm root blocks.  The contract logic is plain
engine code: it dispatches verifiers and gates block inclusion.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

from .canonical import KeyedSignature, canonical_encode, derive_secret, sign, verify
from .domain import Registry, TransactionRecord, requires_onsite, validate_schema

UNAPPROVED = "unapproved by local authority"

Decision = Union[bool, Callable[[TransactionRecord, str], bool]]


class DispatchError(RuntimeError):
    """No validator could be dispatched; the record stays pending."""


class ConfirmationRefused(RuntimeError):
    pass


def record_bytes(record: TransactionRecord) -> bytes:
    return canonical_encode(record)


@dataclass
class ValidatorPool:
    """``members[i]`` lists the local authorities in charge of area ``i``."""

    members: dict[int, list[str]]
    secrets: dict[str, bytes]
    busy: set[str] = field(default_factory=set)

    @classmethod
    def create(cls, shard_count: int, per_shard: int, seed: int | str = 0) -> "ValidatorPool":
        if per_shard <= 0:
            raise ValueError("validator pool size must be positive")
        members = {
            i: [f"validator-{i}-{k:03d}" for k in range(1, per_shard + 1)]
            for i in range(1, shard_count + 1)
        }
        secrets = {v: derive_secret(seed, v) for vs in members.values() for v in vs}
        return cls(members, secrets)

    def size(self, shard_index: int) -> int:
        return len(self.members.get(shard_index, ()))

    def available(self, shard_index: int) -> list[str]:
        return [v for v in self.members.get(shard_index, ()) if v not in self.busy]

    def shard_of(self, validator: str) -> int | None:
        for shard_index, members in self.members.items():
            if validator in members:
                return shard_index
        return None

    def occupy(self, validator: str) -> None:
        self.busy.add(validator)

    def release(self, validator: str) -> None:
        self.busy.discard(validator)


@dataclass
class RegulatorPool:
    members: list[str]
    secrets: dict[str, bytes]

    @classmethod
    def create(cls, size: int, seed: int | str = 0) -> "RegulatorPool":
        if size <= 0:
            raise ValueError("regulator pool size must be positive")
        members = [f"regulator-{k:03d}" for k in range(1, size + 1)]
        return cls(members, {r: derive_secret(seed, r) for r in members})


@dataclass(frozen=True)
class VerificationOutcome:
    record_id: str
    verdict: str  # "approved" | "rejected"
    validator: str | None = None
    signature: KeyedSignature | None = None
    reasons: tuple[str, ...] = ()

    @property
    def approved(self) -> bool:
        return self.verdict == "approved"


def dispatch_onsite(pool: ValidatorPool, shard_index: int, record: TransactionRecord,
                    decide: Decision, rng: random.Random) -> VerificationOutcome:
    """Send a randomly chosen available local authority of area ``shard_index``."""
    if not requires_onsite(record.operation):
        raise ValueError(f"{record.operation.value} does not require on-site verification")
    candidates = pool.available(shard_index)
    if not candidates:
        raise DispatchError(f"no available validator in area {shard_index}")
    validator = rng.choice(candidates)
    approved = decide(record, validator) if callable(decide) else bool(decide)
    if not approved:
        return VerificationOutcome(record.record_id, "rejected", validator, None, (UNAPPROVED,))
    signature = sign(pool.secrets[validator], record_bytes(record), validator)
    return VerificationOutcome(record.record_id, "approved", validator, signature)


def verify_online(record: TransactionRecord, registry: Registry) -> VerificationOutcome:
    if requires_onsite(record.operation):
        raise ValueError(f"{record.operation.value} requires on-site verification")
    violations = validate_schema(record, registry)
    if violations:
        return VerificationOutcome(record.record_id, "rejected", reasons=tuple(violations))
    return VerificationOutcome(record.record_id, "approved")


def confirm_root(regulators: RegulatorPool, headers: Sequence, is_validated: Callable[[object], bool],
                 rng: random.Random, payload: bytes | None = None) -> KeyedSignature:
    """A randomly selected regulator signs the header set.

    Regulators trust the local authorities, so confirmation never fails for
    headers of validated shard blocks.  ``payload`` overrides the signed
    bytes (root production signs the full root-block context).
    """
    for header in headers:
        if not is_validated(header):
            raise ConfirmationRefused(
                f"shard {header.shard_index} height {header.height} is not a validated block")
    regulator = rng.choice(regulators.members)
    content = payload if payload is not None else canonical_encode({"headers": list(headers)})
    return sign(regulators.secrets[regulator], content, regulator)


@dataclass
class TamperModel:
    """Sim-mode decision source: tampered records fail on-site inspection.

    A record is treated as tampered when its id is listed in ``tampered`` or
    when a draw from the seeded stream falls below ``probability``.
    """

    probability: float = 0.0
    seed: int = 0
    tampered: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("tamper probability must lie in [0, 1]")
        self._rng = random.Random(self.seed)

    def __call__(self, record: TransactionRecord, validator: str) -> bool:
        draw = self._rng.random()
        if record.record_id in self.tampered:
            return False
        return draw >= self.probability


class AuthorityVerifier:
    """Checks record verification and root confirmation against known keys."""

    def __init__(self, registry: Registry, validators: ValidatorPool, regulators: RegulatorPool):
        self.registry = registry
        self.validators = validators
        self.regulators = regulators

    def record_verified(self, shard_index: int, record: TransactionRecord,
                        onsite_signature: KeyedSignature | None) -> bool:
        if validate_schema(record, self.registry):
            return False
        if not requires_onsite(record.operation):
            return onsite_signature is None
        if onsite_signature is None:
            return False
        if onsite_signature.signer not in self.validators.members.get(shard_index, ()):
            return False
        secret = self.validators.secrets[onsite_signature.signer]
        return verify(onsite_signature, secret, record_bytes(record))

    def confirmation_valid(self, payload: bytes, signature: KeyedSignature) -> bool:
        secret = self.regulators.secrets.get(signature.signer)
        return secret is not None and verify(signature, secret, payload)
