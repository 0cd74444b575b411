"""Participant and transaction schemas for the hemp supply chain."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .canonical import (
    Digest,
    KeyedSignature,
    canonical_encode,
    derive_secret,
    hash_value,
    sign,
    verify,
)


class Role(enum.Enum):
    """Participant kinds; ``label`` is the name used in signer columns."""

    BREEDER = "Breeder"
    LICENSED_GROWER = "LicensedGrower"
    DRYER = "Dryer"
    LICENSED_PROCESSOR = "LicensedProcessor"
    TRANSPORTER = "Transporter"
    HEMP_TESTING_LAB = "HempTestingLab"
    AUTHORITY_REGULATOR = "AuthorityRegulator"

    @property
    def label(self) -> str:
        return _ROLE_LABELS[self]


_ROLE_LABELS = {
    Role.BREEDER: "Breeder",
    Role.LICENSED_GROWER: "Grower",
    Role.DRYER: "Dryer",
    Role.LICENSED_PROCESSOR: "Processor",
    Role.TRANSPORTER: "Transporter",
    Role.HEMP_TESTING_LAB: "Lab",
    Role.AUTHORITY_REGULATOR: "Validator",
}

PARTICIPANT_FIELDS: dict[Role, tuple[str, ...]] = {
    Role.BREEDER: ("name", "registration", "pvp", "address"),
    Role.LICENSED_GROWER: (
        "name", "license", "field_name", "gps", "background_check",
        "pre_plant_soil_tests", "irrigation_type", "prior_year_field_history", "soil_type",
    ),
    Role.DRYER: ("name", "license", "address", "system_type"),
    Role.LICENSED_PROCESSOR: ("name", "address", "handler_license", "system_type"),
    Role.TRANSPORTER: ("transporter_information", "driver_license"),
    Role.HEMP_TESTING_LAB: ("name", "address", "license"),
    Role.AUTHORITY_REGULATOR: ("name", "address", "license"),
}


class OperationUnit(enum.Enum):
    SEED_SOURCING = "SeedSourcing"
    SEED_PICKUP = "SeedPickup"
    SEED_ARRIVAL = "SeedArrival"
    GERMINATION_FIELD_PREPARATION = "GerminationFieldPreparation"
    CULTIVATION = "Cultivation"
    PRE_HARVEST_SAMPLE = "PreHarvestSample"
    PRE_HARVEST_TEST = "PreHarvestTest"
    HARVEST = "Harvest"
    IH_PICKUP = "IHPickup"
    IH_ARRIVAL = "IHArrival"
    DRYING_STABILIZING = "DryingStabilizing"
    DRIED_IH_PICKUP = "DriedIHPickup"
    DRIED_IH_ARRIVAL = "DriedIHArrival"
    EXTRACTION = "Extraction"
    WINTERIZATION = "Winterization"
    PLC = "PLC"


@dataclass(frozen=True)
class OperationSchema:
    signers: frozenset[Role]
    fields: tuple[str, ...]
    onsite: bool


_B, _G, _T = Role.BREEDER, Role.LICENSED_GROWER, Role.TRANSPORTER
_D, _P, _L, _V = Role.DRYER, Role.LICENSED_PROCESSOR, Role.HEMP_TESTING_LAB, Role.AUTHORITY_REGULATOR

_PICKUP_FIELDS = (
    "transporter_information", "driver_license", "lot_number",
    "sender_receiver_information", "quantity", "pickup_date",
)
_ARRIVAL_FIELDS = ("delivery_date", "vehicle_model", "route_of_transportation")


def _schema(signers, fields, onsite=False):
    return OperationSchema(frozenset(signers), tuple(fields), onsite)


OPERATION_SCHEMAS: dict[OperationUnit, OperationSchema] = {
    OperationUnit.SEED_SOURCING: _schema(
        (_B, _T, _G),
        ("variety", "seed_lot_number", "seed_purity_analysis", "flowering_type",
         "feminization_process", "seed_feminization_percentage", "clone_information", "quantity"),
    ),
    OperationUnit.SEED_PICKUP: _schema(
        (_B, _T),
        ("transporter_information", "sender_receiver_information", "pickup_date", "driver_license"),
    ),
    OperationUnit.SEED_ARRIVAL: _schema((_B, _T, _G), _ARRIVAL_FIELDS),
    OperationUnit.GERMINATION_FIELD_PREPARATION: _schema(
        (_G,),
        ("transplanting_date", "plant_density", "row_width", "grown_on_plastic", "lot_number",
         "gps", "pre_plant_soil_test", "irrigation_type", "soil_type"),
    ),
    OperationUnit.CULTIVATION: _schema(
        (_G,),
        ("irrigation_frequency_volume", "fertilizer_frequency_volume", "weed_insect_mold_pollination_control"),
    ),
    OperationUnit.PRE_HARVEST_SAMPLE: _schema((_G, _V), ("sampling_request_form",)),
    OperationUnit.PRE_HARVEST_TEST: _schema(
        (_L,),
        ("sampling_date", "lot_number", "coa_test", "cannabinoid_content",
         "pesticide_residue", "heavy_metals"),
        onsite=True,
    ),
    OperationUnit.HARVEST: _schema(
        (_G, _V), ("completion_date", "moisture_content", "total_yield_by_field"), onsite=True,
    ),
    OperationUnit.IH_PICKUP: _schema((_G, _T, _D), _PICKUP_FIELDS),
    OperationUnit.IH_ARRIVAL: _schema((_G, _T, _D), _ARRIVAL_FIELDS),
    OperationUnit.DRYING_STABILIZING: _schema(
        (_D,),
        ("lot_number", "pre_drying_weight", "drying_temperature_duration", "final_dried_weight",
         "dry_weight", "container_type_weight", "cannabinoid_content", "pesticide_residue",
         "heavy_metals"),
    ),
    OperationUnit.DRIED_IH_PICKUP: _schema((_G, _D, _T, _P), _PICKUP_FIELDS),
    OperationUnit.DRIED_IH_ARRIVAL: _schema((_G, _D, _T, _P), _ARRIVAL_FIELDS),
    OperationUnit.EXTRACTION: _schema(
        (_P,),
        ("lot_number", "biomass_weight_in", "extraction_input_quantity_recaptured",
         "oil_extracted_quantity", "extraction_gain_loss", "post_extraction_test"),
    ),
    OperationUnit.WINTERIZATION: _schema(
        (_P,),
        ("lot_number", "crude_oil_weight_in", "winterized_oil_out", "post_winterization_test"),
    ),
    OperationUnit.PLC: _schema(
        (_P, _V),
        ("lot_number", "quantity_weight_in", "quantity_weight_out", "plc_repeat_times", "post_plc_test"),
        onsite=True,
    ),
}


def requires_onsite(operation: OperationUnit) -> bool:
    return OPERATION_SCHEMAS[operation].onsite


def required_signers(operation: OperationUnit) -> frozenset[Role]:
    return OPERATION_SCHEMAS[operation].signers


def required_fields(operation: OperationUnit) -> tuple[str, ...]:
    return OPERATION_SCHEMAS[operation].fields


@dataclass(frozen=True)
class ParticipantProfile:
    participant_id: str
    role: Role
    info: Mapping[str, str]
    verification_class: str = "Online"

    def missing_fields(self) -> list[str]:
        return [k for k in PARTICIPANT_FIELDS[self.role] if not self.info.get(k)]

    def to_canonical(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "role": self.role.value,
            "info": dict(self.info),
            "verification_class": self.verification_class,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "ParticipantProfile":
        return cls(
            participant_id=data["participant_id"],
            role=Role(data["role"]),
            info=dict(data["info"]),
            verification_class=data.get("verification_class", "Online"),
        )


@dataclass(frozen=True)
class FileRef:
    """Off-chain file anchored on chain by its SHA-256 digest."""

    uri: str
    file_digest: Digest
    size_bytes: int

    def to_canonical(self) -> dict:
        return {"uri": self.uri, "file_digest": self.file_digest.hex(), "size_bytes": self.size_bytes}

    @classmethod
    def from_canonical(cls, data: Mapping) -> "FileRef":
        return cls(data["uri"], Digest.from_hex(data["file_digest"]), int(data["size_bytes"]))


@dataclass(frozen=True)
class TransactionRecord:
    """One supply-chain event.

    ``record_id`` is the hex digest of the record's canonical form with the id
    itself left out; build records through :func:`make_record` or
    :meth:`with_id` to keep it consistent.
    """

    product_id: str
    lot_number: str
    operation: OperationUnit
    info: Mapping[str, str]
    signatures: tuple[KeyedSignature, ...] = ()
    file_refs: tuple[FileRef, ...] = ()
    created_at: int = 0
    record_id: str = ""

    def signing_payload(self) -> bytes:
        return signing_payload(self.info, self.product_id, self.operation)

    def body_canonical(self) -> dict:
        return {
            "product_id": self.product_id,
            "lot_number": self.lot_number,
            "operation": self.operation.value,
            "info": dict(self.info),
            "signatures": [s.to_canonical() for s in self.signatures],
            "file_refs": [f.to_canonical() for f in self.file_refs],
            "created_at": self.created_at,
        }

    def computed_id(self) -> str:
        return hash_value(self.body_canonical()).hex()

    def with_id(self) -> "TransactionRecord":
        return replace(self, record_id=self.computed_id())

    def with_files(self, refs: Iterable[FileRef]) -> "TransactionRecord":
        return replace(self, file_refs=tuple(self.file_refs) + tuple(refs)).with_id()

    def to_canonical(self) -> dict:
        data = self.body_canonical()
        data["record_id"] = self.record_id
        return data

    def encode(self) -> bytes:
        return canonical_encode(self)

    @classmethod
    def from_canonical(cls, data: Mapping) -> "TransactionRecord":
        unknown = set(data) - _RECORD_KEYS
        if unknown:
            raise ValueError(f"unknown record fields: {sorted(unknown)}")
        return cls(
            product_id=data["product_id"],
            lot_number=data["lot_number"],
            operation=OperationUnit(data["operation"]),
            info=dict(data["info"]),
            signatures=tuple(KeyedSignature.from_canonical(s) for s in data.get("signatures", ())),
            file_refs=tuple(FileRef.from_canonical(f) for f in data.get("file_refs", ())),
            created_at=int(data.get("created_at", 0)),
            record_id=data.get("record_id", ""),
        )


_RECORD_KEYS = {"product_id", "lot_number", "operation", "info", "signatures", "file_refs", "created_at",
                "record_id"}


def signing_payload(info: Mapping[str, str], product_id: str, operation: OperationUnit) -> bytes:
    return canonical_encode({"info": dict(info), "product_id": product_id, "operation": operation.value})


@dataclass
class Registry:
    """Known identities: profile plus signing secret per participant."""

    seed: int | str = 0
    profiles: dict[str, ParticipantProfile] = field(default_factory=dict)
    secrets: dict[str, bytes] = field(default_factory=dict)

    def register(self, profile: ParticipantProfile, secret: bytes | None = None) -> bytes:
        missing = profile.missing_fields()
        if missing:
            raise ValueError(f"participant {profile.participant_id}: missing info {missing}")
        if profile.participant_id in self.profiles:
            raise ValueError(f"duplicate participant id {profile.participant_id!r}")
        secret = secret or derive_secret(self.seed, profile.participant_id)
        self.profiles[profile.participant_id] = profile
        self.secrets[profile.participant_id] = secret
        return secret

    def role_of(self, signer: str) -> Role | None:
        profile = self.profiles.get(signer)
        return profile.role if profile else None

    def secret_of(self, signer: str) -> bytes | None:
        return self.secrets.get(signer)

    def sign_as(self, signer: str, content: bytes) -> KeyedSignature:
        secret = self.secrets.get(signer)
        if secret is None:
            raise KeyError(f"unknown signer {signer!r}")
        return sign(secret, content, signer)


def make_record(
    registry: Registry,
    product_id: str,
    lot_number: str,
    operation: OperationUnit,
    info: Mapping[str, str],
    signers: Iterable[str],
    created_at: int = 0,
    file_refs: Iterable[FileRef] = (),
) -> TransactionRecord:
    """Build a record signed by ``signers`` and stamp its content id."""
    payload = signing_payload(info, product_id, operation)
    signatures = tuple(registry.sign_as(s, payload) for s in signers)
    record = TransactionRecord(
        product_id=product_id,
        lot_number=lot_number,
        operation=operation,
        info=dict(info),
        signatures=signatures,
        file_refs=tuple(file_refs),
        created_at=created_at,
    )
    return record.with_id()


def validate_schema(record: TransactionRecord, registry: Registry) -> list[str]:
    """Return every schema violation of ``record``; an empty list means valid."""
    violations: list[str] = []
    if not record.product_id:
        violations.append("missing product_id")
    schema = OPERATION_SCHEMAS[record.operation]
    for key in schema.fields:
        value = record.info.get(key)
        if value is None:
            violations.append(f"missing field: {key}")
        elif not isinstance(value, str) or not value:
            violations.append(f"invalid field: {key}")

    payload = record.signing_payload()
    covered: set[Role] = set()
    for sig in record.signatures:
        role = registry.role_of(sig.signer)
        if role is None:
            violations.append(f"unknown signer: {sig.signer}")
            continue
        if not verify(sig, registry.secret_of(sig.signer), payload):
            violations.append(f"signature invalid: {sig.signer}")
            continue
        if role not in schema.signers:
            violations.append(f"unexpected signer: {role.label}")
            continue
        covered.add(role)
    for role in sorted(schema.signers - covered, key=lambda r: r.value):
        violations.append(f"missing signer: {role.label}")

    if record.record_id and record.record_id != record.computed_id():
        violations.append("record_id mismatch")
    return violations
