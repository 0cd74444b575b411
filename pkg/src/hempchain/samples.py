"""Ready-made participants and records for demos and tests."""

from __future__ import annotations

from .domain import (
    PARTICIPANT_FIELDS,
    OperationUnit,
    ParticipantProfile,
    Registry,
    Role,
    TransactionRecord,
    make_record,
    required_fields,
    required_signers,
)

# one participant per role, ids chosen to read well in dumps
DEFAULT_PARTICIPANTS = {
    Role.BREEDER: "breeder-01",
    Role.LICENSED_GROWER: "grower-01",
    Role.DRYER: "dryer-01",
    Role.LICENSED_PROCESSOR: "processor-01",
    Role.TRANSPORTER: "transporter-01",
    Role.HEMP_TESTING_LAB: "lab-01",
    Role.AUTHORITY_REGULATOR: "authority-01",
}

PROCESS_ORDER = tuple(OperationUnit)


def participant_info(role: Role, tag: str = "01") -> dict[str, str]:
    return {key: f"{key.replace('_', ' ')} {tag}" for key in PARTICIPANT_FIELDS[role]}


def operation_info(operation: OperationUnit, lot_number: str, tag: str = "") -> dict[str, str]:
    info = {key: f"{key}:{lot_number}{tag}" for key in required_fields(operation)}
    if "lot_number" in info:
        info["lot_number"] = lot_number
    return info


def register_defaults(registry: Registry, participants=None) -> dict[Role, str]:
    participants = dict(participants or DEFAULT_PARTICIPANTS)
    for role, pid in participants.items():
        if pid not in registry.profiles:
            registry.register(ParticipantProfile(pid, role, participant_info(role)))
    return participants


def sample_record(registry: Registry, operation: OperationUnit, product_id: str,
                  lot_number: str = "LOT-1", created_at: int = 0, tag: str = "",
                  participants=None) -> TransactionRecord:
    """A well-formed record signed by the default participant of each required role."""
    participants = participants or DEFAULT_PARTICIPANTS
    signers = sorted(participants[r] for r in required_signers(operation))
    return make_record(
        registry,
        product_id=product_id,
        lot_number=lot_number,
        operation=operation,
        info=operation_info(operation, lot_number, tag),
        signers=signers,
        created_at=created_at,
    )
