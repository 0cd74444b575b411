from dataclasses import replace

import pytest

from hempchain.domain import (
    OPERATION_SCHEMAS,
    PARTICIPANT_FIELDS,
    OperationUnit as Op,
    ParticipantProfile,
    Role,
    TransactionRecord,
    make_record,
    requires_onsite,
    required_fields,
    required_signers,
    validate_schema,
)
from hempchain.samples import DEFAULT_PARTICIPANTS, operation_info, sample_record


def test_sixteen_operations_three_onsite():
    assert len(Op) == 16
    assert {op for op in Op if requires_onsite(op)} == {Op.PRE_HARVEST_TEST, Op.HARVEST, Op.PLC}
    assert not requires_onsite(Op.SEED_PICKUP)
    assert not requires_onsite(Op.PRE_HARVEST_SAMPLE)


@pytest.mark.parametrize("op, roles", [
    (Op.SEED_SOURCING, {Role.BREEDER, Role.TRANSPORTER, Role.LICENSED_GROWER}),
    (Op.SEED_PICKUP, {Role.BREEDER, Role.TRANSPORTER}),
    (Op.PRE_HARVEST_SAMPLE, {Role.LICENSED_GROWER, Role.AUTHORITY_REGULATOR}),
    (Op.PRE_HARVEST_TEST, {Role.HEMP_TESTING_LAB}),
    (Op.HARVEST, {Role.LICENSED_GROWER, Role.AUTHORITY_REGULATOR}),
    (Op.DRIED_IH_PICKUP, {Role.LICENSED_GROWER, Role.DRYER, Role.TRANSPORTER, Role.LICENSED_PROCESSOR}),
    (Op.PLC, {Role.LICENSED_PROCESSOR, Role.AUTHORITY_REGULATOR}),
])
def test_required_signers_follow_process_table(op, roles):
    assert required_signers(op) == roles


def test_every_operation_has_fields():
    assert set(OPERATION_SCHEMAS) == set(Op)
    assert all(required_fields(op) for op in Op)
    assert required_fields(Op.HARVEST) == ("completion_date", "moisture_content", "total_yield_by_field")


def test_harvest_record_with_grower_and_validator_is_valid(registry):
    record = sample_record(registry, Op.HARVEST, "P-1")
    assert validate_schema(record, registry) == []


def test_cultivation_without_signatures(registry):
    record = make_record(registry, "P-1", "LOT-1", Op.CULTIVATION,
                         operation_info(Op.CULTIVATION, "LOT-1"), signers=[])
    assert validate_schema(record, registry) == ["missing signer: Grower"]


def test_altered_info_breaks_lab_signature(registry):
    record = sample_record(registry, Op.PRE_HARVEST_TEST, "P-1")
    info = dict(record.info)
    info["cannabinoid_content"] = info["cannabinoid_content"] + "x"
    altered = replace(record, info=info).with_id()
    lab = DEFAULT_PARTICIPANTS[Role.HEMP_TESTING_LAB]
    # a bad signature does not count towards the role it claims
    assert validate_schema(altered, registry) == [f"signature invalid: {lab}", "missing signer: Lab"]


def test_missing_and_empty_fields(registry):
    record = sample_record(registry, Op.CULTIVATION, "P-1")
    info = dict(record.info)
    info.pop("irrigation_frequency_volume")
    info["fertilizer_frequency_volume"] = ""
    bad = replace(record, info=info)
    problems = validate_schema(bad, registry)
    assert "missing field: irrigation_frequency_volume" in problems
    assert "invalid field: fertilizer_frequency_volume" in problems
    assert "record_id mismatch" in problems


def test_unexpected_and_unknown_signers(registry):
    record = make_record(registry, "P-1", "LOT-1", Op.CULTIVATION,
                         operation_info(Op.CULTIVATION, "LOT-1"),
                         signers=[DEFAULT_PARTICIPANTS[Role.LICENSED_GROWER], DEFAULT_PARTICIPANTS[Role.DRYER]])
    assert validate_schema(record, registry) == ["unexpected signer: Dryer"]
    with pytest.raises(KeyError):
        make_record(registry, "P-1", "LOT-1", Op.CULTIVATION, {}, signers=["nobody"])


def test_record_round_trip_and_id_stability(registry):
    record = sample_record(registry, Op.SEED_SOURCING, "P-9")
    again = TransactionRecord.from_canonical(record.to_canonical())
    assert again == record
    assert again.record_id == record.computed_id()


def test_profile_requires_role_fields(registry):
    with pytest.raises(ValueError):
        registry.register(ParticipantProfile("dryer-x", Role.DRYER, {"name": "only"}))
    full = {k: "v" for k in PARTICIPANT_FIELDS[Role.DRYER]}
    registry.register(ParticipantProfile("dryer-x", Role.DRYER, full))
    assert registry.role_of("dryer-x") is Role.DRYER
