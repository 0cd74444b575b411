import base64
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from hempchain.api import create_app
from hempchain.domain import OperationUnit as Op, Role
from hempchain.poa import UNAPPROVED
from hempchain.samples import participant_info, sample_record

from conftest import online_record


@pytest.fixture
def client(node):
    return TestClient(create_app(node))


def test_record_flow(client, node):
    pid = client.post("/products", json={}).json()["product_id"]
    rec = online_record(node.registry, pid)
    body = {"record": rec.to_canonical(), "shard": 2, "files": [base64.b64encode(b"invoice").decode()]}
    receipt = client.post("/records", json=body).json()
    assert receipt["status"] == "buffered" and receipt["U"] == 0
    tick = client.post("/ledger/tick", json={"until": 90}).json()
    assert [b["kind"] for b in tick["produced"]] == ["shard", "root"]
    final = client.get(f"/records/{receipt['record_id']}").json()
    assert final["status"] == "accepted" and final["U"] == 1
    history = client.get(f"/products/{pid}/history").json()["records"]
    assert len(history) == 1
    assert base64.b64decode(history[0]["files"][0]) == b"invoice"
    assert client.get("/ledger/status").json()["root_height"] == 1
    assert client.get("/ledger/dump").text.encode() == node.ledger.dump()
    # mutating calls persist the node
    assert Path(node.config.data_dir, "state.json").exists()


def test_tampered_file_yields_conflict(client, node):
    pid = client.post("/products", json={"product_id": "P-X"}).json()["product_id"]
    rec = online_record(node.registry, pid)
    body = {"record": rec.to_canonical(), "shard": 1, "files": [base64.b64encode(b"scan").decode()],
            "wait": True}
    assert client.post("/records", json=body).json()["status"] == "accepted"
    ref = node.retrieve_records(pid)[0].record.file_refs[0]
    (node.store.root / ref.uri).write_bytes(b"scam")
    resp = client.get(f"/products/{pid}/history")
    assert resp.status_code == 409
    assert resp.json()["detail"] == "error, database is tampered"


def test_errors(client, node):
    assert client.post("/products", json={"product_id": "P-1"}).status_code == 200
    assert client.post("/products", json={"product_id": "P-1"}).status_code == 409
    assert client.get("/records/nope").status_code == 404
    assert client.post("/records", json={"record": {"x": 1}, "shard": 1}).status_code == 422
    rec = online_record(node.registry, "P-1")
    assert client.post("/records", json={"record": rec.to_canonical(), "shard": 9}).status_code == 422
    assert client.post("/records/nope/decision", json={"approve": True}).status_code == 404
    assert client.post("/participants", json={"role": "Dryer", "info": {}}).status_code == 422


def test_register_participant(client):
    info = participant_info(Role.DRYER, "09")
    body = client.post("/participants", json={"role": "Dryer", "info": info}).json()
    assert body["role"] == "Dryer" and len(bytes.fromhex(body["secret"])) == 32


def test_tampered_onsite_record_rejected(client, node):
    pid = client.post("/products", json={}).json()["product_id"]
    rec = sample_record(node.registry, Op.HARVEST, pid)
    node.decision_source = None  # live mode: the verdict comes through the API
    pending = client.post("/records", json={"record": rec.to_canonical(), "shard": 1}).json()
    assert pending["status"] == "pending-verification"
    decided = client.post(f"/records/{rec.record_id}/decision", json={"approve": False}).json()
    assert decided["status"] == "rejected-verification"
    assert decided["reasons"] == [UNAPPROVED]
