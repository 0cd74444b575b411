"""HTTP JSON API in front of a :class:`~hempchain.node.Node`."""

from __future__ import annotations

import base64
import binascii
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .domain import TransactionRecord
from .node import Node
from .store import DatabaseTampered, FileMissing


class ParticipantIn(BaseModel):
    role: str
    info: dict[str, str]
    participant_id: Optional[str] = None


class ProductIn(BaseModel):
    product_id: Optional[str] = None


class RecordIn(BaseModel):
    record: dict[str, Any]
    shard: int
    files: list[str] = Field(default_factory=list, description="base64-encoded file contents")
    wait: bool = False


class DecisionIn(BaseModel):
    approve: bool


class TickIn(BaseModel):
    until: int


def create_app(node: Node) -> FastAPI:
    app = FastAPI(title="hempchain node", version="0.1.0")

    def persist():
        if node.config.data_dir:
            node.save()

    @app.post("/participants")
    def register_participant(body: ParticipantIn):
        try:
            profile, secret = node.register_participant(body.role, body.info, body.participant_id)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        persist()
        return {"participant_id": profile.participant_id, "role": profile.role.value, "secret": secret.hex()}

    @app.post("/products")
    def create_product(body: ProductIn):
        try:
            product_id = node.create_product(body.product_id)
        except ValueError as exc:
            raise HTTPException(409, str(exc))
        persist()
        return {"product_id": product_id}

    @app.post("/records")
    def submit_record(body: RecordIn):
        try:
            record = TransactionRecord.from_canonical(body.record)
            files = [base64.b64decode(f, validate=True) for f in body.files]
        except (KeyError, ValueError, TypeError, binascii.Error) as exc:
            raise HTTPException(422, f"malformed record: {exc}")
        try:
            if body.wait:
                receipt = node.create_record(record, body.shard, files)
            else:
                receipt = node.submit_record(record, body.shard, files)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        persist()
        return receipt.to_canonical()

    @app.get("/records/{record_id}")
    def get_receipt(record_id: str):
        receipt = node.receipts.get(record_id)
        if receipt is None:
            raise HTTPException(404, "unknown record")
        return receipt.to_canonical()

    @app.post("/records/{record_id}/decision")
    def decide(record_id: str, body: DecisionIn):
        try:
            receipt = node.decide(record_id, body.approve)
        except KeyError as exc:
            raise HTTPException(404, str(exc.args[0]))
        persist()
        return receipt.to_canonical()

    @app.get("/products/{product_id}/history")
    def history(product_id: str):
        try:
            items = node.retrieve_records(product_id)
        except DatabaseTampered as exc:
            raise HTTPException(409, str(exc))
        except FileMissing as exc:
            raise HTTPException(404, f"anchored file missing: {exc.args[0]}")
        return {
            "product_id": product_id,
            "records": [
                {
                    "record": item.record.to_canonical(),
                    "shard_index": item.location.shard_index,
                    "height": item.location.height,
                    "position": item.location.position,
                    "files": [base64.b64encode(f).decode() for f in item.files],
                }
                for item in items
            ],
        }

    @app.get("/ledger/status")
    def status():
        return node.status()

    @app.post("/ledger/tick")
    def tick(body: TickIn):
        try:
            blocks = node.produce_blocks(body.until)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        persist()
        return {
            "produced": [
                {"kind": "shard" if hasattr(b, "shard_index") else "root",
                 "shard_index": getattr(b, "shard_index", None),
                 "height": b.height,
                 "hash": b.hash().hex()}
                for b in blocks
            ],
            "status": node.status(),
        }

    @app.get("/ledger/dump", response_class=PlainTextResponse)
    def dump():
        return node.ledger.dump().decode("utf-8")

    return app
