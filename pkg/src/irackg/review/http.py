"""HTTP API for the review service (versioned under /v1, JSON bodies).

Endpoints:
    GET  /v1/healthz
    GET  /v1/batches
    POST /v1/batches
    GET  /v1/batches/{id}/items?cursor=&limit=
    POST /v1/labels
    POST /v1/batches/{id}/derive
    POST /v1/batches/{id}/close
    GET  /v1/batches/{id}/quality
    GET  /v1/batches/{id}/record-quality

Auth is a shared bearer token (configured via file + environment variable);
when no token is configured the API is open, which is the test default.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..kg import IracGraph
from .models import EntityGrade, ItemKind, ItemRef, RecordGrade, RelationVerdictValue, ReviewLabel
from .service import (
    ClosedBatch,
    InsufficientCases,
    ReviewStore,
    UnknownBatch,
    UnknownItem,
)


class CreateBatchBody(BaseModel):
    n_cases: int = Field(ge=1)
    seed: int = 0
    kinds: list[str] = ["entity", "relation"]
    include_records: bool = False


class LabelBody(BaseModel):
    batch_id: str
    case_id: str
    kind: str
    target_id: str
    value: str | dict
    reviewer: str


def _parse_value(kind: ItemKind, value: str | dict):
    if kind is ItemKind.ENTITY:
        return EntityGrade(str(value))
    if kind is ItemKind.RELATION:
        return RelationVerdictValue(str(value))
    if kind is ItemKind.SFT_RECORD:
        return RecordGrade(str(value))
    if not isinstance(value, dict):
        raise ValueError("missing-entity flag value must be an object with span/entity_kind")
    return value


def build_app(
    store: ReviewStore,
    graphs: list[IracGraph],
    records: list[dict] | None = None,
    auth_token: str | None = None,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    app = FastAPI(title="irackg review service")

    async def check_auth(request: Request) -> None:
        if auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {auth_token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    auth = Depends(check_auth)

    @app.get("/v1/healthz")
    def healthz() -> dict:
        return {"ok": True, "graphs": len(graphs)}

    @app.get("/v1/batches", dependencies=[auth])
    def list_batches() -> list[dict]:
        return [
            {
                "batch_id": b.batch_id,
                "seed": b.seed,
                "case_ids": b.case_ids,
                "open": b.open,
                "items": len(b.items),
            }
            for b in store.list_batches()
        ]

    @app.post("/v1/batches", dependencies=[auth])
    def create_batch(body: CreateBatchBody) -> dict:
        try:
            batch = store.create_batch(
                graphs,
                n_cases=body.n_cases,
                seed=body.seed,
                kinds=tuple(body.kinds),
                records=records if body.include_records else None,
            )
        except InsufficientCases as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"batch_id": batch.batch_id, "case_ids": batch.case_ids, "items": len(batch.items)}

    @app.get("/v1/batches/{batch_id}/items", dependencies=[auth])
    def get_items(batch_id: str, cursor: int = 0, limit: int = 100) -> dict:
        try:
            batch = store.get_batch(batch_id)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        window = batch.items[cursor : cursor + limit]
        next_cursor = cursor + limit if cursor + limit < len(batch.items) else None
        return {
            "batch_id": batch_id,
            "total": len(batch.items),
            "next_cursor": next_cursor,
            "items": [
                {
                    "case_id": i.ref.case_id,
                    "kind": i.ref.kind.value,
                    "target_id": i.ref.target_id,
                    "payload": i.payload,
                }
                for i in window
            ],
        }

    @app.post("/v1/labels", dependencies=[auth])
    def post_label(body: LabelBody) -> dict:
        try:
            kind = ItemKind(body.kind)
            value = _parse_value(kind, body.value)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        label = ReviewLabel(
            ref=ItemRef(body.case_id, kind, body.target_id), value=value, reviewer=body.reviewer
        )
        try:
            stored = store.submit_label(body.batch_id, label)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ClosedBatch as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True, "label": stored.to_json_obj()}

    @app.post("/v1/batches/{batch_id}/derive", dependencies=[auth])
    def derive(batch_id: str) -> dict:
        try:
            changed = store.derive_relation_verdicts(batch_id)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"batch_id": batch_id, "changed": changed}

    @app.post("/v1/batches/{batch_id}/close", dependencies=[auth])
    def close(batch_id: str) -> dict:
        try:
            store.close_batch(batch_id)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"batch_id": batch_id, "open": False}

    @app.get("/v1/batches/{batch_id}/quality", dependencies=[auth])
    def quality(batch_id: str) -> dict:
        try:
            return store.aggregate_quality(batch_id)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/v1/batches/{batch_id}/record-quality", dependencies=[auth])
    def record_quality(batch_id: str) -> dict:
        try:
            return store.aggregate_record_quality(batch_id)
        except UnknownBatch as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
