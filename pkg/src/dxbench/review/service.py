"""HTTP surface of the review store.

    GET  /api/health
    GET  /api/items?kind=&status=&page=&page_size=
    GET  /api/items/{id}
    POST /api/items                      (bulk enqueue)
    POST /api/items/{id}/verification
    POST /api/items/{id}/grade
    GET  /api/export/grades

Conflicts map to 409, validation failures to 422, unknown items to 404.
Reviewer identity comes from a static token file (token -> reviewer_id,
sent as ``X-Reviewer-Token``); without a token file the service trusts the
``reviewer_id`` in the request body, which keeps API-level tests simple.
Model identity is scrubbed from grading payloads unless the service is
created with ``include_model_identity=True``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel, Field

from ..errors import ConflictError, NotFoundError, SchemaError
from .store import GradeEvent, ReviewItem, ReviewStore, VerificationEvent

_MODEL_IDENTITY_KEYS = ("model", "model_id", "model_name")


class EnqueueItem(BaseModel):
    item_id: str
    kind: Literal["mask_verification", "explanation_grading"]
    payload: dict = Field(default_factory=dict)
    assigned_reviewers: list[str] = Field(default_factory=list)


class EnqueueRequest(BaseModel):
    items: list[EnqueueItem]


class EnqueueResponse(BaseModel):
    enqueued: int


class VerificationRequest(BaseModel):
    decision: Literal["approve", "reject"]
    reason: str | None = None
    reviewer_id: str | None = None
    timestamp: str | None = None


class GradeRequest(BaseModel):
    correctness: int = Field(ge=1, le=5)
    completeness: int = Field(ge=1, le=5)
    comment: str | None = None
    reviewer_id: str | None = None
    timestamp: str | None = None


class ItemResponse(BaseModel):
    item_id: str
    kind: str
    status: str
    payload: dict
    assigned_reviewers: list[str]
    decision: dict | None
    grades: list[dict]
    final_scores: dict | None


class ItemPage(BaseModel):
    items: list[ItemResponse]
    total: int
    page: int
    page_size: int


class GradeExport(BaseModel):
    rows: list[dict]
    histogram: dict
    closed_items: int


class HealthResponse(BaseModel):
    status: str
    counts: dict
    include_model_identity: bool


def load_reviewers(path: str | Path) -> dict[str, str]:
    """Static token file: JSON object mapping token -> reviewer_id."""
    try:
        mapping = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read reviewers file {path}: {exc}") from exc
    if not isinstance(mapping, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
    ):
        raise SchemaError(f"reviewers file {path} must map token strings to reviewer ids")
    return mapping


def _scrub_model_identity(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if k not in _MODEL_IDENTITY_KEYS}


def create_app(
    store: ReviewStore,
    reviewers: dict[str, str] | None = None,
    include_model_identity: bool = False,
) -> FastAPI:
    app = FastAPI(title="dxbench review service")

    def item_response(item: ReviewItem) -> ItemResponse:
        payload = item.payload
        if item.kind == "explanation_grading" and not include_model_identity:
            payload = _scrub_model_identity(payload)
        return ItemResponse(
            item_id=item.item_id,
            kind=item.kind,
            status=item.status,
            payload=payload,
            assigned_reviewers=list(item.assigned_reviewers),
            decision=item.decision,
            grades=list(item.grades),
            final_scores=item.final_scores,
        )

    def resolve_reviewer(
        body_reviewer: str | None,
        token: str | None,
    ) -> str:
        if reviewers is not None:
            if not token or token not in reviewers:
                raise HTTPException(status_code=401, detail="unknown reviewer token")
            resolved = reviewers[token]
            if body_reviewer and body_reviewer != resolved:
                raise HTTPException(
                    status_code=403,
                    detail="reviewer_id does not match the presented token",
                )
            return resolved
        if not body_reviewer:
            raise HTTPException(status_code=422, detail="reviewer_id is required")
        return body_reviewer

    def reviewer_token(x_reviewer_token: str | None = Header(default=None)) -> str | None:
        return x_reviewer_token

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            counts=store.counts(),
            include_model_identity=include_model_identity,
        )

    @app.get("/api/items", response_model=ItemPage)
    def list_items(
        kind: str | None = Query(default=None),
        status: str | None = Query(default=None),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ) -> ItemPage:
        try:
            items, total = store.list_items(kind=kind, status=status, page=page,
                                            page_size=page_size)
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ItemPage(
            items=[item_response(i) for i in items],
            total=total,
            page=page,
            page_size=page_size,
        )

    @app.get("/api/items/{item_id}", response_model=ItemResponse)
    def get_item(item_id: str) -> ItemResponse:
        try:
            return item_response(store.get(item_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/items", response_model=EnqueueResponse, status_code=201)
    def enqueue(request: EnqueueRequest) -> EnqueueResponse:
        try:
            count = store.enqueue(item.model_dump() for item in request.items)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return EnqueueResponse(enqueued=count)

    @app.post("/api/items/{item_id}/verification", response_model=ItemResponse)
    def submit_verification(
        item_id: str,
        request: VerificationRequest,
        token: str | None = Depends(reviewer_token),
    ) -> ItemResponse:
        reviewer_id = resolve_reviewer(request.reviewer_id, token)
        try:
            event = VerificationEvent(
                item_id=item_id,
                reviewer_id=reviewer_id,
                decision=request.decision,
                reason=request.reason,
                **({"timestamp": request.timestamp} if request.timestamp else {}),
            )
            return item_response(store.submit_verification(event))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/api/items/{item_id}/grade", response_model=ItemResponse)
    def submit_grade(
        item_id: str,
        request: GradeRequest,
        token: str | None = Depends(reviewer_token),
    ) -> ItemResponse:
        reviewer_id = resolve_reviewer(request.reviewer_id, token)
        try:
            event = GradeEvent(
                item_id=item_id,
                reviewer_id=reviewer_id,
                correctness=request.correctness,
                completeness=request.completeness,
                comment=request.comment,
                **({"timestamp": request.timestamp} if request.timestamp else {}),
            )
            return item_response(store.submit_grade(event))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/api/export/grades", response_model=GradeExport)
    def export_grades(kind: str | None = Query(default="explanation_grading")) -> GradeExport:
        return GradeExport(**store.export_grades(kind=kind))

    return app
