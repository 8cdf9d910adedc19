"""Append-only event log with a materialized review-queue view.

Current state is a pure fold over the log: replaying the file reproduces
identical state (the crash-recovery guarantee). All mutations are
serialized through one writer lock and validated before the event is
appended, so an appended event always applies cleanly; concurrent
submissions to the same item resolve first-writer-wins, the loser gets a
conflict.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from ..errors import ConflictError, NotFoundError, SchemaError

KINDS = ("mask_verification", "explanation_grading")
STATUSES = ("open", "needs_adjudication", "closed")

MASK_VERIFICATION = "mask_verification"
EXPLANATION_GRADING = "explanation_grading"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def score_band(fraction: float) -> int:
    """Map a correctness/completeness fraction onto the 5-point scale.

    Bands: 1 [0, 0.2), 2 [0.2, 0.4), 3 [0.4, 0.6), 4 [0.6, 0.8], 5 (0.8, 1];
    the endpoints make "over 80 percent" score 5 and "under 20 percent"
    score 1 exactly.
    """
    if not (0 <= fraction <= 1):
        raise SchemaError(f"fraction must be in [0, 1], got {fraction}")
    if fraction > 0.8:
        return 5
    if fraction < 0.2:
        return 1
    if fraction < 0.4:
        return 2
    if fraction < 0.6:
        return 3
    return 4


@dataclass(frozen=True)
class GradeEvent:
    item_id: str
    reviewer_id: str
    correctness: int
    completeness: int
    timestamp: str = field(default_factory=_now)
    comment: str | None = None

    def __post_init__(self) -> None:
        if not self.reviewer_id:
            raise SchemaError("reviewer_id must be non-empty")
        for axis in ("correctness", "completeness"):
            value = getattr(self, axis)
            if not isinstance(value, int) or not (1 <= value <= 5):
                raise SchemaError(f"{axis} must be an integer in 1..5, got {value!r}")


@dataclass(frozen=True)
class VerificationEvent:
    item_id: str
    reviewer_id: str
    decision: str
    timestamp: str = field(default_factory=_now)
    reason: str | None = None

    def __post_init__(self) -> None:
        if not self.reviewer_id:
            raise SchemaError("reviewer_id must be non-empty")
        if self.decision not in ("approve", "reject"):
            raise SchemaError(f"decision must be 'approve' or 'reject', got {self.decision!r}")


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    kind: str
    payload: dict
    status: str = "open"
    assigned_reviewers: tuple[str, ...] = ()
    decision: dict | None = None          # mask_verification outcome
    grades: tuple[dict, ...] = ()         # explanation_grading events, in order
    final_scores: dict | None = None      # {"correctness": int, "completeness": int}

    def __post_init__(self) -> None:
        if not self.item_id:
            raise SchemaError("item_id must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"kind {self.kind!r} not one of {KINDS}")
        if self.status not in STATUSES:
            raise SchemaError(f"status {self.status!r} not one of {STATUSES}")

    def to_state_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind,
            "payload": self.payload,
            "status": self.status,
            "assigned_reviewers": list(self.assigned_reviewers),
            "decision": self.decision,
            "grades": list(self.grades),
            "final_scores": self.final_scores,
        }


class ReviewStore:
    """Materialized view over the event log.

    With a ``log_path`` the store replays the existing file at startup and
    appends (flush + fsync) before applying each new event; without one it
    is purely in-memory (tests, dry runs).
    """

    def __init__(self, log_path: str | Path | None = None):
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path is not None else None
        if self._log_path is not None and self._log_path.exists():
            with open(self._log_path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise SchemaError(
                            f"{self._log_path}:{lineno}: corrupt event: {exc}"
                        ) from exc
                    self._apply(event)

    # -- event fold ---------------------------------------------------------

    def _apply(self, event: dict) -> ReviewItem:
        kind = event.get("type")
        if kind == "item_enqueued":
            item = ReviewItem(
                item_id=str(event["item_id"]),
                kind=str(event["kind"]),
                payload=dict(event.get("payload", {})),
                assigned_reviewers=tuple(event.get("assigned_reviewers", ())),
            )
            if item.item_id in self._items:
                raise ConflictError(f"item {item.item_id!r} already enqueued")
            self._items[item.item_id] = item
            self._order.append(item.item_id)
            return item
        if kind == "verification_submitted":
            return self._apply_verification(event)
        if kind == "grade_submitted":
            return self._apply_grade(event)
        raise SchemaError(f"unknown event type {kind!r}")

    def _get_for_update(self, item_id: str, expected_kind: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFoundError(f"item {item_id!r} does not exist")
        if item.kind != expected_kind:
            raise ConflictError(f"item {item_id!r} is a {item.kind} item")
        return item

    def _apply_verification(self, event: dict) -> ReviewItem:
        item = self._get_for_update(str(event["item_id"]), MASK_VERIFICATION)
        if item.status == "closed":
            raise ConflictError(f"item {item.item_id!r} already decided")
        decision = {
            "reviewer_id": str(event["reviewer_id"]),
            "decision": str(event["decision"]),
            "reason": event.get("reason"),
            "timestamp": str(event["timestamp"]),
        }
        updated = replace(item, status="closed", decision=decision)
        self._items[item.item_id] = updated
        return updated

    def _apply_grade(self, event: dict) -> ReviewItem:
        item = self._get_for_update(str(event["item_id"]), EXPLANATION_GRADING)
        if item.status == "closed":
            raise ConflictError(f"item {item.item_id!r} already closed")
        reviewer_id = str(event["reviewer_id"])
        if any(g["reviewer_id"] == reviewer_id for g in item.grades):
            raise ConflictError(f"reviewer {reviewer_id!r} already graded {item.item_id!r}")
        grade = {
            "reviewer_id": reviewer_id,
            "correctness": int(event["correctness"]),
            "completeness": int(event["completeness"]),
            "comment": event.get("comment"),
            "timestamp": str(event["timestamp"]),
        }
        grades = item.grades + (grade,)
        status = item.status
        final = item.final_scores
        if item.status == "needs_adjudication":
            # The third reviewer's grade is final.
            status = "closed"
            final = {"correctness": grade["correctness"],
                     "completeness": grade["completeness"]}
        elif len(grades) == 2:
            first, second = grades
            if (first["correctness"] == second["correctness"]
                    and first["completeness"] == second["completeness"]):
                status = "closed"
                final = {"correctness": first["correctness"],
                         "completeness": first["completeness"]}
            else:
                status = "needs_adjudication"
        updated = replace(item, grades=grades, status=status, final_scores=final)
        self._items[item.item_id] = updated
        return updated

    def _append_and_apply(self, event: dict) -> ReviewItem:
        # Every _apply path validates fully before its first mutation, so a
        # raised event leaves state untouched and is never written to the log;
        # an appended event therefore always applies cleanly on replay.
        with self._lock:
            result = self._apply(event)
            if self._log_path is not None:
                self._log_path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, ensure_ascii=False) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            return result

    # -- operations -----------------------------------------------------------

    def enqueue(self, items: Iterable[dict]) -> int:
        """Append fresh items to the queue; duplicate item_ids conflict."""
        count = 0
        for entry in items:
            item_id = str(entry.get("item_id", ""))
            kind = str(entry.get("kind", ""))
            if kind not in KINDS:
                raise SchemaError(f"item kind {kind!r} not one of {KINDS}")
            if not item_id:
                raise SchemaError("item_id must be non-empty")
            event = {
                "type": "item_enqueued",
                "item_id": item_id,
                "kind": kind,
                "payload": dict(entry.get("payload", {})),
                "assigned_reviewers": list(entry.get("assigned_reviewers", ())),
                "timestamp": str(entry.get("timestamp") or _now()),
            }
            self._append_and_apply(event)
            count += 1
        return count

    def submit_verification(self, event: VerificationEvent) -> ReviewItem:
        return self._append_and_apply(
            {
                "type": "verification_submitted",
                "item_id": event.item_id,
                "reviewer_id": event.reviewer_id,
                "decision": event.decision,
                "reason": event.reason,
                "timestamp": event.timestamp,
            }
        )

    def submit_grade(self, event: GradeEvent) -> ReviewItem:
        return self._append_and_apply(
            {
                "type": "grade_submitted",
                "item_id": event.item_id,
                "reviewer_id": event.reviewer_id,
                "correctness": event.correctness,
                "completeness": event.completeness,
                "comment": event.comment,
                "timestamp": event.timestamp,
            }
        )

    # -- queries ---------------------------------------------------------------

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFoundError(f"item {item_id!r} does not exist")
        return item

    def list_items(
        self,
        kind: str | None = None,
        status: str | None = None,
        page: int = 1,
        page_size: int = 50,
    ) -> tuple[list[ReviewItem], int]:
        if kind is not None and kind not in KINDS:
            raise SchemaError(f"kind {kind!r} not one of {KINDS}")
        if status is not None and status not in STATUSES:
            raise SchemaError(f"status {status!r} not one of {STATUSES}")
        if page < 1 or page_size < 1:
            raise SchemaError("page and page_size must be positive")
        selected = [
            self._items[item_id]
            for item_id in self._order
            if (kind is None or self._items[item_id].kind == kind)
            and (status is None or self._items[item_id].status == status)
        ]
        start = (page - 1) * page_size
        return selected[start : start + page_size], len(selected)

    def verification_decisions(self) -> dict[str, str]:
        """masked_note_id -> 'approved'/'rejected' for every decided item."""
        decisions = {}
        for item_id in self._order:
            item = self._items[item_id]
            if item.kind == MASK_VERIFICATION and item.decision is not None:
                decisions[item_id] = (
                    "approved" if item.decision["decision"] == "approve" else "rejected"
                )
        return decisions

    def export_grades(self, kind: str | None = EXPLANATION_GRADING) -> dict:
        """Per-item final scores plus the score-distribution histogram
        (counts per 1..5 bucket per axis over closed grading items)."""
        rows = []
        histogram = {
            "correctness": {str(score): 0 for score in range(1, 6)},
            "completeness": {str(score): 0 for score in range(1, 6)},
        }
        for item_id in self._order:
            item = self._items[item_id]
            if kind is not None and item.kind != kind:
                continue
            if item.kind != EXPLANATION_GRADING or item.status != "closed":
                continue
            assert item.final_scores is not None
            rows.append(
                {
                    "item_id": item.item_id,
                    "correctness": item.final_scores["correctness"],
                    "completeness": item.final_scores["completeness"],
                    "n_grades": len(item.grades),
                }
            )
            histogram["correctness"][str(item.final_scores["correctness"])] += 1
            histogram["completeness"][str(item.final_scores["completeness"])] += 1
        return {"rows": rows, "histogram": histogram, "closed_items": len(rows)}

    def state_hash(self) -> str:
        """Hash of the full materialized state, for replay comparisons."""
        state = [self._items[item_id].to_state_dict() for item_id in self._order]
        canonical = json.dumps(state, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def counts(self) -> dict[str, int]:
        summary = {status: 0 for status in STATUSES}
        for item in self._items.values():
            summary[item.status] += 1
        summary["total"] = len(self._items)
        return summary
