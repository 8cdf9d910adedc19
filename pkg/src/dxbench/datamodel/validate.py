"""Report-only corpus validation."""

from __future__ import annotations

from typing import Iterable

from .types import CriteriaSet, NoteRecord, ValidationIssue, ValidationReport


def validate_corpus(notes: Iterable[NoteRecord], criteria: CriteriaSet) -> ValidationReport:
    """List every note with an unresolvable diagnosis, empty text, or a
    duplicated id. The report is empty iff the corpus is valid."""
    issues: list[ValidationIssue] = []
    seen: set[str] = set()
    for note in notes:
        if note.note_id in seen:
            issues.append(ValidationIssue(note.note_id, "duplicate id", "note_id appears twice"))
        seen.add(note.note_id)
        if not note.text.strip():
            issues.append(ValidationIssue(note.note_id, "empty text", "note body is empty"))
        if not criteria.has_disease(note.primary_diagnosis):
            issues.append(
                ValidationIssue(
                    note.note_id,
                    "unresolved diagnosis",
                    f"primary_diagnosis {note.primary_diagnosis!r} is not in the criteria set",
                )
            )
    return ValidationReport(issues=tuple(issues))
