"""Builders for enqueue-ready review items.

These fix the payload conventions the browser frontend renders:
verification items carry both note texts plus the criteria panel, grading
items carry the note, the predicted explanations, and the ground truth.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from ..annotation import AnnotatedNote
from ..datamodel import CriteriaSet
from ..errors import SchemaError
from ..masking import MaskedNote


def verification_items(
    masked: Sequence[MaskedNote],
    annotated_by_id: Mapping[str, AnnotatedNote],
    criteria: CriteriaSet,
) -> list[dict]:
    items = []
    for note in masked:
        base = annotated_by_id.get(note.base_note_id)
        if base is None:
            raise SchemaError(f"masked note {note.masked_note_id!r} has no base note")
        disease_id = base.note.primary_diagnosis
        items.append(
            {
                "item_id": note.masked_note_id,
                "kind": "mask_verification",
                "payload": {
                    "masked_note_id": note.masked_note_id,
                    "base_note_id": note.base_note_id,
                    "original_text": base.note.text,
                    "masked_text": note.text,
                    "diagnosis": criteria.display_name(disease_id),
                    "criteria": [
                        {"criterion_id": c.criterion_id, "text": c.text}
                        for c in criteria.criteria_for(disease_id)
                    ],
                    "masked_criteria": list(note.masked_criteria),
                    "uncertainty_explanation": list(note.uncertainty_explanation),
                },
            }
        )
    return items


def grading_items(
    entries: Sequence[dict],
) -> list[dict]:
    """Each entry: {item_id, note_text, predicted_explanations[],
    ground_truth_explanations[], model_id?}. The service scrubs model
    identity from served payloads unless explicitly configured not to."""
    items = []
    for entry in entries:
        for field in ("item_id", "note_text", "predicted_explanations",
                      "ground_truth_explanations"):
            if field not in entry:
                raise SchemaError(f"grading item is missing {field!r}")
        payload = {
            "note_text": entry["note_text"],
            "predicted_explanations": list(entry["predicted_explanations"]),
            "ground_truth_explanations": list(entry["ground_truth_explanations"]),
        }
        if "model_id" in entry:
            payload["model_id"] = entry["model_id"]
        items.append(
            {
                "item_id": entry["item_id"],
                "kind": "explanation_grading",
                "payload": payload,
            }
        )
    return items
