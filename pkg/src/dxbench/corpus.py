"""Corpus directory convention shared by the CLI and experiments.

A corpus directory holds:
    notes.ndjson      raw note records
    annotated.ndjson  evidence annotations over those notes
    masked.ndjson     masked (evidence-incomplete) variants, optional

The working corpus is: every masked variant (subject to review-status
filtering) plus every annotated note that was not replaced by one.
"""

from __future__ import annotations

from pathlib import Path

from .annotation import AnnotatedNote, load_annotated, save_annotated
from .datamodel import load_notes, save_notes
from .errors import SchemaError
from .masking import CorpusItem, MaskedNote, filter_reviewed, load_masked, save_masked

NOTES_FILE = "notes.ndjson"
ANNOTATED_FILE = "annotated.ndjson"
MASKED_FILE = "masked.ndjson"


def save_corpus(
    annotated: list[AnnotatedNote],
    masked: list[MaskedNote],
    directory: str | Path,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_notes([a.note for a in annotated], directory / NOTES_FILE)
    save_annotated(annotated, directory / ANNOTATED_FILE)
    if masked:
        save_masked(masked, directory / MASKED_FILE)


def load_annotated_corpus(directory: str | Path) -> list[AnnotatedNote]:
    directory = Path(directory)
    notes_path = directory / NOTES_FILE
    annotated_path = directory / ANNOTATED_FILE
    if not notes_path.exists() or not annotated_path.exists():
        raise SchemaError(
            f"{directory} is not a corpus directory "
            f"(expects {NOTES_FILE} and {ANNOTATED_FILE})"
        )
    notes_by_id = {n.note_id: n for n in load_notes(notes_path)}
    return load_annotated(annotated_path, notes_by_id)


def load_corpus(
    directory: str | Path,
    allow_unreviewed: bool = False,
) -> list[CorpusItem]:
    """Masked variants (review-filtered) plus unreplaced annotated notes."""
    directory = Path(directory)
    annotated = load_annotated_corpus(directory)
    masked_path = directory / MASKED_FILE
    masked: list[MaskedNote] = []
    if masked_path.exists():
        masked = load_masked(masked_path, {a.note.note_id: a for a in annotated})
    masked = [m for m in filter_reviewed(masked, allow_unreviewed=allow_unreviewed)
              if isinstance(m, MaskedNote)]
    replaced = {m.base_note_id for m in masked}
    items: list[CorpusItem] = [a for a in annotated if a.note.note_id not in replaced]
    items.extend(masked)
    return items
