"""Readers and writers for the criteria, notes, and split-manifest formats.

Criteria file: NDJSON; the first line is a header record carrying
``{version, diseases[]}``, every following line is one criterion with
``{criterion_id, disease_id, text, category, requirement}`` where
``requirement`` is ``"required"`` or ``{"any_of": "<group_id>"}``.

Notes file: NDJSON, one ``{note_id, text, primary_diagnosis, source}``
record per line.

Split manifest: a single JSON document
``{seed, ratios, train[], validation[], test[]}``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from ..errors import SchemaError
from ..ndjson import read_records, write_records
from .types import ANY_OF, REQUIRED, CriteriaSet, Criterion, DatasetSplit, Disease, NoteRecord


def _require(record: dict, field: str, path: str | Path, where: str) -> object:
    if field not in record:
        raise SchemaError(f"{path}: {where} is missing required field {field!r}")
    return record[field]


def load_criteria(path: str | Path) -> CriteriaSet:
    records = list(read_records(path))
    if not records:
        raise SchemaError(f"{path}: criteria file is empty")
    header, *rows = records
    version = str(_require(header, "version", path, "header record"))
    disease_rows = _require(header, "diseases", path, "header record")
    if not isinstance(disease_rows, list):
        raise SchemaError(f"{path}: header field 'diseases' must be a list")
    diseases = tuple(
        Disease(
            disease_id=str(_require(row, "disease_id", path, "disease entry")),
            display_name=str(_require(row, "display_name", path, "disease entry")),
            specialty=str(row.get("specialty", "other")),
        )
        for row in disease_rows
    )
    criteria = []
    for row in rows:
        requirement = _require(row, "requirement", path, "criterion record")
        if requirement == REQUIRED:
            kind, group = REQUIRED, None
        elif isinstance(requirement, dict) and set(requirement) == {ANY_OF}:
            kind, group = ANY_OF, str(requirement[ANY_OF])
        else:
            raise SchemaError(
                f"{path}: criterion field 'requirement' must be \"required\" or "
                f'{{"any_of": "<group_id>"}}, got {requirement!r}'
            )
        criteria.append(
            Criterion(
                criterion_id=str(_require(row, "criterion_id", path, "criterion record")),
                disease_id=str(_require(row, "disease_id", path, "criterion record")),
                text=str(_require(row, "text", path, "criterion record")),
                category=str(_require(row, "category", path, "criterion record")),
                requirement=kind,
                group_id=group,
            )
        )
    return CriteriaSet(version=version, diseases=diseases, criteria=tuple(criteria))


def save_criteria(criteria: CriteriaSet, path: str | Path) -> None:
    def records():
        yield {
            "version": criteria.version,
            "diseases": [
                {
                    "disease_id": d.disease_id,
                    "display_name": d.display_name,
                    "specialty": d.specialty,
                }
                for d in criteria.diseases
            ],
        }
        for c in criteria.criteria:
            yield {
                "criterion_id": c.criterion_id,
                "disease_id": c.disease_id,
                "text": c.text,
                "category": c.category,
                "requirement": REQUIRED if c.requirement == REQUIRED else {ANY_OF: c.group_id},
            }

    write_records(path, records())


def load_notes(path: str | Path) -> list[NoteRecord]:
    notes = []
    for row in read_records(path):
        notes.append(
            NoteRecord(
                note_id=str(_require(row, "note_id", path, "note record")),
                text=str(_require(row, "text", path, "note record")),
                primary_diagnosis=str(_require(row, "primary_diagnosis", path, "note record")),
                source=str(row.get("source", "user_corpus")),
            )
        )
    return notes


def save_notes(notes: list[NoteRecord], path: str | Path) -> int:
    return write_records(
        path,
        (
            {
                "note_id": n.note_id,
                "text": n.text,
                "primary_diagnosis": n.primary_diagnosis,
                "source": n.source,
            }
            for n in notes
        ),
    )


def save_split(split: DatasetSplit, path: str | Path) -> None:
    document = {
        "seed": split.seed,
        "ratios": [str(r) for r in split.ratios],
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
    }
    Path(path).write_text(json.dumps(document, indent=2, ensure_ascii=False) + "\n", "utf-8")


def load_split(path: str | Path) -> DatasetSplit:
    try:
        document = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid split manifest: {exc}") from exc
    for field in ("seed", "ratios", "train", "validation", "test"):
        _require(document, field, path, "split manifest")
    ratios = tuple(Fraction(str(r)) for r in document["ratios"])
    if len(ratios) != 3:
        raise SchemaError(f"{path}: ratios must have exactly three entries")
    return DatasetSplit(
        train=tuple(document["train"]),
        validation=tuple(document["validation"]),
        test=tuple(document["test"]),
        seed=int(document["seed"]),
        ratios=ratios,  # type: ignore[arg-type]
    )
