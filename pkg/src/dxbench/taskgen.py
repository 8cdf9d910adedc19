"""The four diagnostic subtasks: demonstration rendering and answer parsing.

DD  disease diagnosis           -> the diagnosis name
DE  diagnostic explanation      -> the evidence quotes supporting it
UR  uncertainty recognition     -> sufficient vs insufficient information
UE  uncertainty explanation     -> what evidence is missing, or "None"

Instruction wording is template-driven (plain-text files, one per subtask,
with a ``{{note}}`` placeholder) so experiments can vary prompts without
code changes; the shipped defaults are documented in the README.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotation import AnnotatedNote
from .datamodel import CriteriaSet
from .errors import SchemaError
from .masking import MaskedNote
from .ndjson import read_records, write_records

LABEL_SUFFICIENT = "Sufficient information (Confident diagnosis)"
LABEL_INSUFFICIENT = "Insufficient information (Diagnostic uncertainty)"

SUFFICIENT = "sufficient_evidence"
INSUFFICIENT = "insufficient_evidence"

NOTE_PLACEHOLDER = "{{note}}"


class Subtask(str, Enum):
    DISEASE_DIAGNOSIS = "DD"
    DIAGNOSTIC_EXPLANATION = "DE"
    UNCERTAINTY_RECOGNITION = "UR"
    UNCERTAINTY_EXPLANATION = "UE"

    @classmethod
    def parse(cls, value: str) -> "Subtask":
        try:
            return cls(value.upper())
        except ValueError:
            raise SchemaError(
                f"unknown subtask {value!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


DEFAULT_TEMPLATES: dict[Subtask, str] = {
    Subtask.DISEASE_DIAGNOSIS: (
        "Read the clinical note and state the single most likely primary diagnosis. "
        "Answer with the diagnosis name only.\n\nClinical note:\n" + NOTE_PLACEHOLDER
    ),
    Subtask.DIAGNOSTIC_EXPLANATION: (
        "Read the clinical note and list the verbatim evidence supporting the primary "
        "diagnosis. Answer in the form: The below evidence support the diagnosis "
        '{"<evidence 1>", "<evidence 2>", ...}\n\nClinical note:\n' + NOTE_PLACEHOLDER
    ),
    Subtask.UNCERTAINTY_RECOGNITION: (
        "Read the clinical note and decide whether it contains sufficient evidence "
        "for a confident diagnosis of its primary disease. Answer exactly "
        f'"{LABEL_SUFFICIENT}" or "{LABEL_INSUFFICIENT}".'
        "\n\nClinical note:\n" + NOTE_PLACEHOLDER
    ),
    Subtask.UNCERTAINTY_EXPLANATION: (
        "Read the clinical note. If evidence required for a confident diagnosis is "
        "missing, list each missing item on its own line as: "
        'Lack of evidence on "<diagnostic criterion>". '
        'If nothing is missing, answer "None".\n\nClinical note:\n' + NOTE_PLACEHOLDER
    ),
}

_TEMPLATE_FILES = {
    Subtask.DISEASE_DIAGNOSIS: "dd.txt",
    Subtask.DIAGNOSTIC_EXPLANATION: "de.txt",
    Subtask.UNCERTAINTY_RECOGNITION: "ur.txt",
    Subtask.UNCERTAINTY_EXPLANATION: "ue.txt",
}


def load_templates(directory: str | Path | None = None) -> dict[Subtask, str]:
    """Default templates, overridden per subtask by ``<dir>/{dd,de,ur,ue}.txt``."""
    templates = dict(DEFAULT_TEMPLATES)
    if directory is not None:
        base = Path(directory)
        for subtask, name in _TEMPLATE_FILES.items():
            path = base / name
            if path.exists():
                templates[subtask] = path.read_text("utf-8").rstrip("\n")
    return templates


def write_default_templates(directory: str | Path) -> None:
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    for subtask, name in _TEMPLATE_FILES.items():
        (base / name).write_text(DEFAULT_TEMPLATES[subtask] + "\n", "utf-8")


@dataclass(frozen=True)
class Demonstration:
    note_id: str
    subtask: Subtask
    instruction: str
    input: str
    output: str


@dataclass(frozen=True)
class ParsedPrediction:
    note_id: str
    subtask: Subtask
    raw: str
    parse_ok: bool
    diagnosis: str | None = None
    explanations: tuple[str, ...] | None = None
    uncertainty_label: str | None = None
    uncertainty_explanations: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.parse_ok:
            populated = [
                f for f in ("diagnosis", "explanations", "uncertainty_label",
                            "uncertainty_explanations")
                if getattr(self, f) is not None
            ]
            if populated:
                raise SchemaError(f"failed parse must not populate {populated}")


def _item_fields(item: AnnotatedNote | MaskedNote) -> tuple[str, str, str, list[str], list[str]]:
    """(note_id, text, disease_id, evidence quotes, uncertainty explanations)."""
    if isinstance(item, MaskedNote):
        if not item.diagnosis:
            raise SchemaError(f"masked note {item.masked_note_id!r} has no resolved diagnosis")
        return (
            item.masked_note_id,
            item.text,
            item.diagnosis,
            [s.quote for s in item.surviving_spans],
            list(item.uncertainty_explanation),
        )
    return (
        item.note.note_id,
        item.note.text,
        item.note.primary_diagnosis,
        [s.quote for s in item.spans],
        [],
    )


def render_explanation_block(quotes: Sequence[str]) -> str:
    joined = ", ".join(f'"{q}"' for q in quotes)
    return "The below evidence support the diagnosis {" + joined + "}"


def render_demonstration(
    item: AnnotatedNote | MaskedNote,
    subtask: Subtask,
    templates: Mapping[Subtask, str],
    criteria: CriteriaSet | None = None,
) -> Demonstration:
    """Deterministically assemble one instruction record for ``item``.

    The diagnosis string is the display name when ``criteria`` is given,
    else the raw disease id.
    """
    if subtask not in templates:
        raise SchemaError(f"no template for subtask {subtask.value}")
    note_id, text, disease_id, quotes, uncertainty = _item_fields(item)
    diagnosis = criteria.display_name(disease_id) if criteria is not None else disease_id

    if subtask is Subtask.DISEASE_DIAGNOSIS:
        output = diagnosis
    elif subtask is Subtask.DIAGNOSTIC_EXPLANATION:
        output = render_explanation_block(quotes)
    elif subtask is Subtask.UNCERTAINTY_RECOGNITION:
        output = LABEL_INSUFFICIENT if isinstance(item, MaskedNote) else LABEL_SUFFICIENT
    else:
        output = "\n".join(uncertainty) if uncertainty else "None"
    return Demonstration(
        note_id=note_id,
        subtask=subtask,
        instruction=templates[subtask],
        input=text,
        output=output,
    )


def build_prompt(demo: Demonstration) -> str:
    if NOTE_PLACEHOLDER in demo.instruction:
        return demo.instruction.replace(NOTE_PLACEHOLDER, demo.input)
    return f"{demo.instruction}\n\n{demo.input}"


def export_training_file(demos: Sequence[Demonstration], path: str | Path) -> int:
    """Write line-delimited {instruction, input, output, subtask, note_id}
    records for external fine-tuning; returns the record count."""
    if not demos:
        raise SchemaError("refusing to export an empty demonstration set")
    return write_records(
        path,
        (
            {
                "instruction": d.instruction,
                "input": d.input,
                "output": d.output,
                "subtask": d.subtask.value,
                "note_id": d.note_id,
            }
            for d in demos
        ),
    )


# --- output parsing -------------------------------------------------------

_QUOTED = re.compile(r'"([^"]*)"')
_BULLET_PREFIX = re.compile(r"^\s*(?:[-*•]|\(?\d+[.)\]]?)\s+")
_DD_PREFIX = re.compile(r"^\s*(?:predicted\s+)?diagnosis\s*[:\-]\s*", re.IGNORECASE)


def _failed(note_id: str, subtask: Subtask, raw: str) -> ParsedPrediction:
    return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw, parse_ok=False)


def _parse_list(raw: str) -> list[str] | None:
    """Quoted strings inside braces; else comma-split brace contents; else
    bullet/numbered/plain lines. None means no parseable structure; an
    empty brace list is a valid empty result."""
    open_brace = raw.find("{")
    close_brace = raw.rfind("}")
    if open_brace != -1 and close_brace > open_brace:
        inner = raw[open_brace + 1 : close_brace]
        quoted = _QUOTED.findall(inner)
        if quoted:
            return [q.strip() for q in quoted if q.strip()]
        return [part.strip() for part in inner.split(",") if part.strip()]
    items = []
    for line in raw.splitlines():
        line = _BULLET_PREFIX.sub("", line).strip()
        if line:
            items.append(line)
    return items or None


def parse_prediction(raw: str, subtask: Subtask, note_id: str = "") -> ParsedPrediction:
    """Parse a raw model answer; never raises. Failure is encoded as
    ``parse_ok=False`` with all prediction fields absent and the raw text
    retained."""
    text = raw.strip()
    if not text:
        return _failed(note_id, subtask, raw)

    if subtask is Subtask.DISEASE_DIAGNOSIS:
        for line in text.splitlines():
            line = _DD_PREFIX.sub("", line).strip()
            if line:
                return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw,
                                        parse_ok=True, diagnosis=line)
        return _failed(note_id, subtask, raw)

    if subtask is Subtask.UNCERTAINTY_RECOGNITION:
        lowered = text.lower()
        # "insufficient" contains "sufficient", so it must be checked first.
        if "insufficient" in lowered:
            label = INSUFFICIENT
        elif "sufficient" in lowered:
            label = SUFFICIENT
        else:
            return _failed(note_id, subtask, raw)
        return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw,
                                parse_ok=True, uncertainty_label=label)

    if subtask is Subtask.UNCERTAINTY_EXPLANATION:
        if text.lower().rstrip(".") == "none":
            return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw,
                                    parse_ok=True, uncertainty_explanations=())
        items = _parse_list(text)
        if items is None:
            return _failed(note_id, subtask, raw)
        return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw,
                                parse_ok=True, uncertainty_explanations=tuple(items))

    items = _parse_list(text)
    if items is None:
        return _failed(note_id, subtask, raw)
    return ParsedPrediction(note_id=note_id, subtask=subtask, raw=raw,
                            parse_ok=True, explanations=tuple(items))


# --- prediction file format -------------------------------------------------


def save_predictions(predictions: Iterable[ParsedPrediction], path: str | Path) -> int:
    def record(p: ParsedPrediction) -> dict:
        parsed: dict[str, object] = {"parse_ok": p.parse_ok}
        if p.diagnosis is not None:
            parsed["diagnosis"] = p.diagnosis
        if p.explanations is not None:
            parsed["explanations"] = list(p.explanations)
        if p.uncertainty_label is not None:
            parsed["uncertainty_label"] = p.uncertainty_label
        if p.uncertainty_explanations is not None:
            parsed["uncertainty_explanations"] = list(p.uncertainty_explanations)
        return {"note_id": p.note_id, "subtask": p.subtask.value, "raw": p.raw,
                "parsed": parsed}

    return write_records(path, (record(p) for p in predictions))


def load_predictions(path: str | Path) -> list[ParsedPrediction]:
    predictions = []
    for row in read_records(path):
        parsed = row.get("parsed", {})
        explanations = parsed.get("explanations")
        uncertainty = parsed.get("uncertainty_explanations")
        predictions.append(
            ParsedPrediction(
                note_id=str(row.get("note_id", "")),
                subtask=Subtask.parse(str(row.get("subtask", ""))),
                raw=str(row.get("raw", "")),
                parse_ok=bool(parsed.get("parse_ok", False)),
                diagnosis=parsed.get("diagnosis"),
                explanations=tuple(explanations) if explanations is not None else None,
                uncertainty_label=parsed.get("uncertainty_label"),
                uncertainty_explanations=(
                    tuple(uncertainty) if uncertainty is not None else None
                ),
            )
        )
    return predictions
