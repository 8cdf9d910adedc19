"""Criteria-grounded evidence annotation of clinical notes.

A two-role chat protocol produces the spans: an extractor proposes
(criterion, verbatim quote) pairs, a verifier accepts only quotes that
occur verbatim in the note and plausibly satisfy the criterion. Every
emitted span re-extracts byte-identically from the note at its offsets.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .datamodel import COMPLETENESS_VALUES, CriteriaSet, NoteRecord
from .errors import AnnotationProtocolError, SchemaError
from .gateway import ChatClient, ChatMessage, ChatRequest
from .ndjson import read_records, write_records

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvidenceSpan:
    """A verbatim substring of a note bound to exactly one criterion."""

    criterion_id: str
    start: int
    end: int
    quote: str

    def __post_init__(self) -> None:
        if not self.criterion_id:
            raise SchemaError("span criterion_id must be non-empty")
        if not (0 <= self.start < self.end):
            raise SchemaError(f"span offsets must satisfy 0 <= start < end, got "
                              f"({self.start}, {self.end})")
        if len(self.quote) != self.end - self.start:
            raise SchemaError(
                f"span quote length {len(self.quote)} does not cover [{self.start}, {self.end})"
            )

    def overlaps(self, other: "EvidenceSpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class AnnotatedNote:
    note: NoteRecord
    spans: tuple[EvidenceSpan, ...]
    completeness: str
    satisfied_criteria: frozenset[str]

    def __post_init__(self) -> None:
        if self.completeness not in COMPLETENESS_VALUES:
            raise SchemaError(
                f"completeness {self.completeness!r} not one of {COMPLETENESS_VALUES}"
            )
        text = self.note.text
        previous: EvidenceSpan | None = None
        for span in sorted(self.spans, key=lambda s: (s.start, s.end)):
            if span.end > len(text):
                raise SchemaError(
                    f"note {self.note.note_id!r}: span [{span.start}, {span.end}) "
                    f"exceeds text length {len(text)}"
                )
            if text[span.start : span.end] != span.quote:
                raise SchemaError(
                    f"note {self.note.note_id!r}: quote does not match text at "
                    f"[{span.start}, {span.end})"
                )
            if previous is not None and previous.end > span.start:
                raise SchemaError(f"note {self.note.note_id!r}: overlapping evidence spans")
            previous = span

    @property
    def is_complete(self) -> bool:
        return self.completeness == "evidence_complete"


@dataclass(frozen=True)
class AgreementReport:
    kappa: float
    span_overlap_f1: float
    n_items: int


def _collapse(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to single spaces; map each kept character
    back to its original index."""
    chars: list[str] = []
    index_map: list[int] = []
    for i, ch in enumerate(text):
        if ch.isspace():
            if chars and chars[-1] == " ":
                continue
            chars.append(" ")
        else:
            chars.append(ch)
        index_map.append(i)
    return "".join(chars), index_map


def align_quote(note_text: str, quote: str) -> tuple[int, int] | None:
    """Locate the leftmost occurrence of ``quote`` in ``note_text``.

    Tries an exact substring search first, then a whitespace-normalized
    search whose hit is mapped back to original offsets. Returns None when
    neither mode finds the quote.
    """
    if not quote:
        raise SchemaError("quote must be non-empty")
    index = note_text.find(quote)
    if index != -1:
        return index, index + len(quote)
    normalized_text, index_map = _collapse(note_text)
    normalized_quote, _ = _collapse(quote)
    normalized_quote = normalized_quote.strip()
    if not normalized_quote:
        return None
    position = normalized_text.find(normalized_quote)
    if position == -1:
        return None
    start = index_map[position]
    end = index_map[position + len(normalized_quote) - 1] + 1
    return start, end


def build_annotated_note(
    note: NoteRecord,
    spans: Iterable[EvidenceSpan],
    criteria: CriteriaSet,
) -> AnnotatedNote:
    """Assemble an AnnotatedNote, deriving the completeness label from the
    diagnosis's rule set."""
    ordered = tuple(sorted(spans, key=lambda s: (s.start, s.end)))
    satisfied = frozenset(s.criterion_id for s in ordered)
    complete = criteria.is_satisfied(note.primary_diagnosis, satisfied)
    return AnnotatedNote(
        note=note,
        spans=ordered,
        completeness="evidence_complete" if complete else "evidence_incomplete",
        satisfied_criteria=satisfied,
    )


# --- two-agent annotation protocol ------------------------------------------

EXTRACTOR_SYSTEM = (
    "You annotate clinical notes with diagnostic evidence. Given the diagnostic "
    "criteria for the note's primary diagnosis, extract every quote from the note "
    "that satisfies a criterion. Quotes must be copied character-for-character "
    "from the note. Answer with a JSON array of objects, each "
    '{"criterion_id": "...", "quote": "..."}, and nothing else. '
    "Answer [] when the note contains no matching evidence."
)

VERIFIER_SYSTEM = (
    "You verify proposed evidence annotations against a clinical note. Accept a "
    "candidate only when its quote occurs verbatim in the note and plausibly "
    "satisfies the named criterion. Answer with a JSON array of booleans, one per "
    "candidate in order, and nothing else."
)

_REPROMPT = (
    "Your previous answer was not a valid JSON array of the required shape. "
    "Answer again with only the JSON array."
)


def _extract_json_array(text: str) -> list | None:
    start = text.find("[")
    end = text.rfind("]")
    if start == -1 or end <= start:
        return None
    try:
        value = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    return value if isinstance(value, list) else None


def _ask_structured(
    client: ChatClient,
    request: ChatRequest,
    parse: Callable[[str], object | None],
    what: str,
):
    """One call plus at most one corrective reprompt, then failure."""
    response = client.complete(request)
    parsed = parse(response.text)
    if parsed is not None:
        return parsed
    retry = ChatRequest(
        model_id=request.model_id,
        messages=request.messages
        + (ChatMessage("assistant", response.text), ChatMessage("user", _REPROMPT)),
        temperature=request.temperature,
        max_tokens=request.max_tokens,
    )
    response = client.complete(retry)
    parsed = parse(response.text)
    if parsed is None:
        raise AnnotationProtocolError(f"{what}: malformed answer after one reprompt")
    return parsed


def _criteria_block(criteria: CriteriaSet, disease_id: str) -> str:
    return "\n".join(f"- {c.criterion_id}: {c.text}"
                     for c in criteria.criteria_for(disease_id))


def annotate_evidence(
    note: NoteRecord,
    criteria: CriteriaSet,
    client: ChatClient,
    model_id: str = "annotator",
    max_tokens: int = 4096,
) -> AnnotatedNote:
    """Run the extractor/verifier protocol over one note.

    Extractor pairs whose quote cannot be located in the note are dropped
    and logged, never silently kept. Accepted spans that overlap an earlier
    accepted span are likewise dropped and logged.
    """
    if not criteria.has_disease(note.primary_diagnosis):
        raise SchemaError(
            f"note {note.note_id!r}: diagnosis {note.primary_diagnosis!r} "
            f"not in the criteria set"
        )
    display = criteria.display_name(note.primary_diagnosis)
    block = _criteria_block(criteria, note.primary_diagnosis)

    def parse_pairs(text: str) -> list[tuple[str, str]] | None:
        raw = _extract_json_array(text)
        if raw is None:
            return None
        pairs = []
        for entry in raw:
            if not isinstance(entry, dict) or "criterion_id" not in entry or "quote" not in entry:
                return None
            pairs.append((str(entry["criterion_id"]), str(entry["quote"])))
        return pairs

    extract_request = ChatRequest(
        model_id=model_id,
        messages=(
            ChatMessage("system", EXTRACTOR_SYSTEM),
            ChatMessage(
                "user",
                f"Primary diagnosis: {display}\nDiagnostic criteria:\n{block}\n\n"
                f"Clinical note:\n{note.text}",
            ),
        ),
        max_tokens=max_tokens,
    )
    pairs = _ask_structured(client, extract_request, parse_pairs, "extractor")

    known = {c.criterion_id for c in criteria.criteria_for(note.primary_diagnosis)}
    candidates: list[EvidenceSpan] = []
    for criterion_id, quote in pairs:
        if criterion_id not in known:
            log.warning("note %s: dropped pair with unknown criterion %r",
                        note.note_id, criterion_id)
            continue
        if not quote:
            log.warning("note %s: dropped pair with empty quote", note.note_id)
            continue
        located = align_quote(note.text, quote)
        if located is None:
            log.warning("note %s: dropped quote not found in note: %r",
                        note.note_id, quote[:80])
            continue
        start, end = located
        candidates.append(EvidenceSpan(criterion_id, start, end, note.text[start:end]))

    accepted = candidates
    if candidates:
        numbered = "\n".join(
            f"{i + 1}. criterion {s.criterion_id}: \"{s.quote}\""
            for i, s in enumerate(candidates)
        )

        def parse_flags(text: str) -> list[bool] | None:
            raw = _extract_json_array(text)
            if raw is None or len(raw) != len(candidates):
                return None
            if not all(isinstance(v, bool) for v in raw):
                return None
            return raw

        verify_request = ChatRequest(
            model_id=model_id,
            messages=(
                ChatMessage("system", VERIFIER_SYSTEM),
                ChatMessage(
                    "user",
                    f"Primary diagnosis: {display}\nDiagnostic criteria:\n{block}\n\n"
                    f"Clinical note:\n{note.text}\n\nCandidates:\n{numbered}",
                ),
            ),
            max_tokens=max_tokens,
        )
        flags = _ask_structured(client, verify_request, parse_flags, "verifier")
        accepted = [span for span, ok in zip(candidates, flags) if ok]

    kept: list[EvidenceSpan] = []
    for span in sorted(accepted, key=lambda s: (s.start, s.end)):
        if kept and span.start < kept[-1].end:
            log.warning("note %s: dropped span overlapping an accepted span at %d",
                        note.note_id, span.start)
            continue
        kept.append(span)
    return build_annotated_note(note, kept, criteria)


# --- inter-annotator agreement -----------------------------------------------


def _interval_jaccard(a: EvidenceSpan, b: EvidenceSpan) -> float:
    overlap = min(a.end, b.end) - max(a.start, b.start)
    if overlap <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return overlap / union


def _match_spans(spans_a: Sequence[EvidenceSpan], spans_b: Sequence[EvidenceSpan]) -> int:
    """Greedy one-to-one matching: same criterion and character-overlap
    Jaccard >= 0.5, best overlaps first."""
    scored = []
    for i, sa in enumerate(spans_a):
        for j, sb in enumerate(spans_b):
            if sa.criterion_id != sb.criterion_id:
                continue
            jaccard = _interval_jaccard(sa, sb)
            if jaccard >= 0.5:
                scored.append((-jaccard, i, j))
    scored.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matches = 0
    for _, i, j in scored:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matches += 1
    return matches


def compute_iaa(
    a: Sequence[AnnotatedNote],
    b: Sequence[AnnotatedNote],
    criteria: CriteriaSet | None = None,
) -> AgreementReport:
    """Cohen's kappa over per-(note, criterion) evidence-present decisions,
    plus a span-level overlap F1.

    When ``criteria`` is given, the decision universe per note is the full
    rule set of the note's diagnosis; otherwise it is the union of criteria
    either annotator marked on that note.
    """
    by_id_a = {n.note.note_id: n for n in a}
    by_id_b = {n.note.note_id: n for n in b}
    if set(by_id_a) != set(by_id_b):
        raise SchemaError("annotator note_id sets differ; IAA needs the same notes")
    if not by_id_a:
        raise SchemaError("IAA over zero notes is undefined")

    both = a_only = b_only = neither = 0
    total_matches = 0
    total_spans_a = total_spans_b = 0
    for note_id in sorted(by_id_a):
        na, nb = by_id_a[note_id], by_id_b[note_id]
        marked_a = {s.criterion_id for s in na.spans}
        marked_b = {s.criterion_id for s in nb.spans}
        if criteria is not None:
            universe = {c.criterion_id
                        for c in criteria.criteria_for(na.note.primary_diagnosis)}
        else:
            universe = marked_a | marked_b
        for criterion_id in universe:
            in_a = criterion_id in marked_a
            in_b = criterion_id in marked_b
            if in_a and in_b:
                both += 1
            elif in_a:
                a_only += 1
            elif in_b:
                b_only += 1
            else:
                neither += 1
        total_matches += _match_spans(na.spans, nb.spans)
        total_spans_a += len(na.spans)
        total_spans_b += len(nb.spans)

    n_cells = both + a_only + b_only + neither
    if n_cells == 0:
        kappa = 1.0  # no decisions anywhere: vacuous agreement
    else:
        observed = (both + neither) / n_cells
        yes_a = (both + a_only) / n_cells
        yes_b = (both + b_only) / n_cells
        expected = yes_a * yes_b + (1 - yes_a) * (1 - yes_b)
        if expected == 1.0:
            kappa = 1.0 if observed == 1.0 else 0.0
        else:
            kappa = (observed - expected) / (1 - expected)

    denominator = total_spans_a + total_spans_b
    span_f1 = 1.0 if denominator == 0 else 2 * total_matches / denominator
    return AgreementReport(kappa=kappa, span_overlap_f1=span_f1, n_items=len(by_id_a))


# --- annotated-note file format ----------------------------------------------


def save_annotated(notes: Iterable[AnnotatedNote], path: str | Path) -> int:
    return write_records(
        path,
        (
            {
                "note_id": n.note.note_id,
                "completeness": n.completeness,
                "spans": [
                    {"criterion_id": s.criterion_id, "start": s.start, "end": s.end,
                     "quote": s.quote}
                    for s in n.spans
                ],
                "satisfied_criteria": sorted(n.satisfied_criteria),
            }
            for n in notes
        ),
    )


def load_annotated(path: str | Path, notes_by_id: Mapping[str, NoteRecord]) -> list[AnnotatedNote]:
    annotated = []
    for row in read_records(path):
        note_id = str(row.get("note_id", ""))
        if note_id not in notes_by_id:
            raise SchemaError(f"{path}: annotated record references unknown note {note_id!r}")
        spans = tuple(
            EvidenceSpan(
                criterion_id=str(s["criterion_id"]),
                start=int(s["start"]),
                end=int(s["end"]),
                quote=str(s["quote"]),
            )
            for s in row.get("spans", [])
        )
        annotated.append(
            AnnotatedNote(
                note=notes_by_id[note_id],
                spans=spans,
                completeness=str(row.get("completeness", "")),
                satisfied_criteria=frozenset(str(c) for c in row.get("satisfied_criteria", [])),
            )
        )
    return annotated
