"""Evidence masking: derive uncertainty ground truth from complete notes.

Masking removes the whole sentence containing a chosen evidence span (a
placeholder token would leak the mask location), records which criteria
lost their evidence, and renders one explanation string per masked
criterion. Masked notes start life as ``pending`` and pass through the
expert review queue before they are eligible for splits.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotation import AnnotatedNote, EvidenceSpan, align_quote
from .datamodel import CriteriaSet, SplitItem
from .errors import InfeasibleMaskError, SchemaError
from .ndjson import read_records, write_records

log = logging.getLogger(__name__)

REVIEW_STATUSES = ("pending", "approved", "rejected")
UNCERTAINTY_LABEL = "insufficient_evidence"

_SENTENCE_TERMINATORS = ".!?\n"
_MAX_MASK_ATTEMPTS = 16


@dataclass(frozen=True)
class MaskedNote:
    """An evidence-incomplete derivative of an annotated note.

    ``diagnosis`` and ``surviving_spans`` are derived conveniences (needed
    to render demonstrations); the file format stores only the base fields
    and the loader reconstructs them from the base note.
    """

    masked_note_id: str
    base_note_id: str
    text: str
    masked_criteria: tuple[str, ...]
    uncertainty_explanation: tuple[str, ...]
    review_status: str = "pending"
    uncertainty_label: str = UNCERTAINTY_LABEL
    diagnosis: str = ""
    surviving_spans: tuple[EvidenceSpan, ...] = ()

    def __post_init__(self) -> None:
        if not self.masked_criteria:
            raise SchemaError("masked_criteria must be non-empty")
        if self.uncertainty_label != UNCERTAINTY_LABEL:
            raise SchemaError("every masked note is an insufficient-evidence case")
        if len(self.uncertainty_explanation) != len(self.masked_criteria):
            raise SchemaError(
                f"{len(self.uncertainty_explanation)} explanations for "
                f"{len(self.masked_criteria)} masked criteria"
            )
        if self.review_status not in REVIEW_STATUSES:
            raise SchemaError(
                f"review_status {self.review_status!r} not one of {REVIEW_STATUSES}"
            )


def explanation_for(criterion_text: str) -> str:
    return f'Lack of evidence on "{criterion_text}"'


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Maximal segments between sentence terminators or newlines; each
    segment keeps its terminator run. The segments tile the text."""
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _SENTENCE_TERMINATORS:
            j = i + 1
            while j < n and text[j] in _SENTENCE_TERMINATORS:
                j += 1
            spans.append((start, j))
            start = j
            i = j
        else:
            i += 1
    if start < n:
        spans.append((start, n))
    return spans


def _covered_sentences(span: EvidenceSpan, sentences: Sequence[tuple[int, int]]) -> frozenset[int]:
    covered = frozenset(
        i for i, (s, e) in enumerate(sentences) if span.start < e and s < span.end
    )
    if not covered:
        raise SchemaError(f"span [{span.start}, {span.end}) lies outside every sentence")
    return covered


def mask_evidence(
    note: AnnotatedNote,
    criteria: CriteriaSet,
    k: int = 1,
    seed: int = 0,
) -> MaskedNote:
    """Remove the sentences carrying ``k`` seeded-sampled evidence spans.

    A candidate span is skipped (and another drawn) when removing its
    sentences would delete a surviving span's sentence, or when another
    surviving span still evidences the same criterion. The returned note is
    verified exhaustively: no masked quote occurs in the masked text and
    every surviving quote still does; when no selection passes, raises
    InfeasibleMaskError.
    """
    if not note.is_complete:
        raise SchemaError(f"note {note.note.note_id!r} is not evidence_complete")
    spans = note.spans
    n_spans = len(spans)
    if not (1 <= k <= n_spans - 1):
        raise SchemaError(
            f"k must satisfy 1 <= k <= {n_spans - 1} (spans - 1), got {k}"
        )
    text = note.note.text
    sentences = sentence_spans(text)
    span_sents = [_covered_sentences(s, sentences) for s in spans]

    for attempt in range(_MAX_MASK_ATTEMPTS):
        rng = random.Random(f"{seed}|{note.note.note_id}|{attempt}")
        order = list(range(n_spans))
        rng.shuffle(order)
        chosen: list[int] = []
        for idx in order:
            if len(chosen) == k:
                break
            tentative = set(chosen) | {idx}
            removed = frozenset().union(*(span_sents[i] for i in tentative))
            survivors = [j for j in range(n_spans) if j not in tentative]
            if any(span_sents[j] & removed for j in survivors):
                continue
            if any(spans[j].criterion_id == spans[idx].criterion_id for j in survivors):
                continue
            chosen.append(idx)
        if len(chosen) < k:
            continue

        removed = frozenset().union(*(span_sents[i] for i in chosen))
        masked_text = "".join(
            text[s:e] for i, (s, e) in enumerate(sentences) if i not in removed
        )
        masked_quotes = {spans[i].quote for i in chosen}
        surviving = [spans[j] for j in range(n_spans) if j not in chosen]
        # Exhaustive soundness check: sentence joins can in principle create
        # new substrings, and a masked quote may recur verbatim elsewhere.
        if any(q in masked_text for q in masked_quotes):
            continue
        if any(s.quote not in masked_text for s in surviving):
            continue

        realigned = []
        for span in surviving:
            located = align_quote(masked_text, span.quote)
            assert located is not None
            realigned.append(
                EvidenceSpan(span.criterion_id, located[0], located[1], span.quote)
            )
        masked_criteria = tuple(sorted({spans[i].criterion_id for i in chosen}))
        explanations = tuple(
            explanation_for(criteria.criterion(c).text) for c in masked_criteria
        )
        return MaskedNote(
            masked_note_id=f"{note.note.note_id}-masked",
            base_note_id=note.note.note_id,
            text=masked_text,
            masked_criteria=masked_criteria,
            uncertainty_explanation=explanations,
            review_status="pending",
            diagnosis=note.note.primary_diagnosis,
            surviving_spans=tuple(sorted(realigned, key=lambda s: (s.start, s.end))),
        )
    raise InfeasibleMaskError(
        f"note {note.note.note_id!r}: no valid selection of {k} spans exists"
    )


CorpusItem = AnnotatedNote | MaskedNote


def build_balanced_corpus(
    complete: Sequence[AnnotatedNote],
    criteria: CriteriaSet,
    seed: int,
    k: int = 1,
) -> tuple[list[CorpusItem], list[str]]:
    """Replace a seeded half of each disease's notes with masked variants.

    Returns the corpus plus warning strings for diseases left unbalanced
    (fewer than two eligible notes, or masking infeasible on too many).
    """
    by_disease: dict[str, list[AnnotatedNote]] = {}
    for note in complete:
        if not note.is_complete:
            raise SchemaError(f"note {note.note.note_id!r} is not evidence_complete")
        by_disease.setdefault(note.note.primary_diagnosis, []).append(note)

    items: list[CorpusItem] = []
    warnings: list[str] = []
    for disease_id in sorted(by_disease):
        notes = sorted(by_disease[disease_id], key=lambda n: n.note.note_id)
        eligible = [n for n in notes if len(n.spans) >= 2]
        target = len(notes) // 2
        if len(eligible) < 2:
            warnings.append(
                f"disease {disease_id}: fewer than 2 eligible notes; emitted unbalanced"
            )
            items.extend(notes)
            continue
        order = list(eligible)
        random.Random(f"{seed}|{disease_id}").shuffle(order)
        masked: list[MaskedNote] = []
        replaced: set[str] = set()
        for note in order:
            if len(masked) == target:
                break
            try:
                masked.append(mask_evidence(note, criteria, k=k, seed=seed))
            except InfeasibleMaskError:
                log.warning("disease %s: masking infeasible for note %s; drew another",
                            disease_id, note.note.note_id)
                continue
            replaced.add(note.note.note_id)
        if len(masked) < target:
            warnings.append(
                f"disease {disease_id}: masked only {len(masked)} of {target} notes; "
                f"emitted unbalanced"
            )
        items.extend(n for n in notes if n.note.note_id not in replaced)
        items.extend(masked)
    return items, warnings


def apply_review_decisions(
    items: Iterable[CorpusItem],
    decisions: Mapping[str, str],
) -> list[CorpusItem]:
    """Stamp review decisions ('approved'/'rejected') onto masked notes."""
    out: list[CorpusItem] = []
    for item in items:
        if isinstance(item, MaskedNote) and item.masked_note_id in decisions:
            status = decisions[item.masked_note_id]
            if status not in REVIEW_STATUSES:
                raise SchemaError(f"unknown review status {status!r}")
            out.append(replace(item, review_status=status))
        else:
            out.append(item)
    return out


def filter_reviewed(items: Iterable[CorpusItem], allow_unreviewed: bool = False) -> list[CorpusItem]:
    """Drop rejected masked notes always; drop pending ones unless
    ``allow_unreviewed`` is set."""
    out: list[CorpusItem] = []
    for item in items:
        if isinstance(item, MaskedNote):
            if item.review_status == "rejected":
                continue
            if item.review_status == "pending" and not allow_unreviewed:
                continue
        out.append(item)
    return out


def corpus_split_items(items: Iterable[CorpusItem]) -> list[SplitItem]:
    labels = []
    for item in items:
        if isinstance(item, MaskedNote):
            if not item.diagnosis:
                raise SchemaError(
                    f"masked note {item.masked_note_id!r} has no resolved diagnosis"
                )
            labels.append(SplitItem(item.masked_note_id, item.diagnosis, complete=False))
        else:
            labels.append(
                SplitItem(item.note.note_id, item.note.primary_diagnosis,
                          complete=item.is_complete)
            )
    return labels


# --- masked-note file format ---------------------------------------------------


def save_masked(notes: Iterable[MaskedNote], path: str | Path) -> int:
    return write_records(
        path,
        (
            {
                "masked_note_id": n.masked_note_id,
                "base_note_id": n.base_note_id,
                "text": n.text,
                "masked_criteria": list(n.masked_criteria),
                "uncertainty_explanation": list(n.uncertainty_explanation),
                "review_status": n.review_status,
            }
            for n in notes
        ),
    )


def load_masked(
    path: str | Path,
    annotated_by_id: Mapping[str, AnnotatedNote],
) -> list[MaskedNote]:
    """Load masked notes, reconstructing diagnosis and surviving spans from
    the base annotated notes and re-checking the masking invariants."""
    masked = []
    for row in read_records(path):
        base_id = str(row.get("base_note_id", ""))
        if base_id not in annotated_by_id:
            raise SchemaError(f"{path}: masked record references unknown base note {base_id!r}")
        base = annotated_by_id[base_id]
        text = str(row.get("text", ""))
        masked_criteria = tuple(str(c) for c in row.get("masked_criteria", []))
        surviving = []
        for span in base.spans:
            if span.criterion_id in masked_criteria:
                if span.quote in text:
                    raise SchemaError(
                        f"{path}: masked quote still present in {row.get('masked_note_id')!r}"
                    )
                continue
            located = align_quote(text, span.quote)
            if located is None:
                raise SchemaError(
                    f"{path}: surviving quote missing from {row.get('masked_note_id')!r}"
                )
            surviving.append(EvidenceSpan(span.criterion_id, located[0], located[1],
                                          text[located[0]:located[1]]))
        masked.append(
            MaskedNote(
                masked_note_id=str(row.get("masked_note_id", "")),
                base_note_id=base_id,
                text=text,
                masked_criteria=masked_criteria,
                uncertainty_explanation=tuple(
                    str(e) for e in row.get("uncertainty_explanation", [])
                ),
                review_status=str(row.get("review_status", "pending")),
                diagnosis=base.note.primary_diagnosis,
                surviving_spans=tuple(surviving),
            )
        )
    return masked
