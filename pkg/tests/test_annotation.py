"""Span alignment, the two-agent annotation protocol, and agreement."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dxbench.annotation import (
    AnnotatedNote,
    EvidenceSpan,
    align_quote,
    annotate_evidence,
    build_annotated_note,
    compute_iaa,
    load_annotated,
    save_annotated,
)
from dxbench.datamodel import NoteRecord
from dxbench.errors import AnnotationProtocolError, SchemaError, TransportError
from dxbench.gateway import StaticChatClient

from helpers import evidence_note, toy_criteria


# --- align_quote ---------------------------------------------------------------


def test_align_exact_offsets_counted_by_hand():
    assert align_quote("pH-7.20, HCO3-12", "HCO3-12") == (9, 16)


def test_align_whole_text():
    text = "some note body"
    assert align_quote(text, text) == (0, len(text))


def test_align_absent_quote_is_no_match():
    assert align_quote("pH-7.20, HCO3-12", "xyz") is None


def test_align_whitespace_normalized_maps_to_original_offsets():
    text = "fever  and\n chills persisted"
    start, end = align_quote(text, "fever and chills")
    assert text[start:end] == "fever  and\n chills"


def test_align_prefers_leftmost_occurrence():
    text = "fever noted. later fever again"
    assert align_quote(text, "fever") == (0, 5)


def test_align_empty_quote_rejected():
    with pytest.raises(SchemaError):
        align_quote("text", "")


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_aligned_quotes_reextract_byte_identically(data):
    words = data.draw(
        st.lists(st.sampled_from("alpha beta gamma delta eps zeta".split()),
                 min_size=3, max_size=30)
    )
    text = " ".join(words)
    lo = data.draw(st.integers(min_value=0, max_value=len(text) - 1))
    hi = data.draw(st.integers(min_value=lo + 1, max_value=len(text)))
    quote = text[lo:hi].strip()
    if not quote:
        return
    located = align_quote(text, quote)
    assert located is not None
    start, end = located
    assert text[start:end] == quote or " ".join(text[start:end].split()) == " ".join(
        quote.split()
    )


# --- span and note invariants -----------------------------------------------------


def test_span_quote_must_match_offsets():
    note = NoteRecord("n1", "fever and chills", "disease_00")
    bad = EvidenceSpan("c", 0, 5, "cough")
    with pytest.raises(SchemaError, match="quote does not match"):
        AnnotatedNote(note, (bad,), "evidence_complete", frozenset({"c"}))


def test_overlapping_spans_rejected():
    note = NoteRecord("n1", "fever and chills", "disease_00")
    spans = (
        EvidenceSpan("a", 0, 9, "fever and"),
        EvidenceSpan("b", 6, 16, "and chills"),
    )
    with pytest.raises(SchemaError, match="overlapping"):
        AnnotatedNote(note, spans, "evidence_complete", frozenset({"a", "b"}))


def test_completeness_derived_from_criteria():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    note = evidence_note("n1", criteria, "disease_00")
    assert note.is_complete
    partial = build_annotated_note(note.note, note.spans[:1], criteria)
    assert partial.completeness == "evidence_incomplete"


def test_annotated_file_round_trip(tmp_path):
    criteria = toy_criteria(n_diseases=1, n_criteria=3)
    notes = [evidence_note(f"n{i}", criteria, "disease_00") for i in range(4)]
    path = tmp_path / "annotated.ndjson"
    save_annotated(notes, path)
    loaded = load_annotated(path, {n.note.note_id: n.note for n in notes})
    assert loaded == notes


# --- agent protocol -----------------------------------------------------------------


def _extractor_answer(pairs):
    return json.dumps([{"criterion_id": c, "quote": q} for c, q in pairs])


def _protocol_client(extract_answers, verify_answer="[true, true, true]"):
    """Answers the extractor call(s) from a queue, then the verifier call."""
    queue = list(extract_answers)

    def answer(request):
        system = request.messages[0].content
        if "annotate clinical notes" in system:
            return queue.pop(0)
        count = request.last_user_content.count("\n") + 1  # unused, verifier below
        return verify_answer

    return StaticChatClient(answer)


def test_annotate_evidence_happy_path():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")
    pairs = [(s.criterion_id, s.quote) for s in base.spans]
    client = _protocol_client([_extractor_answer(pairs)], "[true, true]")
    result = annotate_evidence(base.note, criteria, client)
    assert [s.quote for s in result.spans] == [s.quote for s in base.spans]
    assert result.is_complete


def test_annotate_drops_quote_absent_from_note(caplog):
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")
    good = (base.spans[0].criterion_id, base.spans[0].quote)
    typo = (base.spans[1].criterion_id, "chest pian")
    client = _protocol_client([_extractor_answer([good, typo])], "[true]")
    with caplog.at_level("WARNING"):
        result = annotate_evidence(base.note, criteria, client)
    assert len(result.spans) == 1
    assert result.completeness == "evidence_incomplete"
    assert any("not found in note" in r.message for r in caplog.records)


def test_annotate_no_matching_evidence_yields_incomplete():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")
    client = _protocol_client(["[]"])
    result = annotate_evidence(base.note, criteria, client)
    assert result.spans == ()
    assert result.completeness == "evidence_incomplete"


def test_annotate_reprompts_once_then_fails():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")
    recovered = _protocol_client(
        ["not json at all", _extractor_answer([(base.spans[0].criterion_id,
                                                base.spans[0].quote)])],
        "[true]",
    )
    result = annotate_evidence(base.note, criteria, recovered)
    assert len(result.spans) == 1

    hopeless = _protocol_client(["still not json", "nope"])
    with pytest.raises(AnnotationProtocolError):
        annotate_evidence(base.note, criteria, hopeless)


def test_annotate_verifier_rejections_respected():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")
    pairs = [(s.criterion_id, s.quote) for s in base.spans]
    client = _protocol_client([_extractor_answer(pairs)], "[true, false]")
    result = annotate_evidence(base.note, criteria, client)
    assert len(result.spans) == 1
    assert result.spans[0].criterion_id == pairs[0][0]


def test_annotate_transport_error_propagates():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    base = evidence_note("n1", criteria, "disease_00")

    def failing(request):
        raise TransportError("endpoint down")

    with pytest.raises(TransportError):
        annotate_evidence(base.note, criteria, StaticChatClient(failing))


def test_annotate_is_deterministic_with_fixed_client():
    criteria = toy_criteria(n_diseases=1, n_criteria=3)
    base = evidence_note("n1", criteria, "disease_00")
    pairs = [(s.criterion_id, s.quote) for s in base.spans]

    def run():
        client = _protocol_client([_extractor_answer(pairs)], "[true, true, true]")
        return annotate_evidence(base.note, criteria, client)

    assert run() == run()


# --- inter-annotator agreement ------------------------------------------------------


def test_identical_annotations_give_perfect_agreement():
    criteria = toy_criteria(n_diseases=1, n_criteria=3)
    notes = [evidence_note(f"n{i}", criteria, "disease_00") for i in range(10)]
    report = compute_iaa(notes, list(notes), criteria)
    assert report.kappa == 1.0
    assert report.span_overlap_f1 == 1.0
    assert report.n_items == 10


def test_annotator_marking_nothing_yields_nonpositive_kappa():
    criteria = toy_criteria(n_diseases=1, n_criteria=4)
    full = [evidence_note(f"n{i}", criteria, "disease_00") for i in range(6)]
    # annotator A marks half the cells, B marks none
    a = [
        build_annotated_note(n.note, n.spans[:2], criteria)
        for n in full
    ]
    b = [build_annotated_note(n.note, (), criteria) for n in full]
    report = compute_iaa(a, b, criteria)
    assert report.kappa <= 0
    assert report.span_overlap_f1 == 0.0


def test_kappa_matches_hand_computed_two_by_two_table():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    full = [evidence_note(f"n{i}", criteria, "disease_00") for i in range(4)]
    # A marks both criteria on every note; B marks only the first criterion.
    a = full
    b = [build_annotated_note(n.note, n.spans[:1], criteria) for n in full]
    report = compute_iaa(a, b, criteria)
    # cells: both=4, a_only=4, b_only=0, neither=0 -> p_o=0.5, p_e=0.5
    assert report.kappa == pytest.approx(0.0)


def test_iaa_is_symmetric():
    criteria = toy_criteria(n_diseases=1, n_criteria=3)
    rng = random.Random(5)
    full = [evidence_note(f"n{i}", criteria, "disease_00", rng=rng) for i in range(8)]
    a = [build_annotated_note(n.note, n.spans[: rng.randint(0, 3)], criteria) for n in full]
    b = [build_annotated_note(n.note, n.spans[rng.randint(0, 2):], criteria) for n in full]
    forward = compute_iaa(a, b, criteria)
    backward = compute_iaa(b, a, criteria)
    assert forward.kappa == pytest.approx(backward.kappa)
    assert forward.span_overlap_f1 == pytest.approx(backward.span_overlap_f1)


def test_iaa_disjoint_note_sets_rejected():
    criteria = toy_criteria(n_diseases=1, n_criteria=2)
    a = [evidence_note("n1", criteria, "disease_00")]
    b = [evidence_note("n2", criteria, "disease_00")]
    with pytest.raises(SchemaError, match="note_id sets differ"):
        compute_iaa(a, b, criteria)
