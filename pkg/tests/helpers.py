"""Shared fixtures: synthetic criteria/corpora, oracle clients, fake server."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from dxbench.annotation import AnnotatedNote, EvidenceSpan, build_annotated_note
from dxbench.datamodel import CriteriaSet, Criterion, Disease, NoteRecord
from dxbench.gateway import StaticChatClient
from dxbench.masking import CorpusItem, build_balanced_corpus
from dxbench.taskgen import Subtask, build_prompt, load_templates, render_demonstration

_FILLER_WORDS = (
    "patient stable overnight vitals reviewed by team and plan discussed "
    "with family no acute events noted continues on current regimen"
).split()


def toy_criteria(
    n_diseases: int = 2,
    n_criteria: int = 3,
    with_any_of: bool = False,
    version: str = "1.0",
) -> CriteriaSet:
    diseases = []
    criteria = []
    for d in range(n_diseases):
        disease_id = f"disease_{d:02d}"
        diseases.append(Disease(disease_id, f"Disease {d:02d}", "other"))
        for c in range(n_criteria):
            criteria.append(
                Criterion(
                    criterion_id=f"{disease_id}_c{c}",
                    disease_id=disease_id,
                    text=f"Finding number {c} typical of disease {d:02d}",
                    category="symptom",
                )
            )
        if with_any_of:
            for g in range(2):
                criteria.append(
                    Criterion(
                        criterion_id=f"{disease_id}_g{g}",
                        disease_id=disease_id,
                        text=f"Alternative marker {g} of disease {d:02d}",
                        category="laboratory",
                        requirement="any_of",
                        group_id=f"{disease_id}_grp",
                    )
                )
    return CriteriaSet(version=version, diseases=tuple(diseases), criteria=tuple(criteria))


def evidence_note(
    note_id: str,
    criteria: CriteriaSet,
    disease_id: str,
    rng: random.Random | None = None,
    satisfied: list[str] | None = None,
) -> AnnotatedNote:
    """A note with one evidence sentence per (satisfied) criterion; each
    quote carries a note-unique marker so masking is always feasible."""
    rng = rng or random.Random(note_id)
    rules = criteria.criteria_for(disease_id)
    if satisfied is not None:
        rules = tuple(r for r in rules if r.criterion_id in satisfied)
    sentences = [f"Patient {note_id} was admitted for evaluation."]
    quotes: list[tuple[str, str]] = []
    for index, rule in enumerate(rules):
        marker = f"{note_id}x{index}q{rng.randint(100, 999)}"
        quote = f"observed {rule.criterion_id.replace('_', ' ')} marker {marker}"
        sentences.append(f"On review the team {quote} during the stay.")
        if rng.random() < 0.5:
            filler = " ".join(rng.choice(_FILLER_WORDS) for _ in range(6))
            sentences.append(f"Also {filler}.")
        quotes.append((rule.criterion_id, quote))
    text = " ".join(sentences)
    spans = []
    for criterion_id, quote in quotes:
        start = text.find(quote)
        assert start != -1
        spans.append(EvidenceSpan(criterion_id, start, start + len(quote), quote))
    note = NoteRecord(note_id=note_id, text=text, primary_diagnosis=disease_id)
    return build_annotated_note(note, spans, criteria)


def synthetic_corpus(
    criteria: CriteriaSet,
    notes_per_disease: int,
    seed: int = 7,
) -> list[AnnotatedNote]:
    rng = random.Random(seed)
    notes = []
    for disease in criteria.diseases:
        for i in range(notes_per_disease):
            notes.append(
                evidence_note(f"{disease.disease_id}-n{i:04d}", criteria,
                              disease.disease_id, rng=rng)
            )
    return notes


def balanced_corpus(
    criteria: CriteriaSet,
    notes_per_disease: int,
    seed: int = 7,
) -> list[CorpusItem]:
    complete = synthetic_corpus(criteria, notes_per_disease, seed=seed)
    items, warnings = build_balanced_corpus(complete, criteria, seed=seed)
    assert not warnings
    return items


def oracle_client(
    corpus: list[CorpusItem],
    criteria: CriteriaSet,
    subtasks: tuple[Subtask, ...] = tuple(Subtask),
    mutate=None,
) -> StaticChatClient:
    """Client that answers every rendered prompt with the ground-truth
    output (optionally transformed by ``mutate(demo, output)``)."""
    templates = load_templates(None)
    answers = {}
    for item in corpus:
        for subtask in subtasks:
            demo = render_demonstration(item, subtask, templates, criteria)
            output = demo.output
            if mutate is not None:
                output = mutate(demo, output)
            answers[build_prompt(demo)] = output
    return StaticChatClient(answers)


class FakeChatServer:
    """Minimal chat-completions endpoint for gateway and CLI tests.

    ``script`` is a callable (path, body_dict, hit_index) -> (status, payload)
    deciding each response; the server records concurrency high-water marks.
    """

    def __init__(self, script):
        self.script = script
        self.hits = 0
        self.max_concurrent = 0
        self._active = 0
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                with outer._lock:
                    outer._active += 1
                    outer.max_concurrent = max(outer.max_concurrent, outer._active)
                    hit = outer.hits
                    outer.hits += 1
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    status, payload = outer.script(self.path, body, hit)
                    encoded = json.dumps(payload).encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(encoded)))
                    self.end_headers()
                    self.wfile.write(encoded)
                finally:
                    with outer._lock:
                        outer._active -= 1

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self) -> "FakeChatServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"


def echo_script(answer_fn):
    """Script answering 200 with ``answer_fn(prompt_text)`` as the content."""

    def script(path, body, hit):
        prompt = body.get("messages", [{}])[-1].get("content", "")
        return 200, {
            "choices": [{"message": {"role": "assistant", "content": answer_fn(prompt)}}],
            "usage": {"total_tokens": len(prompt.split())},
        }

    return script
