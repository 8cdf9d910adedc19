"""Explanation-list scoring: greedy matching, soft F1, and the two
interpretation-accuracy ratios.

What counts as a "correct" explanation is delegated to a configurable
matcher. The default scores a pair by max(token-overlap F1, clamped
sentence cosine when an embedder is available) against a 0.7 threshold;
the configuration is recorded in run metadata because it is the single
biggest free variable in explanation scoring.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from ..errors import MetricUndefinedError, SchemaError
from ..gateway import Embedder, tokenize
from .embedding import sentence_similarity

PairScorer = Callable[[str, str], float]


def token_overlap_f1(a: str, b: str) -> float:
    """Multiset F1 over normalized tokens; two empty texts score 1."""
    counts_a = Counter(tokenize(a))
    counts_b = Counter(tokenize(b))
    total = sum(counts_a.values()) + sum(counts_b.values())
    if total == 0:
        return 1.0
    common = sum((counts_a & counts_b).values())
    return 2 * common / total


@dataclass(frozen=True)
class ExplanationMatch:
    pred_index: int
    ref_index: int
    similarity: float


@dataclass
class ExplanationMatcher:
    """Pair scorer + threshold deciding explanation correctness."""

    threshold: float = 0.7
    embedder: Embedder | None = None

    def __post_init__(self) -> None:
        if not (0 < self.threshold <= 1):
            raise SchemaError(f"matcher threshold must be in (0, 1], got {self.threshold}")

    def similarity(self, a: str, b: str) -> float:
        score = token_overlap_f1(a, b)
        if self.embedder is not None and (tokenize(a) or tokenize(b)):
            score = max(score, max(0.0, sentence_similarity(a, b, self.embedder)))
        return score

    def config(self) -> dict:
        return {
            "scorer": (
                "max(token_overlap_f1, sentence_similarity)"
                if self.embedder is not None
                else "token_overlap_f1"
            ),
            "threshold": self.threshold,
        }


def greedy_matches(
    pred: Sequence[str],
    ref: Sequence[str],
    sim: PairScorer,
    threshold: float,
) -> list[ExplanationMatch]:
    """Best-first one-to-one assignment; a pair matches iff its similarity
    is at or above the threshold."""
    scored = []
    for i, p in enumerate(pred):
        for j, r in enumerate(ref):
            similarity = sim(p, r)
            if similarity >= threshold:
                scored.append((-similarity, i, j, similarity))
    scored.sort(key=lambda t: (t[0], t[1], t[2]))
    used_pred: set[int] = set()
    used_ref: set[int] = set()
    matches = []
    for _, i, j, similarity in scored:
        if i in used_pred or j in used_ref:
            continue
        used_pred.add(i)
        used_ref.add(j)
        matches.append(ExplanationMatch(pred_index=i, ref_index=j, similarity=similarity))
    return matches


@dataclass(frozen=True)
class SoftF1Result:
    precision: float
    recall: float
    f1: float
    matches: tuple[ExplanationMatch, ...]


def soft_f1_explanations(
    pred: Sequence[str],
    ref: Sequence[str],
    sim: PairScorer,
    threshold: float = 0.7,
) -> SoftF1Result:
    """Set-to-set F1 via thresholded pairwise similarity, tolerant of the
    two lists having different lengths. Both lists empty is vacuously
    perfect; exactly one empty scores 0."""
    if not (0 < threshold <= 1):
        raise SchemaError(f"threshold must be in (0, 1], got {threshold}")
    if not pred and not ref:
        return SoftF1Result(1.0, 1.0, 1.0, ())
    if not pred or not ref:
        return SoftF1Result(0.0, 0.0, 0.0, ())
    matches = greedy_matches(pred, ref, sim, threshold)
    m = len(matches)
    precision = m / len(pred)
    recall = m / len(ref)
    # 2PR/(P+R) simplifies to 2m/(|pred|+|ref|), which is float-exact.
    f1 = 2 * m / (len(pred) + len(ref)) if m else 0.0
    return SoftF1Result(precision, recall, f1, tuple(matches))


def _check_alignment(preds: Mapping[str, object], refs: Mapping[str, object]) -> None:
    if set(preds) != set(refs):
        raise SchemaError("explanation predictions and references are not aligned by note_id")


def interpret_accuracy(
    preds: Mapping[str, Sequence[str] | None],
    refs: Mapping[str, Sequence[str]],
    matcher: ExplanationMatcher,
) -> float:
    """Matched references over all references, summed across notes. Each
    reference is consumed at most once, so the ratio never exceeds 1; an
    unparseable prediction (None) contributes zero matches."""
    _check_alignment(preds, refs)
    matched = 0
    total = 0
    for note_id, ref_list in refs.items():
        total += len(ref_list)
        pred_list = preds[note_id] or ()
        matched += len(greedy_matches(pred_list, ref_list, matcher.similarity,
                                      matcher.threshold))
    if total == 0:
        raise MetricUndefinedError("interpret_accuracy undefined: no reference explanations")
    return matched / total


def interpret_accuracy_eu(
    preds: Mapping[str, Sequence[str] | None],
    refs: Mapping[str, Sequence[str]],
    matcher: ExplanationMatcher,
) -> float:
    """Same ratio restricted to evidence-uncertainty cases: ``refs`` must
    hold the uncertainty-explanation lists of ground-truth uncertainty
    cases only."""
    if not refs:
        raise MetricUndefinedError(
            "interpret_accuracy_eu undefined: no uncertainty cases in references"
        )
    return interpret_accuracy(preds, refs, matcher)
