"""Diagnosis accuracy and uncertainty-recognition scores.

The positive class throughout is the evidence-uncertainty case
(ground-truth label ``insufficient_evidence``): TP counts uncertainty
cases predicted uncertain, FP confident cases predicted uncertain, FN
missed uncertainty cases. Unparseable predictions always score as wrong;
dropping them would inflate every metric.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from ..errors import MetricUndefinedError, SchemaError

INSUFFICIENT = "insufficient_evidence"
SUFFICIENT = "sufficient_evidence"

_WHITESPACE = re.compile(r"\s+")
_TERMINAL_PUNCTUATION = ".,;:!?"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise SchemaError("confusion counts must be non-negative")

    @property
    def positives(self) -> int:
        """Ground-truth uncertainty cases."""
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        """Ground-truth confident cases."""
        return self.fp + self.tn


@dataclass(frozen=True)
class F1Scores:
    precision: float
    recall: float
    f1: float


def _check_alignment(preds: Mapping[str, object], refs: Mapping[str, object]) -> None:
    if set(preds) != set(refs):
        missing = sorted(set(refs) - set(preds))[:3]
        extra = sorted(set(preds) - set(refs))[:3]
        raise SchemaError(
            f"predictions and references are not aligned by note_id "
            f"(missing={missing}, extra={extra})"
        )
    if not refs:
        raise SchemaError("cannot score an empty prediction set")


def normalize_diagnosis(text: str) -> str:
    """Lowercase, trim, collapse whitespace, strip terminal punctuation."""
    collapsed = _WHITESPACE.sub(" ", text.strip().lower())
    return collapsed.rstrip(_TERMINAL_PUNCTUATION).rstrip()


def diagnostic_accuracy(
    preds: Mapping[str, str | None],
    refs: Mapping[str, str],
) -> float:
    """Fraction of notes whose normalized predicted diagnosis equals the
    normalized reference; None (unparseable) counts as incorrect."""
    _check_alignment(preds, refs)
    correct = sum(
        1
        for note_id, reference in refs.items()
        if preds[note_id] is not None
        and normalize_diagnosis(preds[note_id]) == normalize_diagnosis(reference)  # type: ignore[arg-type]
    )
    return correct / len(refs)


def confusion_counts(
    preds: Mapping[str, str | None],
    refs: Mapping[str, str],
) -> ConfusionCounts:
    _check_alignment(preds, refs)
    tp = fp = fn = tn = 0
    for note_id, reference in refs.items():
        if reference not in (INSUFFICIENT, SUFFICIENT):
            raise SchemaError(f"reference label {reference!r} for note {note_id!r}")
        predicted_uncertain = preds[note_id] == INSUFFICIENT
        if reference == INSUFFICIENT:
            if predicted_uncertain:
                tp += 1
            else:
                fn += 1
        else:
            if predicted_uncertain:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def accuracy_eu(
    preds: Mapping[str, str | None],
    refs: Mapping[str, str],
) -> float:
    """Correctly recognized evidence-uncertainty cases over all
    evidence-uncertainty cases."""
    counts = confusion_counts(preds, refs)
    if counts.positives == 0:
        raise MetricUndefinedError("accuracy_eu undefined: no uncertainty cases in references")
    return counts.tp / counts.positives


def f1_from_counts(counts: ConfusionCounts) -> F1Scores:
    """Precision, recall and F1 over the uncertainty class; components with
    a zero denominator score 0 so batch runs stay total."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return F1Scores(precision=precision, recall=recall, f1=f1)


def f1_eu(
    preds: Mapping[str, str | None],
    refs: Mapping[str, str],
) -> F1Scores:
    return f1_from_counts(confusion_counts(preds, refs))
