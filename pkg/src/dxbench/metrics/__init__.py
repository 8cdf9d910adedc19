"""Evaluation metrics: classification scores over evidence-uncertainty
cases, explanation matching, text-similarity scores, and bootstrap CIs."""

from .classification import (
    ConfusionCounts,
    F1Scores,
    accuracy_eu,
    confusion_counts,
    diagnostic_accuracy,
    f1_eu,
    f1_from_counts,
    normalize_diagnosis,
)
from .explanations import (
    ExplanationMatch,
    ExplanationMatcher,
    greedy_matches,
    interpret_accuracy,
    interpret_accuracy_eu,
    soft_f1_explanations,
    token_overlap_f1,
)
from .text import meteor, porter_stem
from .embedding import bertscore_greedy, sentence_similarity
from .bootstrap import MetricValue, bootstrap_ci

__all__ = [
    "ConfusionCounts",
    "ExplanationMatch",
    "ExplanationMatcher",
    "F1Scores",
    "MetricValue",
    "accuracy_eu",
    "bertscore_greedy",
    "bootstrap_ci",
    "confusion_counts",
    "diagnostic_accuracy",
    "f1_eu",
    "f1_from_counts",
    "greedy_matches",
    "interpret_accuracy",
    "interpret_accuracy_eu",
    "meteor",
    "normalize_diagnosis",
    "porter_stem",
    "sentence_similarity",
    "soft_f1_explanations",
    "token_overlap_f1",
]
