"""Embedding-based similarity scores.

Token-level greedy matching needs an embedder with ``capability ==
"token"``; a sentence-only embedder is refused (silent degradation would
change what the score means). Sentence similarity works with either.
"""

from __future__ import annotations

import numpy as np

from ..errors import MetricUndefinedError, SchemaError
from ..gateway import Embedder, embed_tokens, tokenize
from .classification import F1Scores


def _require_token_capability(embedder: Embedder) -> None:
    capability = getattr(embedder, "capability", "token")
    if capability != "token":
        raise SchemaError(
            "embedder provides sentence-level vectors only; token-level greedy "
            "matching is undefined -- use sentence_similarity instead"
        )


def bertscore_greedy(candidate: str, reference: str, embedder: Embedder) -> F1Scores:
    """Greedy token matching on cosine similarity: recall is the mean over
    reference tokens of the best cosine against any candidate token,
    precision the symmetric quantity. An empty side scores 0."""
    _require_token_capability(embedder)
    cand = embed_tokens(candidate, embedder)
    ref = embed_tokens(reference, embedder)
    if len(cand.tokens) == 0 or len(ref.tokens) == 0:
        return F1Scores(0.0, 0.0, 0.0)
    sims = ref.vectors @ cand.vectors.T
    recall = float(np.mean(np.max(sims, axis=1)))
    precision = float(np.mean(np.max(sims, axis=0)))
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Scores(precision=precision, recall=recall, f1=f1)


def sentence_similarity(a: str, b: str, embedder: Embedder) -> float:
    """Cosine of the two sentence vectors: native ones when the embedder
    is sentence-capable, else mean-pooled unit token vectors."""
    if getattr(embedder, "capability", "token") == "sentence":
        tokens_a: list[str] = [a] if a.strip() else []
        tokens_b: list[str] = [b] if b.strip() else []
    else:
        tokens_a = tokenize(a)
        tokens_b = tokenize(b)
    if not tokens_a and not tokens_b:
        raise MetricUndefinedError("sentence similarity of two empty texts is undefined")
    if not tokens_a or not tokens_b:
        return 0.0
    vec_a = np.mean(embedder.vectors_for(tokens_a), axis=0)
    vec_b = np.mean(embedder.vectors_for(tokens_b), axis=0)
    norm = float(np.linalg.norm(vec_a) * np.linalg.norm(vec_b))
    if norm == 0:
        return 0.0
    return float(np.dot(vec_a, vec_b) / norm)
