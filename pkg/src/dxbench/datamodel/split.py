"""Deterministic stratified train/validation/test splitting.

Notes are stratified by (disease, completeness). Within each stratum the
ids are sorted, shuffled by a stratum-local RNG derived from the seed, and
apportioned by largest remainder, so the split is a pure function of the
note *set* and the seed: permuting the input never changes the output.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import floor
from typing import Iterable, Sequence

from ..errors import SchemaError
from .types import DatasetSplit, SplitItem

MIN_STRATUM_SIZE = 10


def _as_fractions(ratios: Sequence[Fraction | float | str]) -> tuple[Fraction, Fraction, Fraction]:
    if len(ratios) != 3:
        raise SchemaError(f"ratios must have exactly three entries, got {len(ratios)}")
    converted = []
    for r in ratios:
        # Floats go through str() so 0.7 means 7/10, not its binary approximation.
        converted.append(r if isinstance(r, Fraction) else Fraction(str(r)))
    if any(r < 0 for r in converted):
        raise SchemaError(f"ratios must be non-negative, got {ratios}")
    if sum(converted) != 1:
        raise SchemaError(f"ratios must sum to 1, got {ratios}")
    return converted[0], converted[1], converted[2]


def apportion(n: int, ratios: Sequence[Fraction | float | str]) -> tuple[int, int, int]:
    """Split ``n`` seats over three buckets by largest remainder.

    Exact rational arithmetic; remainder ties go to the earlier bucket
    (train before validation before test).
    """
    fractions = _as_fractions(ratios)
    quotas = [n * r for r in fractions]
    counts = [floor(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts[0], counts[1], counts[2]


def _stratum_rng(seed: int, disease_id: str, complete: bool) -> random.Random:
    return random.Random(f"{seed}|{disease_id}|{int(complete)}")


def split_dataset(
    items: Iterable[SplitItem],
    ratios: Sequence[Fraction | float | str],
    seed: int,
) -> DatasetSplit:
    fractions = _as_fractions(ratios)
    strata: dict[tuple[str, bool], list[str]] = {}
    seen: set[str] = set()
    for item in items:
        if item.note_id in seen:
            raise SchemaError(f"duplicate note_id {item.note_id!r} in split input")
        seen.add(item.note_id)
        strata.setdefault((item.disease_id, item.complete), []).append(item.note_id)

    warnings = []
    train: list[str] = []
    validation: list[str] = []
    test: list[str] = []
    for (disease_id, complete), ids in sorted(strata.items()):
        if len(ids) < MIN_STRATUM_SIZE:
            label = "complete" if complete else "incomplete"
            warnings.append(
                f"stratum ({disease_id}, {label}) has only {len(ids)} notes "
                f"(fewer than {MIN_STRATUM_SIZE})"
            )
        ordered = sorted(ids)
        _stratum_rng(seed, disease_id, complete).shuffle(ordered)
        n_train, n_val, _ = apportion(len(ordered), fractions)
        train.extend(ordered[:n_train])
        validation.extend(ordered[n_train : n_train + n_val])
        test.extend(ordered[n_train + n_val :])

    return DatasetSplit(
        train=tuple(sorted(train)),
        validation=tuple(sorted(validation)),
        test=tuple(sorted(test)),
        seed=seed,
        ratios=fractions,
        warnings=tuple(warnings),
    )
