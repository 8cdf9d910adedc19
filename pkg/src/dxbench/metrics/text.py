"""Surface-similarity scoring of generated text against a reference.

Unigram alignment runs in two stages, exact match then stem match, using
the classic suffix-stripping stemmer (Porter, so the whole pipeline stays
offline and deterministic; a synonym lexicon can be supplied optionally as
a third stage). Score = Fmean * (1 - penalty) with Fmean = 10PR/(R+9P) and
penalty = 0.5 * (chunks/matches)^3.
"""

from __future__ import annotations

from typing import Mapping

from ..gateway import tokenize

_VOWELS = "aeiou"


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel->consonant transitions: [C](VC)^m[V]."""
    m = 0
    i = 0
    n = len(stem)
    while i < n and _is_consonant(stem, i):
        i += 1
    while i < n:
        while i < n and not _is_consonant(stem, i):
            i += 1
        if i >= n:
            break
        m += 1
        while i < n and _is_consonant(stem, i):
            i += 1
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
    ):
        return False
    return word[-1] not in "wxy"


def _replace_suffix(word: str, rules: list[tuple[str, str]], min_measure: int) -> str:
    for suffix, replacement in rules:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if _measure(stem) > min_measure:
                return stem + replacement
            return word
    return word


_STEP2_RULES = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]

_STEP3_RULES = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]

_STEP4_SUFFIXES = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word: str) -> str:
    """Classic suffix-stripping stemmer; input is assumed lowercase."""
    if len(word) <= 2:
        return word

    # Step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif word.endswith("ss"):
        pass
    elif word.endswith("s"):
        word = word[:-1]

    # Step 1b
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        stripped = None
        if word.endswith("ed") and _contains_vowel(word[:-2]):
            stripped = word[:-2]
        elif word.endswith("ing") and _contains_vowel(word[:-3]):
            stripped = word[:-3]
        if stripped is not None:
            word = stripped
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_consonant(word) and not word.endswith(("l", "s", "z")):
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # Step 1c
    if word.endswith("y") and _contains_vowel(word[:-1]):
        word = word[:-1] + "i"

    # Steps 2 and 3 rewrite suffixes when the remaining stem has m > 0.
    word = _replace_suffix(word, _STEP2_RULES, 0)
    word = _replace_suffix(word, _STEP3_RULES, 0)

    # Step 4: drop the suffix when the remaining stem has m > 1.
    for suffix in _STEP4_SUFFIXES:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if _measure(stem) > 1:
                word = stem
            break
    else:
        if word.endswith("ion"):
            stem = word[:-3]
            if stem.endswith(("s", "t")) and _measure(stem) > 1:
                word = stem

    # Step 5a
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem

    # Step 5b
    if _measure(word) > 1 and _ends_double_consonant(word) and word.endswith("l"):
        word = word[:-1]

    return word


def meteor(
    candidate: str,
    reference: str,
    synonyms: Mapping[str, frozenset[str]] | None = None,
) -> float:
    """Alignment-based score in [0, 1]; not symmetric (precision is
    computed over the candidate, recall over the reference)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0

    matched_cand = [False] * len(cand)
    matched_ref = [False] * len(ref)
    matches: list[tuple[int, int]] = []

    def run_stage(key) -> None:
        cand_keys = [key(t) for t in cand]
        ref_keys = [key(t) for t in ref]
        for ci in range(len(cand)):
            if matched_cand[ci]:
                continue
            for ri in range(len(ref)):
                if not matched_ref[ri] and ref_keys[ri] == cand_keys[ci]:
                    matched_cand[ci] = True
                    matched_ref[ri] = True
                    matches.append((ci, ri))
                    break

    run_stage(lambda t: t)
    run_stage(porter_stem)
    if synonyms is not None:
        for ci in range(len(cand)):
            if matched_cand[ci]:
                continue
            groups = synonyms.get(cand[ci], frozenset()) | {cand[ci]}
            for ri in range(len(ref)):
                if matched_ref[ri]:
                    continue
                if ref[ri] in groups or cand[ci] in synonyms.get(ref[ri], frozenset()):
                    matched_cand[ci] = True
                    matched_ref[ri] = True
                    matches.append((ci, ri))
                    break

    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    matches.sort()
    chunks = 1
    for (c1, r1), (c2, r2) in zip(matches, matches[1:]):
        if not (c2 == c1 + 1 and r2 == r1 + 1):
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1 - penalty)
