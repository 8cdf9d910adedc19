"""Criteria/notes schema validation, file round trips, and the splitter."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dxbench.datamodel import (
    CriteriaSet,
    Criterion,
    Disease,
    NoteRecord,
    SplitItem,
    apportion,
    load_criteria,
    load_notes,
    save_criteria,
    save_notes,
    load_split,
    save_split,
    split_dataset,
    validate_corpus,
)
from dxbench.errors import SchemaError

from helpers import toy_criteria


def test_criteria_set_accepts_valid_registry():
    criteria = toy_criteria(n_diseases=1, n_criteria=3)
    assert len(criteria.diseases) == 1
    assert len(criteria.criteria_for("disease_00")) == 3


def test_disease_with_single_rule_rejected():
    disease = Disease("d1", "Disease One", "other")
    rule = Criterion("c1", "d1", "only rule", "symptom")
    with pytest.raises(SchemaError, match="fewer than two rules"):
        CriteriaSet("1", (disease,), (rule,))


def test_any_of_group_of_one_rejected():
    disease = Disease("d1", "Disease One", "other")
    rules = (
        Criterion("c1", "d1", "rule required", "symptom"),
        Criterion("c2", "d1", "lonely alternative", "laboratory",
                  requirement="any_of", group_id="g1"),
    )
    with pytest.raises(SchemaError, match="any_of group"):
        CriteriaSet("1", (disease,), rules)


def test_duplicate_criterion_ids_rejected():
    disease = Disease("d1", "Disease One", "other")
    rules = (
        Criterion("c1", "d1", "rule a", "symptom"),
        Criterion("c1", "d1", "rule b", "symptom"),
    )
    with pytest.raises(SchemaError, match="duplicate criterion ids"):
        CriteriaSet("1", (disease,), rules)


def test_unknown_disease_reference_rejected():
    disease = Disease("d1", "Disease One", "other")
    rules = (
        Criterion("c1", "d1", "rule a", "symptom"),
        Criterion("c2", "ghost", "rule b", "symptom"),
    )
    with pytest.raises(SchemaError, match="unknown disease"):
        CriteriaSet("1", (disease,), rules)


def test_is_satisfied_requires_all_required_and_one_per_group():
    criteria = toy_criteria(n_diseases=1, n_criteria=2, with_any_of=True)
    required = {"disease_00_c0", "disease_00_c1"}
    assert not criteria.is_satisfied("disease_00", required)
    assert criteria.is_satisfied("disease_00", required | {"disease_00_g0"})
    assert criteria.is_satisfied("disease_00", required | {"disease_00_g1"})
    assert not criteria.is_satisfied("disease_00", {"disease_00_c0", "disease_00_g0"})


def test_criteria_file_round_trip(tmp_path):
    criteria = toy_criteria(n_diseases=2, n_criteria=3, with_any_of=True)
    path = tmp_path / "criteria.ndjson"
    save_criteria(criteria, path)
    assert load_criteria(path) == criteria
    # round trip is byte-stable too
    second = tmp_path / "criteria2.ndjson"
    save_criteria(load_criteria(path), second)
    assert path.read_bytes() == second.read_bytes()


def test_load_criteria_names_offending_field(tmp_path):
    path = tmp_path / "broken.ndjson"
    path.write_text('{"version": "1", "diseases": [{"disease_id": "d1"}]}\n')
    with pytest.raises(SchemaError, match="display_name"):
        load_criteria(path)


def test_note_word_count_is_whitespace_token_count():
    note = NoteRecord("n1", "INR 1.6  after\nadmission", "d1")
    assert note.word_count == 4


def test_notes_file_round_trip(tmp_path):
    notes = [
        NoteRecord("n1", "fever and chills.", "disease_00"),
        NoteRecord("n2", "stable overnight.", "disease_01", source="user_corpus"),
    ]
    path = tmp_path / "notes.ndjson"
    save_notes(notes, path)
    assert load_notes(path) == notes


def test_validate_corpus_reports_each_problem():
    criteria = toy_criteria()
    notes = [
        NoteRecord("n1", "fine text", "disease_00"),
        NoteRecord("n2", "   ", "disease_00"),
        NoteRecord("n3", "ok", "not_a_disease"),
        NoteRecord("n1", "duplicate", "disease_01"),
    ]
    report = validate_corpus(notes, criteria)
    problems = {(i.note_id, i.problem) for i in report.issues}
    assert ("n2", "empty text") in problems
    assert ("n3", "unresolved diagnosis") in problems
    assert ("n1", "duplicate id") in problems
    assert not validate_corpus(notes[:1], criteria).issues


# --- apportionment and splitting -------------------------------------------------


def test_apportion_is_exact_for_divisible_sizes():
    assert apportion(1020, ("0.7", "0.1", "0.2")) == (714, 102, 204)
    assert apportion(0, ("0.7", "0.1", "0.2")) == (0, 0, 0)


def test_apportion_largest_remainder():
    # quotas 709.1 / 101.3 / 202.6 -> floors 709/101/202, last seat to test
    assert apportion(1013, ("0.7", "0.1", "0.2")) == (709, 101, 203)
    # quotas 707.7 / 101.1 / 202.2 -> leftover seat to train (largest remainder)
    assert apportion(1011, ("0.7", "0.1", "0.2")) == (708, 101, 202)


def test_ratios_must_sum_to_one():
    with pytest.raises(SchemaError, match="sum to 1"):
        apportion(10, ("0.5", "0.2", "0.2"))


def _hand_split_sizes(n: int) -> tuple[int, int, int]:
    # Independent largest-remainder oracle via Fractions.
    quotas = [Fraction(n) * f for f in (Fraction(7, 10), Fraction(1, 10), Fraction(2, 10))]
    counts = [int(q) for q in quotas]
    rest = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return tuple(counts)


def _items(per_stratum: dict[tuple[str, bool], int]) -> list[SplitItem]:
    items = []
    for (disease, complete), count in per_stratum.items():
        for i in range(count):
            items.append(SplitItem(f"{disease}-{int(complete)}-{i:05d}", disease, complete))
    return items


def test_split_100_notes_matches_hand_enumeration():
    items = _items({("d1", True): 50, ("d1", False): 50})
    result = split_dataset(items, ("0.7", "0.1", "0.2"), seed=1)
    assert result.sizes == (70, 10, 20)
    train_complete = sum(1 for i in result.train if "-1-" in i)
    assert train_complete == 35
    val_complete = sum(1 for i in result.validation if "-1-" in i)
    assert val_complete == 5
    test_complete = sum(1 for i in result.test if "-1-" in i)
    assert test_complete == 10


def test_split_is_permutation_insensitive_and_deterministic():
    items = _items({("d1", True): 23, ("d1", False): 20, ("d2", True): 17})
    shuffled = list(items)
    random.Random(99).shuffle(shuffled)
    a = split_dataset(items, ("0.7", "0.1", "0.2"), seed=42)
    b = split_dataset(shuffled, ("0.7", "0.1", "0.2"), seed=42)
    assert (a.train, a.validation, a.test) == (b.train, b.validation, b.test)
    c = split_dataset(items, ("0.7", "0.1", "0.2"), seed=43)
    assert (a.train, a.validation, a.test) != (c.train, c.validation, c.test)


def test_split_partitions_the_input():
    items = _items({("d1", True): 31, ("d2", False): 12})
    result = split_dataset(items, ("0.7", "0.1", "0.2"), seed=5)
    assert result.all_ids() == {i.note_id for i in items}
    assert not set(result.train) & set(result.validation)
    assert not set(result.train) & set(result.test)
    assert not set(result.validation) & set(result.test)


def test_split_empty_input_is_empty_split():
    result = split_dataset([], ("0.7", "0.1", "0.2"), seed=0)
    assert result.sizes == (0, 0, 0)


def test_split_warns_on_small_strata():
    items = _items({("d1", True): 4})
    result = split_dataset(items, ("0.7", "0.1", "0.2"), seed=0)
    assert result.warnings and "d1" in result.warnings[0]


def test_split_duplicate_ids_rejected():
    items = [SplitItem("same", "d1", True), SplitItem("same", "d1", False)]
    with pytest.raises(SchemaError, match="duplicate note_id"):
        split_dataset(items, ("0.7", "0.1", "0.2"), seed=0)


@settings(max_examples=30, deadline=None)
@given(
    n_complete=st.integers(min_value=10, max_value=300),
    n_incomplete=st.integers(min_value=10, max_value=300),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_split_sizes_within_one_of_quota_per_stratum(n_complete, n_incomplete, seed):
    items = _items({("d1", True): n_complete, ("d1", False): n_incomplete})
    result = split_dataset(items, ("0.7", "0.1", "0.2"), seed=seed)
    for complete, n in ((True, n_complete), (False, n_incomplete)):
        marker = f"-{int(complete)}-"
        sizes = (
            sum(1 for i in result.train if marker in i),
            sum(1 for i in result.validation if marker in i),
            sum(1 for i in result.test if marker in i),
        )
        for size, ratio in zip(sizes, (0.7, 0.1, 0.2)):
            assert abs(size - n * ratio) <= 1


def test_split_manifest_round_trip(tmp_path):
    items = _items({("d1", True): 20, ("d1", False): 20})
    result = split_dataset(items, ("0.7", "0.1", "0.2"), seed=3)
    path = tmp_path / "split.json"
    save_split(result, path)
    loaded = load_split(path)
    assert loaded.train == result.train
    assert loaded.validation == result.validation
    assert loaded.test == result.test
    assert loaded.seed == result.seed
    assert loaded.ratios == result.ratios
