"""Core domain types for criteria registries, notes, and splits.

All types are immutable after construction; invariants are enforced in
``__post_init__`` so an instance that exists is a valid one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import SchemaError

CATEGORIES = ("symptom", "laboratory", "history", "imaging", "temporal")
SPECIALTIES = ("endocrinology", "cardiology", "hepatology", "other")
SOURCES = ("synthetic", "user_corpus")
COMPLETENESS_VALUES = ("evidence_complete", "evidence_incomplete")

REQUIRED = "required"
ANY_OF = "any_of"


@dataclass(frozen=True)
class Criterion:
    """One diagnostic rule for a disease.

    ``requirement`` is either ``"required"`` (the rule must be evidenced for
    a confident diagnosis) or ``"any_of"``, in which case ``group_id`` names
    the alternative group and at least one group member must be evidenced.
    """

    criterion_id: str
    disease_id: str
    text: str
    category: str
    requirement: str = REQUIRED
    group_id: str | None = None

    def __post_init__(self) -> None:
        if not self.criterion_id:
            raise SchemaError("criterion_id must be non-empty")
        if not self.disease_id:
            raise SchemaError(f"criterion {self.criterion_id!r}: disease_id must be non-empty")
        if not self.text or not self.text.strip():
            raise SchemaError(f"criterion {self.criterion_id!r}: text must be non-empty")
        if self.category not in CATEGORIES:
            raise SchemaError(
                f"criterion {self.criterion_id!r}: category {self.category!r} "
                f"not one of {CATEGORIES}"
            )
        if self.requirement not in (REQUIRED, ANY_OF):
            raise SchemaError(
                f"criterion {self.criterion_id!r}: requirement {self.requirement!r} "
                f"must be 'required' or 'any_of'"
            )
        if self.requirement == ANY_OF and not self.group_id:
            raise SchemaError(f"criterion {self.criterion_id!r}: any_of requires a group_id")
        if self.requirement == REQUIRED and self.group_id is not None:
            raise SchemaError(f"criterion {self.criterion_id!r}: group_id only valid with any_of")


@dataclass(frozen=True)
class Disease:
    disease_id: str
    display_name: str
    specialty: str = "other"

    def __post_init__(self) -> None:
        if not self.disease_id:
            raise SchemaError("disease_id must be non-empty")
        if not self.display_name:
            raise SchemaError(f"disease {self.disease_id!r}: display_name must be non-empty")
        if self.specialty not in SPECIALTIES:
            raise SchemaError(
                f"disease {self.disease_id!r}: specialty {self.specialty!r} "
                f"not one of {SPECIALTIES}"
            )


@dataclass(frozen=True)
class CriteriaSet:
    """Registry of diseases and the diagnostic rules all labels derive from."""

    version: str
    diseases: tuple[Disease, ...]
    criteria: tuple[Criterion, ...]

    def __post_init__(self) -> None:
        disease_ids = [d.disease_id for d in self.diseases]
        if len(set(disease_ids)) != len(disease_ids):
            dupes = sorted({d for d in disease_ids if disease_ids.count(d) > 1})
            raise SchemaError(f"duplicate disease ids: {dupes}")
        criterion_ids = [c.criterion_id for c in self.criteria]
        if len(set(criterion_ids)) != len(criterion_ids):
            dupes = sorted({c for c in criterion_ids if criterion_ids.count(c) > 1})
            raise SchemaError(f"duplicate criterion ids: {dupes}")
        known = set(disease_ids)
        for criterion in self.criteria:
            if criterion.disease_id not in known:
                raise SchemaError(
                    f"criterion {criterion.criterion_id!r} references unknown disease "
                    f"{criterion.disease_id!r}"
                )
        per_disease: dict[str, list[Criterion]] = {d: [] for d in known}
        for criterion in self.criteria:
            per_disease[criterion.disease_id].append(criterion)
        for disease_id in sorted(known):
            rules = per_disease[disease_id]
            if len(rules) < 2:
                raise SchemaError(
                    f"disease {disease_id!r} has fewer than two rules "
                    f"({len(rules)}); diseases with fewer than two rules are removed"
                )
            groups: dict[str, int] = {}
            for criterion in rules:
                if criterion.requirement == ANY_OF:
                    assert criterion.group_id is not None
                    groups[criterion.group_id] = groups.get(criterion.group_id, 0) + 1
            for group_id, size in sorted(groups.items()):
                if size < 2:
                    raise SchemaError(
                        f"disease {disease_id!r}: any_of group {group_id!r} has {size} "
                        f"member; every any_of group needs at least 2"
                    )

    def disease(self, disease_id: str) -> Disease:
        for d in self.diseases:
            if d.disease_id == disease_id:
                return d
        raise SchemaError(f"unknown disease {disease_id!r}")

    def has_disease(self, disease_id: str) -> bool:
        return any(d.disease_id == disease_id for d in self.diseases)

    def display_name(self, disease_id: str) -> str:
        return self.disease(disease_id).display_name

    def criteria_for(self, disease_id: str) -> tuple[Criterion, ...]:
        if not self.has_disease(disease_id):
            raise SchemaError(f"unknown disease {disease_id!r}")
        return tuple(c for c in self.criteria if c.disease_id == disease_id)

    def criterion(self, criterion_id: str) -> Criterion:
        for c in self.criteria:
            if c.criterion_id == criterion_id:
                return c
        raise SchemaError(f"unknown criterion {criterion_id!r}")

    def is_satisfied(self, disease_id: str, satisfied_criteria: frozenset[str] | set[str]) -> bool:
        """True when every required rule and at least one member of every
        any_of group is in ``satisfied_criteria``."""
        rules = self.criteria_for(disease_id)
        groups: dict[str, bool] = {}
        for rule in rules:
            if rule.requirement == REQUIRED:
                if rule.criterion_id not in satisfied_criteria:
                    return False
            else:
                assert rule.group_id is not None
                groups.setdefault(rule.group_id, False)
                if rule.criterion_id in satisfied_criteria:
                    groups[rule.group_id] = True
        return all(groups.values())


@dataclass(frozen=True)
class NoteRecord:
    """A clinical note with a single primary diagnosis.

    ``word_count`` is derived (whitespace-token count of ``text``); callers
    never supply it.
    """

    note_id: str
    text: str
    primary_diagnosis: str
    source: str = "synthetic"
    word_count: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.note_id:
            raise SchemaError("note_id must be non-empty")
        if not self.primary_diagnosis:
            raise SchemaError(f"note {self.note_id!r}: primary_diagnosis must be non-empty")
        if self.source not in SOURCES:
            raise SchemaError(
                f"note {self.note_id!r}: source {self.source!r} not one of {SOURCES}"
            )
        object.__setattr__(self, "word_count", len(self.text.split()))


@dataclass(frozen=True)
class SplitItem:
    """The (id, disease, completeness) triple the splitter stratifies on."""

    note_id: str
    disease_id: str
    complete: bool


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    ratios: tuple[Fraction, Fraction, Fraction]
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        lists = (set(self.train), set(self.validation), set(self.test))
        if (lists[0] & lists[1]) or (lists[0] & lists[2]) or (lists[1] & lists[2]):
            raise SchemaError("split lists must be pairwise disjoint")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.validation), len(self.test))

    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.validation) | set(self.test)


@dataclass(frozen=True)
class ValidationIssue:
    note_id: str
    problem: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues
