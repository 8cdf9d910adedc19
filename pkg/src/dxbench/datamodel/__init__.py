"""Diagnostic criteria, note records, dataset splits, and their file formats."""

from .types import (
    CATEGORIES,
    COMPLETENESS_VALUES,
    SOURCES,
    SPECIALTIES,
    CriteriaSet,
    Criterion,
    DatasetSplit,
    Disease,
    NoteRecord,
    SplitItem,
    ValidationIssue,
    ValidationReport,
)
from .io import (
    load_criteria,
    load_notes,
    load_split,
    save_criteria,
    save_notes,
    save_split,
)
from .split import apportion, split_dataset
from .validate import validate_corpus

__all__ = [
    "CATEGORIES",
    "COMPLETENESS_VALUES",
    "SOURCES",
    "SPECIALTIES",
    "CriteriaSet",
    "Criterion",
    "DatasetSplit",
    "Disease",
    "NoteRecord",
    "SplitItem",
    "ValidationIssue",
    "ValidationReport",
    "apportion",
    "load_criteria",
    "load_notes",
    "load_split",
    "save_criteria",
    "save_notes",
    "save_split",
    "split_dataset",
    "validate_corpus",
]
