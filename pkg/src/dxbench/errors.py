"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: SchemaError -> 1,
TransportError -> 2, PartialResultsError -> 3.
"""

from __future__ import annotations


class DxBenchError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(DxBenchError):
    """A file, record, or argument violates its documented schema."""


class TransportError(DxBenchError):
    """A network endpoint failed (after retries, or non-retryably)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class PartialResultsError(DxBenchError):
    """An evaluation run aborted after too many transport failures.

    A partial-results manifest has been written to the run directory.
    """

    def __init__(self, message: str, manifest_path: str | None = None):
        super().__init__(message)
        self.manifest_path = manifest_path


class AnnotationProtocolError(DxBenchError):
    """An annotation agent returned output that could not be parsed."""


class InfeasibleMaskError(DxBenchError):
    """No valid evidence-span selection exists for the requested mask."""


class MetricUndefinedError(DxBenchError):
    """A metric is undefined on the given sample (e.g. empty denominator)."""


class ConflictError(DxBenchError):
    """A review-store write conflicts with existing state (HTTP 409)."""


class NotFoundError(DxBenchError):
    """A review item does not exist (HTTP 404)."""
