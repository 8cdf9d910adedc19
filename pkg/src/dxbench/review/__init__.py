"""Expert review workflows: masked-note verification and 5-point grading
of explanations with third-reviewer adjudication."""

from .store import (
    GradeEvent,
    ReviewItem,
    ReviewStore,
    VerificationEvent,
    score_band,
)
from .service import create_app

__all__ = [
    "GradeEvent",
    "ReviewItem",
    "ReviewStore",
    "VerificationEvent",
    "create_app",
    "score_band",
]
