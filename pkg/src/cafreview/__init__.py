"""Conflict-aware meta-review generation, evaluation and bias analysis."""

from .domain import (
    ASPECTS,
    Aspect,
    AspectJudgment,
    AspectSentimentVector,
    Convincingness,
    Decision,
    MetaReviewOutput,
    Review,
    SentimentVocabulary,
    Submission,
)
from .pipeline import Method, PipelineConfig, RunTrace, run, run_caf, run_increm, run_naive, run_scf, run_selfcot

__version__ = "0.1.0"

__all__ = [
    "ASPECTS",
    "Aspect",
    "AspectJudgment",
    "AspectSentimentVector",
    "Convincingness",
    "Decision",
    "MetaReviewOutput",
    "Method",
    "PipelineConfig",
    "Review",
    "RunTrace",
    "SentimentVocabulary",
    "Submission",
    "run",
    "run_caf",
    "run_increm",
    "run_naive",
    "run_scf",
    "run_selfcot",
]
