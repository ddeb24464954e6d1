"""Exception hierarchy for the whole package.

Every error raised on purpose derives from :class:`CafError`, so callers (and
the CLI) can separate "bad input / bad model output" from programming bugs.
"""

from __future__ import annotations


class CafError(Exception):
    """Base class for all package errors."""


# -- domain validation -------------------------------------------------------


class ValidationError(CafError):
    pass


class EmptyReviews(ValidationError):
    def __init__(self) -> None:
        super().__init__("submission has no reviews")


class EmptyReviewText(ValidationError):
    def __init__(self, index: int) -> None:
        self.index = index
        super().__init__(f"review {index} has empty text")


class ScoreOutOfRange(ValidationError):
    def __init__(self, index: int, score: object = None) -> None:
        self.index = index
        self.score = score
        super().__init__(f"review {index}: score {score!r} outside [1, 10]")


class ConfidenceOutOfRange(ValidationError):
    def __init__(self, index: int, confidence: object = None) -> None:
        self.index = index
        self.confidence = confidence
        super().__init__(f"review {index}: confidence {confidence!r} outside [1, 5]")


# -- llm gateway ---------------------------------------------------------------


class GatewayError(CafError):
    pass


class NetworkError(GatewayError):
    """Transport failure that survived every retry."""


class HttpError(GatewayError):
    def __init__(self, status: int, body: str = "") -> None:
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:200]}")


class ReplayMiss(GatewayError):
    def __init__(self, digest: str) -> None:
        self.digest = digest
        super().__init__(f"no recorded response for request {digest}")


class AuthMissing(GatewayError):
    def __init__(self, message: str = "AuthMissing: CAF_API_KEY is not set") -> None:
        super().__init__(message)


# -- prompts and parsing -------------------------------------------------------


class PromptError(CafError):
    pass


class MissingBinding(PromptError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"no binding for placeholder {{{name}}}")


class UnknownPlaceholder(PromptError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"unknown placeholder {{{name}}}")


class UnparseableResponse(PromptError):
    def __init__(self, raw: str) -> None:
        self.excerpt = raw[:200]
        super().__init__(f"could not parse model output: {self.excerpt!r}")


class SchemaViolation(PromptError):
    def __init__(self, field: str, detail: str = "") -> None:
        self.field = field
        msg = f"schema violation at {field!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


# -- pipeline ------------------------------------------------------------------


class PipelineError(CafError):
    """Wraps a gateway/parse failure with where in the run it happened."""

    def __init__(self, phase: str, review_index: int | None, cause: Exception) -> None:
        self.phase = phase
        self.review_index = review_index
        self.cause = cause
        where = phase if review_index is None else f"{phase} (review {review_index})"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")


# -- evaluation ----------------------------------------------------------------


class EvaluationError(CafError):
    pass


class VocabularyMismatch(EvaluationError):
    pass


class IncompleteAspects(EvaluationError):
    pass


class MissingGroundTruth(EvaluationError):
    def __init__(self, field: str) -> None:
        self.field = field
        super().__init__(f"missing ground truth: {field}")


# -- bias analysis -------------------------------------------------------------


class BiasError(CafError):
    pass


class InsufficientData(BiasError):
    pass


class NonFinite(BiasError):
    pass


class EmptyScores(BiasError):
    def __init__(self) -> None:
        super().__init__("majority vote over an empty score list")


class EmptyPsi(BiasError):
    def __init__(self) -> None:
        super().__init__("EmptyPsi: no prediction agrees with the majority vote; kappa undefined")


# -- corpus --------------------------------------------------------------------


class CorpusError(CafError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, line: int, reason: str) -> None:
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NTooLarge(CorpusError):
    def __init__(self, n: int, size: int) -> None:
        super().__init__(f"cannot sample {n} items from a corpus of {size}")
