"""Prompt assets, placeholder rendering and structured-output parsing."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from ..domain import Review
from ..errors import MissingBinding, UnknownPlaceholder
from .parsing import (
    Opinion,
    ParsedResponse,
    Reconstruction,
    ResponseKind,
    parse_key_points,
    parse_structured,
)

PLACEHOLDERS = frozenset(
    {
        "review_content",
        "score",
        "confidence",
        "order",
        "input_documents",
        "json_format",
        "generated_steps",
        "meta_review",
    }
)

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

REASK_SUFFIX = "Please output the target JSONL content directly without any additional content."


class TemplateName(str, enum.Enum):
    EXTRACTION = "extraction"
    FIRST_REVIEW = "first_review"
    SUBSEQUENT_REVIEW = "subsequent_review"
    COGNITIVE_RECONSTRUCTION = "cognitive_reconstruction"
    FINAL_RESULT = "final_result"
    NAIVE = "naive"
    INCREM_STEP = "increm_step"
    INCREM_FINAL = "increm_final"
    SELFCOT_STEPS = "selfcot_steps"
    SELFCOT_GENERATE = "selfcot_generate"
    SCF = "scf"
    SENTIMENT_ANNOTATION = "sentiment_annotation"
    # not one of the published prompts; only used when fast_thinking_call is on
    FAST_INTEGRATION = "fast_integration"


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER.findall(self.body)))


def _read_asset(filename: str) -> str:
    text = resources.files(__package__).joinpath("templates", filename).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def load_template(name: TemplateName | str, faithful_typos: bool = False) -> PromptTemplate:
    name = TemplateName(name)
    filename = f"{name.value}.txt"
    if faithful_typos and name is TemplateName.FINAL_RESULT:
        filename = "final_result.faithful.txt"
    template = PromptTemplate(name, _read_asset(filename))
    for ph in template.placeholders:
        if ph not in PLACEHOLDERS:
            raise UnknownPlaceholder(ph)
    return template


@lru_cache(maxsize=None)
def json_format() -> str:
    """The structured-output schema shown to the model as ``{json_format}``."""
    return _read_asset("json_format.txt")


def render(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute every ``{placeholder}`` in one pass.

    Values are inserted verbatim and never re-scanned, so review text that
    happens to contain ``{score}`` stays as written.
    """
    for name in bindings:
        if name not in PLACEHOLDERS:
            raise UnknownPlaceholder(name)
    for name in template.placeholders:
        if name not in bindings:
            raise MissingBinding(name)
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


_ORDINALS = (
    "first second third fourth fifth sixth seventh eighth ninth tenth "
    "eleventh twelfth thirteenth fourteenth fifteenth sixteenth seventeenth "
    "eighteenth nineteenth twentieth"
).split()


def ordinal(i: int) -> str:
    """1 -> "first", 2 -> "second", ...; numeric suffix form past twenty."""
    if 1 <= i <= len(_ORDINALS):
        return _ORDINALS[i - 1]
    suffix = "th" if 10 <= i % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(i % 10, "th")
    return f"{i}{suffix}"


def confidence_text(review: Review) -> str:
    return "N/A" if review.confidence is None else str(review.confidence)


def review_bindings(review: Review, content: str | None = None) -> dict[str, str]:
    return {
        "review_content": review.text if content is None else content,
        "score": str(review.score),
        "confidence": confidence_text(review),
    }


def format_input_documents(reviews: Iterable[Review]) -> str:
    """All reviews in ingestion order, as the single-shot baselines see them."""
    blocks = [
        f"review{i}:{r.text}\nscore:{r.score}\nconfidence:{confidence_text(r)}"
        for i, r in enumerate(reviews, start=1)
    ]
    return "\n\n".join(blocks)


__all__ = [
    "PLACEHOLDERS",
    "REASK_SUFFIX",
    "Opinion",
    "ParsedResponse",
    "PromptTemplate",
    "Reconstruction",
    "ResponseKind",
    "TemplateName",
    "format_input_documents",
    "json_format",
    "load_template",
    "ordinal",
    "parse_key_points",
    "parse_structured",
    "render",
    "review_bindings",
]
