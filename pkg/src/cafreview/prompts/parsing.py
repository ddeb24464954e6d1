"""Lenient-repair parsing of model responses into domain values.

Strict ``json.loads`` is tried first. Only if it fails is the repair ladder
entered; each rung rewrites the text further and parsing is retried after
every rung that changed something:

1. control characters inside strings tolerated
2. markdown code fences stripped
3. outermost ``{...}`` span extracted
4. typographic quotes normalized
5. missing commas between lines inserted (the published format omits one)
6. trailing commas dropped
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Any, Callable

from ..domain import (
    ASPECTS,
    DEFAULT_VOCABULARY,
    Aspect,
    AspectJudgment,
    AspectSentimentVector,
    Convincingness,
    Decision,
    KeyPointSummary,
    MetaReviewOutput,
    SentimentVocabulary,
    normalize_label,
)
from ..errors import SchemaViolation, UnparseableResponse


class ResponseKind(str, enum.Enum):
    OPINION = "opinion"
    OPINION_WITH_CONFLICT = "opinion_with_conflict"
    RECONSTRUCTION = "reconstruction"
    FINAL_META_REVIEW = "final_meta_review"
    KEY_POINTS = "key_points"
    SENTIMENT_LABELS = "sentiment_labels"
    FREE_TEXT = "free_text"


@dataclass(frozen=True)
class Opinion:
    opinion: str
    conflict: bool | None = None


@dataclass(frozen=True)
class Reconstruction:
    key_concepts: str
    opinion: str
    conflict: bool


@dataclass(frozen=True)
class ParsedResponse:
    kind: ResponseKind
    payload: Any
    repair_applied: bool = False


_FENCE = re.compile(r"```[ \t]*[A-Za-z0-9_-]*[ \t]*\r?\n?(.*?)```", re.S)
_OPEN_FENCE = re.compile(r"^\s*```[ \t]*[A-Za-z0-9_-]*[ \t]*\r?\n")
_SMART_QUOTES = str.maketrans({"“": '"', "”": '"', "„": '"', "‟": '"', "″": '"',
                               "‘": "'", "’": "'", "‚": "'", "‛": "'"})
_MISSING_COMMA = re.compile(r'([\]\}"]|\btrue|\bfalse|\bnull|\d)([ \t]*\r?\n\s*)(["\{\[])')
_TRAILING_COMMA = re.compile(r",(\s*[\]\}])")


def _strip_fences(text: str) -> str:
    m = _FENCE.search(text)
    if m:
        return m.group(1)
    return _OPEN_FENCE.sub("", text, count=1).replace("```", "")


def _outermost_object(text: str) -> str:
    start, end = text.find("{"), text.rfind("}")
    if start == -1 or end <= start:
        return text
    return text[start : end + 1]


def _insert_missing_commas(text: str) -> str:
    return _MISSING_COMMA.sub(r"\1,\2\3", text)


def _drop_trailing_commas(text: str) -> str:
    return _TRAILING_COMMA.sub(r"\1", text)


_LADDER: tuple[Callable[[str], str], ...] = (
    lambda t: t,
    _strip_fences,
    _outermost_object,
    lambda t: t.translate(_SMART_QUOTES),
    _insert_missing_commas,
    _drop_trailing_commas,
)


def _try_object(text: str, strict: bool) -> dict[str, Any] | None:
    try:
        value = json.loads(text, strict=strict)
    except (json.JSONDecodeError, ValueError):
        return None
    return value if isinstance(value, dict) else None


def load_json_object(raw: str) -> tuple[dict[str, Any], bool]:
    """Parse ``raw`` into a JSON object; returns (object, repair_applied)."""
    obj = _try_object(raw, strict=True)
    if obj is not None:
        return obj, False
    text = raw
    for i, rung in enumerate(_LADDER):
        changed = rung(text)
        if i > 0 and changed == text:
            continue
        text = changed
        obj = _try_object(text, strict=False)
        if obj is not None:
            return obj, True
    raise UnparseableResponse(raw)


def _lower_keys(obj: dict[str, Any]) -> dict[str, Any]:
    return {str(k).strip().lower(): v for k, v in obj.items()}


def _as_text(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def _require(data: dict[str, Any], key: str) -> Any:
    if key not in data or data[key] is None:
        raise SchemaViolation(key, "missing field")
    return data[key]


def parse_conflict(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    key = normalize_label(value)
    if key in ("yes", "true", "1"):
        return True
    if key in ("no", "false", "0"):
        return False
    raise SchemaViolation("conflict", f"expected yes or no, got {value!r}")


def _judgments(
    data: dict[str, Any], vocabulary: SentimentVocabulary, lenient: bool, need_opinion: bool
) -> dict[Aspect, dict[str, Any]]:
    items = _require(data, "aspects")
    if not isinstance(items, list):
        raise SchemaViolation("aspects", "expected a list")
    found: dict[Aspect, dict[str, Any]] = {}
    for item in items:
        if not isinstance(item, dict):
            raise SchemaViolation("aspects", "each entry must be an object")
        item = _lower_keys(item)
        name = _require(item, "aspect")
        aspect = Aspect.parse(name)
        if aspect is None:
            raise SchemaViolation(str(name), "unknown aspect")
        if aspect in found:
            raise SchemaViolation(aspect.value, "duplicate aspect")
        found[aspect] = item
    for aspect in ASPECTS:
        if aspect not in found:
            raise SchemaViolation(aspect.value, "missing aspect")
    for aspect, item in found.items():
        if need_opinion:
            _require(item, "opinion")
        raw = _require(item, "sentiment")
        label = vocabulary.normalize(raw)
        if label is None and not lenient:
            raise SchemaViolation("sentiment", f"{aspect.value}: {raw!r} not in vocabulary")
        item["_label"] = label
        item["_raw_sentiment"] = _as_text(raw).strip()
    return found


def _meta_review(data: dict[str, Any], vocabulary: SentimentVocabulary, lenient: bool) -> MetaReviewOutput:
    found = _judgments(data, vocabulary, lenient, need_opinion=True)
    judgments = []
    for aspect in ASPECTS:
        item = found[aspect]
        conv = Convincingness.parse(_require(item, "convincingness"), lenient=lenient)
        if conv is None:
            raise SchemaViolation("convincingness", f"{aspect.value}: {item['convincingness']!r}")
        judgments.append(
            AspectJudgment(
                aspect=aspect,
                opinion=_as_text(item["opinion"]),
                # out-of-vocabulary sentiment survives only in lenient mode
                sentiment=item["_label"] if item["_label"] is not None else item["_raw_sentiment"],
                convincingness=conv,
            )
        )
    decision = Decision.parse(_require(data, "final_decision"))
    free_text = next(
        (data[k] for k in ("meta_review", "metareview", "meta-review") if isinstance(data.get(k), str)),
        None,
    )
    return MetaReviewOutput(tuple(judgments), decision, free_text)


def _sentiment_labels(data: dict[str, Any], vocabulary: SentimentVocabulary, lenient: bool) -> AspectSentimentVector:
    found = _judgments(data, vocabulary, lenient, need_opinion=False)
    return AspectSentimentVector(tuple(found[a]["_label"] for a in ASPECTS), vocabulary)


_HEADER = re.compile(r"^(?:\(?\d+[.)]\s*)?(strengths?|weakness(?:es)?)\s*:?\s*(.*)$", re.I)
_BULLET = re.compile(r"^(?:[-*•]+|\d+[.)])\s*")


def parse_key_points(raw: str, review_index: int = 1) -> KeyPointSummary:
    """Split an extraction answer into strengths and weaknesses.

    Headers may be markdown-decorated (``**(1) Strengths:**``); bullets may use
    ``-``, ``*``, ``•`` or numbering. Text before the first header is ignored.
    """
    if not raw or not raw.strip():
        raise UnparseableResponse(raw or "")
    sections: dict[str, list[str]] = {"strength": [], "weakness": []}
    current: str | None = None
    for line in raw.splitlines():
        plain = line.replace("*", "").replace("#", "").strip()
        if not plain:
            continue
        m = _HEADER.match(plain)
        if m:
            current = "strength" if m.group(1).lower().startswith("strength") else "weakness"
            rest = m.group(2).strip()
            if rest:
                sections[current].append(_BULLET.sub("", rest))
            continue
        if current is not None:
            sections[current].append(_BULLET.sub("", plain))
    return KeyPointSummary(
        review_index=review_index,
        strengths=tuple(sections["strength"]),
        weaknesses=tuple(sections["weakness"]),
        raw_text=raw,
    )


def parse_structured(
    raw: str,
    expected: ResponseKind | str,
    *,
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
    lenient: bool = False,
    review_index: int = 1,
) -> ParsedResponse:
    kind = ResponseKind(expected)
    if kind is ResponseKind.FREE_TEXT:
        if not raw or not raw.strip():
            raise UnparseableResponse(raw or "")
        return ParsedResponse(kind, raw)
    if kind is ResponseKind.KEY_POINTS:
        return ParsedResponse(kind, parse_key_points(raw, review_index))

    obj, repaired = load_json_object(raw)
    data = _lower_keys(obj)
    payload: Any
    if kind is ResponseKind.OPINION:
        conflict = parse_conflict(data["conflict"]) if data.get("conflict") is not None else None
        payload = Opinion(_as_text(_require(data, "opinion")), conflict)
    elif kind is ResponseKind.OPINION_WITH_CONFLICT:
        payload = Opinion(_as_text(_require(data, "opinion")), parse_conflict(_require(data, "conflict")))
    elif kind is ResponseKind.RECONSTRUCTION:
        payload = Reconstruction(
            key_concepts=_as_text(_require(data, "key_concepts")),
            opinion=_as_text(_require(data, "opinion")),
            conflict=parse_conflict(_require(data, "conflict")),
        )
    elif kind is ResponseKind.FINAL_META_REVIEW:
        payload = _meta_review(data, vocabulary, lenient)
    elif kind is ResponseKind.SENTIMENT_LABELS:
        payload = _sentiment_labels(data, vocabulary, lenient)
    else:  # pragma: no cover - enum exhausted above
        raise ValueError(kind)
    return ParsedResponse(kind, payload, repaired)


def parse_meta_review(obj: dict[str, Any] | str, vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
                      lenient: bool = False) -> MetaReviewOutput:
    """Inverse of :meth:`MetaReviewOutput.to_dict` (also accepts JSON text)."""
    if isinstance(obj, str):
        return parse_structured(obj, ResponseKind.FINAL_META_REVIEW, vocabulary=vocabulary, lenient=lenient).payload
    data = _lower_keys(obj)
    out = _meta_review(data, vocabulary, lenient)
    if isinstance(data.get("free_text"), str):
        out = MetaReviewOutput(out.aspects, out.final_decision, data["free_text"])
    return out
