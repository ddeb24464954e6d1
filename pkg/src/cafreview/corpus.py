"""JSON-lines corpus ingestion, seeded sampling and ground-truth sentiment labelling."""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .domain import (
    DEFAULT_VOCABULARY,
    AspectSentimentVector,
    Decision,
    Review,
    SentimentVocabulary,
    Submission,
    normalize_label,
    validate_submission,
)
from .errors import (
    ConfidenceOutOfRange,
    EmptyReviews,
    EmptyReviewText,
    MalformedRecord,
    MissingGroundTruth,
    NTooLarge,
    SchemaViolation,
    ScoreOutOfRange,
)
from .llm import Gateway
from .pipeline import DEFAULT_MODEL, PipelineConfig, PromptCaller
from .prompts import ResponseKind, TemplateName, json_format, load_template, render


@dataclass(frozen=True)
class FieldMap:
    """Where each record field lives in a given export.

    When ``writer`` is set, only reviews whose writer is listed in
    ``reviewer_writers`` are kept; author rebuttals and public comments
    are dropped that way.
    """

    paper_id: str = "paper_id"
    reviews: str = "reviews"
    text: str = "text"
    score: str = "score"
    confidence: str = "confidence"
    meta_review: str = "meta_review"
    decision: str = "decision"
    sentiments: str = "ground_truth_sentiments"
    writer: str | None = None
    reviewer_writers: tuple[str, ...] = ()


CANONICAL = FieldMap()
PEERSUM = FieldMap(
    decision="paper_acceptance",
    text="comment",
    score="rating",
    writer="writer",
    reviewer_writers=("official_reviewer",),
)
FIELD_MAPS = {"canonical": CANONICAL, "peersum": PEERSUM}

_LEADING_INT = re.compile(r"\s*(-?\d+)\b")


def _as_int(value: Any) -> int | None:
    """Integers, or strings that start with one ("6: marginally above")."""
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        m = _LEADING_INT.match(value)
        if m:
            return int(m.group(1))
    return None


def _decision(raw: Any) -> Decision | None:
    key = normalize_label(raw)
    if key.startswith("accept"):
        return Decision.ACCEPT
    if key.startswith("reject"):
        return Decision.REJECT
    return None


def parse_record(
    obj: Any,
    line: int,
    fields: FieldMap = CANONICAL,
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
) -> Submission:
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "record is not an object")
    paper_id = obj.get(fields.paper_id)
    if not isinstance(paper_id, (str, int)) or isinstance(paper_id, bool) or str(paper_id) == "":
        raise MalformedRecord(line, fields.paper_id)
    raw_reviews = obj.get(fields.reviews)
    if not isinstance(raw_reviews, list):
        raise MalformedRecord(line, fields.reviews)

    reviews = []
    for item in raw_reviews:
        if not isinstance(item, dict):
            raise MalformedRecord(line, fields.reviews)
        if fields.writer is not None and item.get(fields.writer) not in fields.reviewer_writers:
            continue
        text = item.get(fields.text)
        if not isinstance(text, str):
            raise MalformedRecord(line, fields.text)
        if fields.score not in item:
            raise MalformedRecord(line, fields.score)
        score = _as_int(item[fields.score])
        if score is None:
            raise MalformedRecord(line, fields.score)
        confidence = None
        if item.get(fields.confidence) is not None:
            confidence = _as_int(item[fields.confidence])
            if confidence is None:
                raise MalformedRecord(line, fields.confidence)
        reviews.append(Review(text, score, confidence))

    meta = obj.get(fields.meta_review)
    if meta is not None and not isinstance(meta, str):
        raise MalformedRecord(line, fields.meta_review)
    decision = None
    if obj.get(fields.decision) is not None:
        decision = _decision(obj[fields.decision])
        if decision is None:
            raise MalformedRecord(line, fields.decision)
    sentiments = None
    if obj.get(fields.sentiments) is not None:
        try:
            sentiments = AspectSentimentVector.from_mapping(obj[fields.sentiments], vocabulary)
        except (SchemaViolation, AttributeError) as exc:
            raise MalformedRecord(line, fields.sentiments) from exc

    s = Submission(str(paper_id), tuple(reviews), meta, decision, sentiments)
    try:
        validate_submission(s)
    except EmptyReviews as exc:
        raise MalformedRecord(line, fields.reviews) from exc
    except EmptyReviewText as exc:
        raise MalformedRecord(line, fields.text) from exc
    except ScoreOutOfRange as exc:
        raise MalformedRecord(line, fields.score) from exc
    except ConfidenceOutOfRange as exc:
        raise MalformedRecord(line, fields.confidence) from exc
    return s


def iter_corpus(
    path: str | Path,
    fields: FieldMap = CANONICAL,
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
) -> Iterable[Submission]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            yield parse_record(obj, line_no, fields, vocabulary)


def load_corpus(
    path: str | Path,
    fields: FieldMap = CANONICAL,
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
) -> list[Submission]:
    """Validated submissions in file order (1-based line numbers in errors)."""
    return list(iter_corpus(path, fields, vocabulary))


def record_to_dict(s: Submission) -> dict[str, Any]:
    out: dict[str, Any] = {"paper_id": s.id, "reviews": [r.to_dict() for r in s.reviews]}
    if s.ground_truth_meta is not None:
        out["meta_review"] = s.ground_truth_meta
    if s.ground_truth_decision is not None:
        out["decision"] = s.ground_truth_decision.value
    if s.ground_truth_sentiments is not None:
        out["ground_truth_sentiments"] = s.ground_truth_sentiments.as_mapping()
    return out


def dumps_corpus(corpus: Iterable[Submission]) -> str:
    return "".join(json.dumps(record_to_dict(s), ensure_ascii=False) + "\n" for s in corpus)


def dump_corpus(corpus: Iterable[Submission], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_corpus(corpus), encoding="utf-8")
    return path


def sample(corpus: Sequence[Submission], n: int, seed: int) -> list[Submission]:
    """Seeded sample without replacement (Mersenne Twister, so stable across platforms)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > len(corpus):
        raise NTooLarge(n, len(corpus))
    return random.Random(seed).sample(list(corpus), n)


def annotate_sentiments(
    s: Submission,
    gateway: Gateway,
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
    model: str = DEFAULT_MODEL,
    temperature: float = 0.0,
    lenient: bool = False,
) -> AspectSentimentVector:
    """Label the ground-truth meta-review's per-aspect sentiment with the model."""
    if not s.ground_truth_meta:
        raise MissingGroundTruth("meta_review")
    cfg = PipelineConfig(model=model, temperature=temperature, sentiment_vocabulary=vocabulary, lenient=lenient)
    caller = PromptCaller(gateway, cfg)
    prompt = render(load_template(TemplateName.SENTIMENT_ANNOTATION), {"meta_review": s.ground_truth_meta, "json_format": json_format()})
    _, _, parsed = caller.ask(TemplateName.SENTIMENT_ANNOTATION, prompt, ResponseKind.SENTIMENT_LABELS, (),
                              "sentiment_annotation")
    return parsed.payload


def label_corpus(
    corpus: Sequence[Submission],
    gateway: Gateway,
    jobs: int = 1,
    **options: Any,
) -> list[Submission]:
    """Annotate every record; output keeps input order."""

    def one(s: Submission) -> Submission:
        return replace(s, ground_truth_sentiments=annotate_sentiments(s, gateway, **options))

    if jobs <= 1:
        return [one(s) for s in corpus]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, corpus))
