"""Typed values shared by every module: reviews, submissions, cognitive state,
aspect judgments, meta-review outputs and bias reports.

All values are frozen dataclasses; "updating" one returns a new instance.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import (
    ConfidenceOutOfRange,
    EmptyReviews,
    EmptyReviewText,
    SchemaViolation,
    ScoreOutOfRange,
)

SCORE_MIN, SCORE_MAX = 1, 10
CONFIDENCE_MIN, CONFIDENCE_MAX = 1, 5

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z])(?=[A-Z])")


def normalize_label(text: object) -> str:
    """Fold a label to a comparison key.

    ``"StrongPositive"``, ``"strong_positive"`` and ``" Strong  positive, "``
    all become ``"strong positive"``.
    """
    s = _CAMEL_BOUNDARY.sub(" ", str(text).strip())
    s = re.sub(r"[_\-]+", " ", s).lower()
    s = re.sub(r"\s+", " ", s)
    return s.strip(" .,;:!\"'`")


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"

    @classmethod
    def parse(cls, raw: object) -> "Decision":
        key = normalize_label(raw)
        for member in cls:
            if key == member.value:
                return member
        raise SchemaViolation("final_decision", f"expected accept or reject, got {raw!r}")

    @classmethod
    def from_bool(cls, accepted: bool) -> "Decision":
        return cls.ACCEPT if accepted else cls.REJECT

    @property
    def as_int(self) -> int:
        return 1 if self is Decision.ACCEPT else 0


class Aspect(str, enum.Enum):
    NOVELTY = "Novelty"
    SOUNDNESS = "Soundness"
    CLARITY = "Clarity"
    ADVANCEMENT = "Advancement"
    COMPLIANCE = "Compliance"
    OVERALL_QUALITY = "Overall quality"

    @classmethod
    def parse(cls, raw: object) -> "Aspect | None":
        key = normalize_label(raw)
        for member in cls:
            if normalize_label(member.value) == key:
                return member
        return None


ASPECTS: tuple[Aspect, ...] = tuple(Aspect)


class Convincingness(str, enum.Enum):
    NOT_AT_ALL = "Not at all"
    SLIGHTLY_CONVINCING = "Slightly Convincing"
    HIGHLY_CONVINCING = "Highly Convincing"

    @classmethod
    def parse(cls, raw: object, lenient: bool = False) -> "Convincingness | None":
        key = normalize_label(raw)
        for member in cls:
            if key == normalize_label(member.value):
                return member
        if key in ("slightly", "highly"):
            return cls(f"{key.capitalize()} Convincing")
        if lenient:
            # models answering the Naive prompt tend to use a high/medium/low scale
            return _CONVINCINGNESS_ALIASES.get(key)
        return None


_CONVINCINGNESS_ALIASES = {
    "high": Convincingness.HIGHLY_CONVINCING,
    "medium": Convincingness.SLIGHTLY_CONVINCING,
    "moderate": Convincingness.SLIGHTLY_CONVINCING,
    "low": Convincingness.NOT_AT_ALL,
    "none": Convincingness.NOT_AT_ALL,
    "not convincing": Convincingness.NOT_AT_ALL,
}


@dataclass(frozen=True)
class SentimentVocabulary:
    """Ordered sentiment levels; the one-hot slot of a label is its position."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ValueError("a sentiment vocabulary needs at least two levels")
        keys = [normalize_label(x) for x in self.labels]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate sentiment levels in {self.labels}")

    def __len__(self) -> int:
        return len(self.labels)

    def normalize(self, raw: object) -> str | None:
        """Canonical label for ``raw``, or None when it is outside the vocabulary."""
        key = normalize_label(raw)
        key = re.sub(r"^strongly\b", "strong", key)
        for label in self.labels:
            if normalize_label(label) == key:
                return label
        return None

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @classmethod
    def from_spec(cls, spec: str | Iterable[str]) -> "SentimentVocabulary":
        """``"4"``/``"5"`` select the presets; anything else is a comma list."""
        if isinstance(spec, str):
            if spec.strip() == "4":
                return FOUR_LEVEL
            if spec.strip() == "5":
                return FIVE_LEVEL
            spec = [part.strip() for part in spec.split(",") if part.strip()]
        return cls(tuple(spec))


FOUR_LEVEL = SentimentVocabulary(("Strong negative", "Negative", "Positive", "Strong positive"))
FIVE_LEVEL = SentimentVocabulary(
    ("Strong negative", "Negative", "Neutral", "Positive", "Strong positive")
)
DEFAULT_VOCABULARY = FOUR_LEVEL


@dataclass(frozen=True)
class Review:
    text: str
    score: int
    confidence: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"text": self.text, "score": self.score}
        if self.confidence is not None:
            out["confidence"] = self.confidence
        return out


@dataclass(frozen=True)
class AspectSentimentVector:
    """Per-aspect sentiment labels in canonical aspect order.

    A ``None`` label (only produced in lenient mode) encodes as an all-zero block.
    """

    labels: tuple[str | None, ...]
    vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY

    def __post_init__(self) -> None:
        if len(self.labels) != len(ASPECTS):
            raise SchemaViolation("aspects", f"expected {len(ASPECTS)} labels, got {len(self.labels)}")
        for aspect, label in zip(ASPECTS, self.labels):
            if label is not None and label not in self.vocabulary.labels:
                raise SchemaViolation(aspect.value, f"sentiment {label!r} not in vocabulary")

    @property
    def dimension(self) -> int:
        return len(ASPECTS) * len(self.vocabulary)

    def to_array(self) -> np.ndarray:
        k = len(self.vocabulary)
        vec = np.zeros(len(ASPECTS) * k)
        for block, label in enumerate(self.labels):
            if label is not None:
                vec[block * k + self.vocabulary.index(label)] = 1.0
        return vec

    def as_mapping(self) -> dict[str, str | None]:
        return {a.value: label for a, label in zip(ASPECTS, self.labels)}

    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[str, object],
        vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY,
        lenient: bool = False,
    ) -> "AspectSentimentVector":
        found: dict[Aspect, str | None] = {}
        for key, raw in mapping.items():
            aspect = Aspect.parse(key)
            if aspect is None:
                raise SchemaViolation(str(key), "unknown aspect")
            if aspect in found:
                raise SchemaViolation(aspect.value, "duplicate aspect")
            label = None if raw is None else vocabulary.normalize(raw)
            if label is None and not lenient:
                raise SchemaViolation(aspect.value, f"sentiment {raw!r} not in vocabulary")
            found[aspect] = label
        for aspect in ASPECTS:
            if aspect not in found:
                raise SchemaViolation(aspect.value, "missing aspect")
        return cls(tuple(found[a] for a in ASPECTS), vocabulary)


@dataclass(frozen=True)
class Submission:
    id: str
    reviews: tuple[Review, ...]
    ground_truth_meta: str | None = None
    ground_truth_decision: Decision | None = None
    ground_truth_sentiments: AspectSentimentVector | None = None

    @property
    def scores(self) -> list[int]:
        return [r.score for r in self.reviews]

    @property
    def score_spread(self) -> int:
        """Maximum pairwise score difference within the panel."""
        return max(self.scores) - min(self.scores) if self.reviews else 0


def validate_submission(s: Submission) -> Submission:
    if not s.reviews:
        raise EmptyReviews()
    for i, review in enumerate(s.reviews, start=1):
        if not isinstance(review.text, str) or not review.text.strip():
            raise EmptyReviewText(i)
        score = review.score
        if isinstance(score, bool) or not isinstance(score, int) or not SCORE_MIN <= score <= SCORE_MAX:
            raise ScoreOutOfRange(i, score)
        conf = review.confidence
        if conf is not None and (
            isinstance(conf, bool) or not isinstance(conf, int) or not CONFIDENCE_MIN <= conf <= CONFIDENCE_MAX
        ):
            raise ConfidenceOutOfRange(i, conf)
    return s


@dataclass(frozen=True)
class KeyPointSummary:
    review_index: int
    strengths: tuple[str, ...]
    weaknesses: tuple[str, ...]
    raw_text: str


@dataclass(frozen=True)
class CognitiveState:
    """The evolving opinion context of one CAF run.

    ``transcript`` is the running chat; it only ever grows.
    """

    step: int = 0
    opinion: str = ""
    key_points: str | None = None
    transcript: tuple[tuple[str, str], ...] = ()
    conflict_pending: bool = False
    reflection_count_total: int = 0
    reflection_counts_per_step: tuple[int, ...] = ()

    def exchange(self, user: str, assistant: str, **changes: Any) -> "CognitiveState":
        return replace(
            self,
            transcript=self.transcript + (("user", user), ("assistant", assistant)),
            **changes,
        )


@dataclass(frozen=True)
class AspectJudgment:
    aspect: Aspect
    opinion: str
    sentiment: str
    convincingness: Convincingness

    def to_dict(self) -> dict[str, str]:
        return {
            "aspect": self.aspect.value,
            "opinion": self.opinion,
            "sentiment": self.sentiment,
            "convincingness": self.convincingness.value,
        }


@dataclass(frozen=True)
class MetaReviewOutput:
    aspects: tuple[AspectJudgment, ...]
    final_decision: Decision
    free_text: str | None = None

    def __post_init__(self) -> None:
        seen = [j.aspect for j in self.aspects]
        for aspect in ASPECTS:
            count = seen.count(aspect)
            if count == 0:
                raise SchemaViolation(aspect.value, "missing aspect")
            if count > 1:
                raise SchemaViolation(aspect.value, "duplicate aspect")
        if len(seen) != len(ASPECTS):
            raise SchemaViolation("aspects", f"expected {len(ASPECTS)} judgments")
        if not isinstance(self.final_decision, Decision):
            raise SchemaViolation("final_decision")
        # canonical order makes equality independent of the model's ordering
        ordered = tuple(sorted(self.aspects, key=lambda j: ASPECTS.index(j.aspect)))
        object.__setattr__(self, "aspects", ordered)

    def judgment(self, aspect: Aspect) -> AspectJudgment:
        return next(j for j in self.aspects if j.aspect is aspect)

    def sentiment_labels(self) -> tuple[str, ...]:
        return tuple(j.sentiment for j in self.aspects)

    def prose(self) -> str:
        """Free text if present, else the aspect opinions joined in order."""
        if self.free_text:
            return self.free_text
        return "\n".join(j.opinion for j in self.aspects)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "aspects": [j.to_dict() for j in self.aspects],
            "final_decision": self.final_decision.value,
        }
        if self.free_text is not None:
            out["free_text"] = self.free_text
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetaReviewOutput":
        """Rebuild from :meth:`to_dict` output.

        Sentiments are taken as stored (a lenient run may have kept an
        out-of-vocabulary label); use the prompt parser for model output.
        """
        judgments = []
        for item in data["aspects"]:
            aspect = Aspect.parse(item["aspect"])
            conv = Convincingness.parse(item["convincingness"], lenient=True)
            if aspect is None or conv is None:
                raise SchemaViolation("aspects", f"cannot decode {item!r}")
            judgments.append(AspectJudgment(aspect, item["opinion"], item["sentiment"], conv))
        return cls(tuple(judgments), Decision.parse(data["final_decision"]), data.get("free_text"))


@dataclass(frozen=True)
class ConformityCounts:
    both: int  # |Phi ∩ Psi|
    psi: int
    phi: int
    total: int

    def to_dict(self) -> dict[str, int]:
        return {"phi_and_psi": self.both, "psi": self.psi, "phi": self.phi, "total": self.total}


@dataclass(frozen=True)
class BiasReport:
    anchoring_coefficients: tuple[float, ...]
    fit_loss: float | None
    kappa: float
    counts: ConformityCounts
    config_fingerprint: str
    n_star: int
    papers_used: int
    papers_excluded: int
    estimator: str = "squared"
    intercept: float | None = None
    panel_policy: str = "papers whose review count differs from n_star are excluded, not padded"
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.counts.psi > 0 and self.kappa != self.counts.both / self.counts.psi:
            raise ValueError("kappa inconsistent with counts")

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchoring_coefficients": list(self.anchoring_coefficients),
            "fit_loss": self.fit_loss,
            "estimator": self.estimator,
            "intercept": self.intercept,
            "kappa": self.kappa,
            "counts": self.counts.to_dict(),
            "n_star": self.n_star,
            "papers_used": self.papers_used,
            "papers_excluded": self.papers_excluded,
            "panel_policy": self.panel_policy,
            "config_fingerprint": self.config_fingerprint,
            **dict(self.extra),
        }
