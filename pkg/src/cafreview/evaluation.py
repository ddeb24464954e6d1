"""Meta-review scoring: FacetEval sentiment consistency, ROUGE, decision accuracy."""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .domain import AspectSentimentVector, Decision, MetaReviewOutput, Submission
from .errors import IncompleteAspects, MissingGroundTruth, VocabularyMismatch
from .pipeline import METHOD_ORDER, Method, RunTrace

_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on runs of non-alphanumerics; no stemming or stopwords."""
    return [t for t in _SPLIT.split(text.lower()) if t]


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _prf(overlap: int, candidate_total: int, reference_total: int) -> PRF:
    precision = overlap / candidate_total if candidate_total else 0.0
    recall = overlap / reference_total if reference_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> PRF:
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = ngram_counts(tokenize(candidate), n)
    ref = ngram_counts(tokenize(reference), n)
    overlap = sum((cand & ref).values())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> PRF:
    cand, ref = tokenize(candidate), tokenize(reference)
    return _prf(lcs_length(cand, ref), len(cand), len(ref))


def prediction_vector(pred: MetaReviewOutput, truth: AspectSentimentVector, strict: bool = True) -> AspectSentimentVector:
    """Encode the predicted sentiments over the ground truth's vocabulary."""
    labels: list[str | None] = []
    for raw in pred.sentiment_labels():
        label = truth.vocabulary.normalize(raw)
        if label is None and strict:
            raise VocabularyMismatch(f"predicted sentiment {raw!r} is not in {list(truth.vocabulary.labels)}")
        labels.append(label)
    return AspectSentimentVector(tuple(labels), truth.vocabulary)


def facet_eval(
    pred: MetaReviewOutput | AspectSentimentVector,
    truth: AspectSentimentVector,
    strict: bool = True,
) -> float:
    """Cosine similarity of the concatenated per-aspect one-hot vectors.

    With complete one-hot inputs this is the fraction of aspects whose
    sentiment matches. In lenient mode an unlabelled aspect is a zero block
    and the cosine is taken over whatever norms remain.
    """
    if isinstance(pred, MetaReviewOutput):
        pred = prediction_vector(pred, truth, strict)
    if pred.vocabulary.labels != truth.vocabulary.labels:
        raise VocabularyMismatch(f"{list(pred.vocabulary.labels)} vs {list(truth.vocabulary.labels)}")
    if any(label is None for label in truth.labels):
        raise IncompleteAspects("ground-truth sentiments are missing an aspect")
    if strict and any(label is None for label in pred.labels):
        raise IncompleteAspects("predicted sentiments are missing an aspect")
    a, b = pred.to_array(), truth.to_array()
    norms = float(np.linalg.norm(a) * np.linalg.norm(b))
    return float(a @ b) / norms if norms else 0.0


@dataclass(frozen=True)
class ScoreCard:
    facet_eval: float
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF
    decision_correct: bool

    def to_dict(self) -> dict[str, object]:
        return {
            "facet_eval": self.facet_eval,
            "rouge1": self.rouge1._asdict(),
            "rouge2": self.rouge2._asdict(),
            "rougeL": self.rougeL._asdict(),
            "decision_correct": self.decision_correct,
        }


def score(
    pred: MetaReviewOutput,
    truth_meta_text: str | None,
    truth_sentiments: AspectSentimentVector | None,
    truth_decision: Decision | None,
    strict: bool = True,
) -> ScoreCard:
    if truth_meta_text is None:
        raise MissingGroundTruth("meta_review")
    if truth_sentiments is None:
        raise MissingGroundTruth("sentiments")
    if truth_decision is None:
        raise MissingGroundTruth("decision")
    text = pred.prose()
    return ScoreCard(
        facet_eval=facet_eval(pred, truth_sentiments, strict),
        rouge1=rouge_n(text, truth_meta_text, 1),
        rouge2=rouge_n(text, truth_meta_text, 2),
        rougeL=rouge_l(text, truth_meta_text),
        decision_correct=pred.final_decision is truth_decision,
    )


def score_submission(pred: MetaReviewOutput, s: Submission, strict: bool = True) -> ScoreCard:
    return score(pred, s.ground_truth_meta, s.ground_truth_sentiments, s.ground_truth_decision, strict)


METRICS = ("FacetEval", "ROUGE-1", "ROUGE-2", "ROUGE-L", "Decision accuracy")


def _metric_values(card: ScoreCard) -> tuple[float, ...]:
    return (card.facet_eval, card.rouge1.f1, card.rouge2.f1, card.rougeL.f1, float(card.decision_correct))


@dataclass(frozen=True)
class ScoredTrace:
    submission_id: str
    method: Method
    card: ScoreCard


def score_traces(
    traces: Iterable[RunTrace], submissions: Mapping[str, Submission], strict: bool = True
) -> list[ScoredTrace]:
    """Score each trace against its submission's ground truth.

    Traces whose submission is not in ``submissions`` raise MissingGroundTruth.
    """
    rows = []
    for trace in traces:
        s = submissions.get(trace.submission_id)
        if s is None:
            raise MissingGroundTruth(f"record {trace.submission_id}")
        rows.append(ScoredTrace(trace.submission_id, trace.method, score_submission(trace.output, s, strict)))
    return sorted(rows, key=lambda r: (METHOD_ORDER.index(r.method), r.submission_id))


@dataclass(frozen=True)
class ResultsTable:
    """Per-method metric means (headline ROUGE number is f1)."""

    means: dict[Method, tuple[float, ...]]
    counts: dict[Method, int]
    rows: tuple[ScoredTrace, ...] = ()

    @property
    def methods(self) -> list[Method]:
        return [m for m in METHOD_ORDER if m in self.means]

    def value(self, metric: str, method: Method | str) -> float:
        return self.means[Method(method)][METRICS.index(metric)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", *(m.value for m in self.methods)])
        for i, metric in enumerate(METRICS):
            writer.writerow([metric, *(f"{self.means[m][i]:.6f}" for m in self.methods)])
        return buf.getvalue()

    def to_dict(self) -> dict[str, object]:
        return {
            "methods": [m.value for m in self.methods],
            "counts": {m.value: self.counts[m] for m in self.methods},
            "means": {metric: {m.value: round(self.means[m][i], 12) for m in self.methods}
                      for i, metric in enumerate(METRICS)},
            "records": [
                {"submission_id": r.submission_id, "method": r.method.value, **r.card.to_dict()} for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def results_table(rows: Sequence[ScoredTrace]) -> ResultsTable:
    grouped: dict[Method, list[tuple[float, ...]]] = {}
    for row in rows:
        grouped.setdefault(row.method, []).append(_metric_values(row.card))
    means = {m: tuple(float(x) for x in np.mean(np.array(v), axis=0)) for m, v in grouped.items()}
    return ResultsTable(means, {m: len(v) for m, v in grouped.items()}, tuple(rows))
