"""Anchoring and conformity analysis over a set of decisions.

Anchoring: fit ``P(accept | s_1..s_N) = sigmoid(sum_i w_i * s_i)`` and compare
the weight of the first-seen review with the others. Conformity: the share of
majority-aligned predictions whose majority was also right.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .domain import BiasReport, ConformityCounts, Decision, Submission
from .errors import EmptyPsi, EmptyScores, InsufficientData, NonFinite
from .pipeline import RunTrace

ACCEPT_THRESHOLD = 6
MIN_ROWS = 10


def sigmoid(z):
    return expit(z)


@dataclass(frozen=True)
class DecisionMatrix:
    """One row per paper with exactly ``n_star`` reviews, scores in review order."""

    scores: np.ndarray  # (rows, n_star)
    outcomes: np.ndarray  # (rows,), 0/1
    paper_ids: tuple[str, ...] = ()
    excluded: int = 0

    def __post_init__(self) -> None:
        if self.scores.ndim != 2 or self.outcomes.shape != (self.scores.shape[0],):
            raise ValueError("scores must be (rows, n_star) and outcomes (rows,)")
        if not np.isin(self.outcomes, (0, 1)).all():
            raise ValueError("outcomes must be 0 or 1")

    @property
    def n_star(self) -> int:
        return self.scores.shape[1]

    def __len__(self) -> int:
        return self.scores.shape[0]


def build_decision_matrix(
    rows: Iterable[tuple[str, Sequence[int], Decision | bool | int]], n_star: int
) -> DecisionMatrix:
    """Keep papers whose panel has exactly ``n_star`` reviews; others are counted, not padded."""
    kept_ids, kept_scores, kept_outcomes, excluded = [], [], [], 0
    for paper_id, scores, outcome in rows:
        if len(scores) != n_star:
            excluded += 1
            continue
        kept_ids.append(paper_id)
        kept_scores.append(list(scores))
        kept_outcomes.append(outcome.as_int if isinstance(outcome, Decision) else int(outcome))
    return DecisionMatrix(
        np.array(kept_scores, dtype=np.int64).reshape(len(kept_scores), n_star),
        np.array(kept_outcomes, dtype=np.int64),
        tuple(kept_ids),
        excluded,
    )


def typical_panel_size(sizes: Iterable[int]) -> int:
    """Most common panel size; ties go to the smaller size."""
    counts = Counter(sizes)
    if not counts:
        raise InsufficientData("no papers")
    return min(counts, key=lambda k: (-counts[k], k))


@dataclass(frozen=True)
class AnchoringFit:
    coefficients: tuple[float, ...]
    loss: float
    estimator: str
    intercept: float | None = None

    @property
    def dominant_position(self) -> int:
        """1-based review position with the largest weight."""
        return int(np.argmax(self.coefficients)) + 1


def fit_anchoring(
    m: DecisionMatrix,
    lr: float = 0.05,
    iters: int = 2000,
    seed: int = 0,
    loss: str = "squared",
    intercept: bool = False,
    min_rows: int = MIN_ROWS,
) -> AnchoringFit:
    """Full-batch gradient descent from all-zero weights.

    ``loss="squared"`` minimizes the mean of ``(sigmoid(X w) - y)^2``;
    ``loss="mle"`` minimizes the mean logistic log-loss instead. The start
    point is fixed, so ``seed`` does not change the result; it is accepted
    so callers can pass one options bundle everywhere.
    """
    del seed
    if loss not in ("squared", "mle"):
        raise ValueError(f"unknown loss {loss!r}")
    if len(m) < min_rows:
        raise InsufficientData(f"{len(m)} rows, need at least {min_rows}")
    X = m.scores.astype(float)
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    y = m.outcomes.astype(float)
    n = X.shape[0]
    w = np.zeros(X.shape[1])

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(iters):
            p = expit(X @ w)
            if loss == "squared":
                grad = X.T @ (2.0 * (p - y) * p * (1.0 - p)) / n
            else:
                grad = X.T @ (p - y) / n
            w -= lr * grad
            if not np.all(np.isfinite(w)):
                raise NonFinite(f"weights diverged (lr={lr})")
        value = _objective(X, y, w, loss)
    if not math.isfinite(value):
        raise NonFinite(f"loss is {value} (lr={lr})")
    weights = tuple(float(v) for v in (w[:-1] if intercept else w))
    return AnchoringFit(weights, value, loss, float(w[-1]) if intercept else None)


def _objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, loss: str) -> float:
    z = X @ w
    if loss == "squared":
        return float(np.mean((expit(z) - y) ** 2))
    # log(1 + e^z) - y z, written stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def planted_decision_matrix(
    rows: int = 500,
    weights: Sequence[float] = (0.4, 0.1, 0.1, 0.1, 0.1),
    seed: int = 0,
    score_range: tuple[int, int] = (1, 10),
) -> DecisionMatrix:
    """Synthetic panels with ``outcome = 1[sigmoid(w . s) > u]``, ``u ~ U(0, 1)``."""
    rng = np.random.default_rng(seed)
    lo, hi = score_range
    scores = rng.integers(lo, hi + 1, size=(rows, len(weights)))
    u = rng.random(rows)
    outcomes = (expit(scores @ np.asarray(weights, dtype=float)) > u).astype(np.int64)
    return DecisionMatrix(scores, outcomes, tuple(f"synthetic-{i:04d}" for i in range(rows)))


def majority_vote(scores: Sequence[int], threshold: int = ACCEPT_THRESHOLD) -> Decision:
    """Strict majority of scores at or above ``threshold`` accepts; a tie rejects."""
    if not scores:
        raise EmptyScores()
    accepts = sum(1 for s in scores if s >= threshold)
    return Decision.ACCEPT if accepts > len(scores) - accepts else Decision.REJECT


def conformity_kappa(
    triples: Iterable[tuple[Decision, Decision, Decision]],
) -> tuple[float, ConformityCounts]:
    """``triples`` are (majority vote, ground truth, prediction) per paper."""
    phi = psi = both = total = 0
    for vote, truth, pred in triples:
        total += 1
        in_phi = vote is truth
        in_psi = vote is pred
        phi += in_phi
        psi += in_psi
        both += in_phi and in_psi
    if psi == 0:
        raise EmptyPsi()
    return both / psi, ConformityCounts(both, psi, phi, total)


def reflection_profile(traces: Iterable[RunTrace]) -> dict[int, float]:
    """Share of runs that reflected at least once, keyed by panel score spread."""
    buckets: dict[int, list[bool]] = {}
    for t in traces:
        buckets.setdefault(t.score_max_diff, []).append(t.reflection_count_total > 0)
    return {k: sum(v) / len(v) for k, v in sorted(buckets.items())}


def _histogram(values: Iterable[int]) -> dict[int, int]:
    return dict(sorted(Counter(values).items()))


def score_distributions(
    corpus: Iterable[Submission], traces: Iterable[RunTrace] = ()
) -> dict[str, object]:
    """Integer-binned score histograms.

    ``score_diff_given_reflection`` counts, per score spread, the runs in
    ``traces`` that reflected at least once.
    """
    corpus = list(corpus)
    by_decision: dict[str, dict[int, int]] = {}
    for d in Decision:
        by_decision[d.value] = _histogram(
            score for s in corpus if s.ground_truth_decision is d for score in s.scores
        )
    return {
        "overall": _histogram(score for s in corpus for score in s.scores),
        "by_decision": by_decision,
        "score_diff": _histogram(s.score_spread for s in corpus),
        "score_diff_given_reflection": _histogram(
            t.score_max_diff for t in traces if t.reflection_count_total > 0
        ),
    }


def histogram_csv(hist: Mapping[int, int]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin", "count"])
    for k, v in sorted(hist.items()):
        writer.writerow([k, v])
    return buf.getvalue()


def build_bias_report(
    traces: Sequence[RunTrace],
    submissions: Mapping[str, Submission],
    config_fingerprint: str,
    n_star: int | None = None,
    lr: float = 0.05,
    iters: int = 2000,
    loss: str = "squared",
    intercept: bool = False,
    min_rows: int = MIN_ROWS,
    threshold: int = ACCEPT_THRESHOLD,
) -> BiasReport:
    """Anchoring fit on the predicted decisions plus conformity against ground truth.

    If too few papers share the panel size, the anchoring part is reported as
    absent instead of failing the whole report. EmptyPsi still propagates.
    """
    traces = sorted(traces, key=lambda t: t.submission_id)
    panels = [(t.submission_id, submissions[t.submission_id].scores, t.output.final_decision) for t in traces]
    if n_star is None:
        n_star = typical_panel_size(len(scores) for _, scores, _ in panels)
    matrix = build_decision_matrix(panels, n_star)

    triples = []
    for t in traces:
        s = submissions[t.submission_id]
        if s.ground_truth_decision is not None:
            triples.append((majority_vote(s.scores, threshold), s.ground_truth_decision, t.output.final_decision))
    kappa, counts = conformity_kappa(triples)

    extra: dict[str, object] = {
        "methods": sorted({t.method.value for t in traces}),
        "reflection_profile": {str(k): v for k, v in reflection_profile(traces).items()},
        "accept_threshold": threshold,
        "fit_options": {"lr": lr, "iters": iters},
    }
    try:
        fit = fit_anchoring(matrix, lr=lr, iters=iters, loss=loss, intercept=intercept, min_rows=min_rows)
    except InsufficientData as exc:
        extra["anchoring_status"] = f"not fitted: {exc}"
        coefficients: tuple[float, ...] = ()
        fit_loss: float | None = None
        fitted_intercept = None
    else:
        extra["anchoring_status"] = "fitted"
        coefficients, fit_loss, fitted_intercept = fit.coefficients, fit.loss, fit.intercept

    return BiasReport(
        anchoring_coefficients=coefficients,
        fit_loss=fit_loss,
        kappa=kappa,
        counts=counts,
        config_fingerprint=config_fingerprint,
        n_star=n_star,
        papers_used=len(matrix),
        papers_excluded=matrix.excluded,
        estimator=loss,
        intercept=fitted_intercept,
        extra=extra,
    )
