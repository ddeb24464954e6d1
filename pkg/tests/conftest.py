from __future__ import annotations

import json
from pathlib import Path

import pytest

from cafreview.domain import Review, Submission
from cafreview.llm import FunctionBackend, Gateway, ScriptedBackend

from stub_model import stub_reply

FIXTURES = Path(__file__).parent / "fixtures"
CASE_STUDY = FIXTURES / "case_study"
CORPUS = FIXTURES / "corpus"


def make_submission(scores, sid="paper-1", confidences=None, **extra) -> Submission:
    confidences = confidences or [None] * len(scores)
    reviews = tuple(
        Review(f"Review {i} text. The paper is okay.", s, c) for i, (s, c) in enumerate(zip(scores, confidences), 1)
    )
    return Submission(sid, reviews, **extra)


def opinion(text="ok", conflict=None) -> str:
    body = {"opinion": text}
    if conflict is not None:
        body["conflict"] = conflict
    return json.dumps(body)


def reconstruction(conflict: str) -> str:
    return json.dumps({"key_concepts": "concepts", "opinion": "rethought", "conflict": conflict})


def meta_review_json(decision="accept", sentiments=None, convincingness="Highly Convincing") -> str:
    from cafreview.domain import ASPECTS

    sentiments = sentiments or ["Positive"] * 6
    return json.dumps(
        {
            "aspects": [
                {"aspect": a.value, "opinion": f"{a.value} opinion", "sentiment": s, "convincingness": convincingness}
                for a, s in zip(ASPECTS, sentiments)
            ],
            "final_decision": decision,
        }
    )


@pytest.fixture
def stub_gateway() -> Gateway:
    return Gateway(FunctionBackend(stub_reply))


@pytest.fixture
def case_study_source() -> dict:
    return json.loads((CASE_STUDY / "source.json").read_text(encoding="utf-8"))


def separable_matrix(rows=500, seed=0):
    """Centered 1..10 scores; accepted exactly when the first score is 6 or more."""
    import numpy as np

    from cafreview.bias import DecisionMatrix

    scores = np.random.default_rng(seed).integers(1, 11, size=(rows, 5))
    return DecisionMatrix(scores - 5.5, (scores[:, 0] >= 6).astype(np.int64))


def scripted(responses) -> tuple[Gateway, ScriptedBackend]:
    backend = ScriptedBackend(responses)
    return Gateway(backend), backend


# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict in sorted(CRITERIA, key=lambda c: int(c[0])):
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
