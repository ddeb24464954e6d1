import hashlib
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cafreview.corpus import (
    PEERSUM,
    annotate_sentiments,
    dump_corpus,
    dumps_corpus,
    label_corpus,
    load_corpus,
    parse_record,
    sample,
)
from cafreview.domain import FIVE_LEVEL, Decision
from cafreview.errors import MalformedRecord, MissingGroundTruth, NTooLarge

from conftest import CORPUS, FIXTURES, make_submission, scripted


def record(**overrides):
    base = {"paper_id": "p1", "reviews": [{"text": "Fine.", "score": 6, "confidence": 3}],
            "meta_review": "Accept it.", "decision": "Accept"}
    base.update(overrides)
    return base


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


def test_load_fixture_corpus():
    corpus = load_corpus(CORPUS / "corpus.jsonl")
    assert len(corpus) == 12
    assert corpus[0].id == "planckian-jitter"
    assert list(corpus[0].scores) == [7, 7, 3]
    assert all(s.ground_truth_sentiments is not None for s in corpus)


def test_bad_score_reports_line_and_field(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [record(), record(paper_id="p2", reviews=[{"text": "x", "score": 11}])])
    with pytest.raises(MalformedRecord) as err:
        load_corpus(path)
    assert (err.value.line, err.value.reason) == (2, "score")


@pytest.mark.parametrize(
    "obj, reason",
    [([], "record is not an object"), (record(paper_id=""), "paper_id"), (record(reviews=[]), "reviews"),
     (record(reviews=[{"text": "  ", "score": 5}]), "text"), (record(reviews=[{"text": "x"}]), "score"),
     (record(reviews=[{"text": "x", "score": 5, "confidence": 9}]), "confidence"),
     (record(decision="Withdrawn"), "decision"),
     (record(ground_truth_sentiments={"Novelty": "Positive"}), "ground_truth_sentiments")],
)
def test_parse_record_names_the_bad_field(obj, reason):
    with pytest.raises(MalformedRecord) as err:
        parse_record(obj, 7)
    assert (err.value.line, err.value.reason) == (7, reason)


def test_invalid_json_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(record()) + "\n\n{oops\n")
    with pytest.raises(MalformedRecord) as err:
        load_corpus(path)
    assert err.value.line == 3


def test_decision_strings_and_optional_ground_truth():
    assert parse_record(record(decision="Accept (Oral)"), 1).ground_truth_decision is Decision.ACCEPT
    assert parse_record(record(decision="reject"), 1).ground_truth_decision is Decision.REJECT
    bare = parse_record({"paper_id": 5, "reviews": [{"text": "t", "score": "6: marginally above"}]}, 1)
    assert (bare.id, bare.scores, bare.ground_truth_meta, bare.ground_truth_decision) == ("5", [6], None, None)


def test_peersum_export_keeps_official_reviews_only():
    corpus = load_corpus(FIXTURES / "peersum_50.jsonl", PEERSUM)
    manifest = json.loads((FIXTURES / "peersum_50.manifest.json").read_text())
    ids = [s.id for s in corpus]
    assert len(corpus) == manifest["count"] == 50
    assert ids == manifest["ids"]
    assert hashlib.sha256("\n".join(ids).encode()).hexdigest() == manifest["ids_sha256"]
    raw = [json.loads(line) for line in (FIXTURES / "peersum_50.jsonl").read_text().splitlines()]
    official = sum(1 for r in raw for rev in r["reviews"] if rev["writer"] == "official_reviewer")
    assert sum(len(s.reviews) for s in corpus) == official < sum(len(r["reviews"]) for r in raw)


def test_sample_pinned_seeds():
    corpus = load_corpus(FIXTURES / "peersum_50.jsonl", PEERSUM)
    assert [s.id for s in sample(corpus, 5, 1)] == [
        "iclr_2022_0008", "iclr_2022_0036", "iclr_2022_0048", "iclr_2022_0004", "iclr_2022_0016"]
    assert sample(corpus, 5, 2)[0].id == "iclr_2022_0003"


@given(st.integers(0, 20), st.integers(0, 2**32))
def test_sample_properties(n, seed):
    corpus = [make_submission([5], sid=f"p{i:02d}") for i in range(20)]
    picked = sample(corpus, n, seed)
    assert len(picked) == n
    assert len({s.id for s in picked}) == n
    assert [s.id for s in picked] == [s.id for s in sample(corpus, n, seed)]


def test_sample_too_large():
    with pytest.raises(NTooLarge):
        sample([make_submission([5])], 2, 0)


def test_round_trip_is_byte_stable(tmp_path):
    text = (CORPUS / "corpus.jsonl").read_text(encoding="utf-8")
    corpus = load_corpus(CORPUS / "corpus.jsonl")
    assert dumps_corpus(corpus) == text
    again = load_corpus(dump_corpus(corpus, tmp_path / "out" / "c.jsonl"))
    assert again == corpus


def test_annotation_uses_the_meta_review(stub_gateway):
    sub = make_submission([5], ground_truth_meta="The paper is not ready; reject.")
    vec = annotate_sentiments(sub, stub_gateway)
    assert len(vec.labels) == 6 and all(label is not None for label in vec.labels)
    with pytest.raises(MissingGroundTruth):
        annotate_sentiments(make_submission([5]), stub_gateway)


def test_annotation_prompt_and_vocabulary():
    answer = json.dumps({"aspects": [{"aspect": a, "sentiment": "Neutral"} for a in
                                     ["Novelty", "Soundness", "Clarity", "Advancement", "Compliance",
                                      "Overall quality"]]})
    gateway, backend = scripted([answer])
    vec = annotate_sentiments(make_submission([5], ground_truth_meta="Meta text."), gateway, vocabulary=FIVE_LEVEL)
    assert vec.labels == ("Neutral",) * 6
    prompt = backend.requests[0].messages[0].content
    assert prompt.split("\n")[1] == "Meta text."


def test_label_corpus_keeps_order(stub_gateway):
    corpus = [make_submission([5], sid=f"p{i}", ground_truth_meta=f"Meta {i}. Some concern.") for i in range(6)]
    serial = label_corpus(corpus, stub_gateway)
    parallel = label_corpus(corpus, stub_gateway, jobs=3)
    assert [s.id for s in parallel] == [s.id for s in corpus]
    assert serial == parallel
