"""Regenerate the recorded sessions and golden files under tests/fixtures.

    python3 tests/fixtures/build_fixtures.py

Everything is deterministic: the stub model is a pure function of the
request, the recorder clock is frozen and synthetic records come from a
seeded generator. Re-running must leave ``git status`` clean.
"""

from __future__ import annotations

import hashlib
import json
import random
import shutil
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from stub_model import stub_reply  # noqa: E402

from cafreview.bias import histogram_csv, score_distributions  # noqa: E402
from cafreview.corpus import PEERSUM, dump_corpus, label_corpus, load_corpus  # noqa: E402
from cafreview.domain import FIVE_LEVEL, Decision, Review, Submission  # noqa: E402
from cafreview.evaluation import results_table, score_traces  # noqa: E402
from cafreview.llm import FunctionBackend, Gateway, ScriptedBackend, SessionRecorder  # noqa: E402
from cafreview.pipeline import METHOD_ORDER, Method, PipelineConfig, run, run_corpus, write_trace  # noqa: E402

FROZEN_CLOCK = "2024-01-01T00:00:00+00:00"
CASE_STUDY = HERE / "case_study"
CORPUS = HERE / "corpus"


def frozen() -> str:
    return FROZEN_CLOCK


def _reset(path: Path) -> None:
    if path.exists():
        shutil.rmtree(path) if path.is_dir() else path.unlink()


def case_study_submission() -> Submission:
    src = json.loads((CASE_STUDY / "source.json").read_text(encoding="utf-8"))
    return Submission(
        src["paper_id"],
        tuple(Review(r["text"], r["score"], r["confidence"]) for r in src["reviews"]),
        src["meta_review"],
        Decision.parse(src["decision"]),
    )


def case_study_caf_script(src: dict) -> list[str]:
    caf = src["caf"]
    answers = list(caf["extractions"])
    answers.append(json.dumps(caf["first_review"], ensure_ascii=False, indent=4))
    answers += [json.dumps(x, ensure_ascii=False, indent=4) for x in caf["subsequent"][:1]]
    answers += [json.dumps(caf["subsequent"][1], ensure_ascii=False, indent=4)]
    answers += [json.dumps(x, ensure_ascii=False, indent=4) for x in caf["reconstruction"]]
    answers.append(json.dumps(caf["final"], ensure_ascii=False, indent=4))
    return answers


CASE_STUDY_CAF = PipelineConfig(method=Method.CAF)
# the published naive answer uses "neutral" and "high"/"medium"
CASE_STUDY_NAIVE = PipelineConfig(method=Method.NAIVE, sentiment_vocabulary=FIVE_LEVEL, lenient=True)


def build_case_study() -> None:
    src = json.loads((CASE_STUDY / "source.json").read_text(encoding="utf-8"))
    session = CASE_STUDY / "session.jsonl"
    golden = CASE_STUDY / "golden"
    _reset(session)
    _reset(golden)
    recorder = SessionRecorder(CASE_STUDY, clock=frozen)
    s = case_study_submission()

    labelled = label_corpus([s], Gateway(FunctionBackend(stub_reply), recorder=recorder))[0]
    dump_corpus([labelled], CASE_STUDY / "record.jsonl")

    caf = Gateway(ScriptedBackend(case_study_caf_script(src)), recorder=recorder)
    _, trace = run(labelled, CASE_STUDY_CAF, caf)
    write_trace(trace, golden)

    naive = Gateway(ScriptedBackend([json.dumps(src["naive"]["final"], ensure_ascii=False, indent=4)]),
                    recorder=recorder)
    _, trace = run(labelled, CASE_STUDY_NAIVE, naive)
    write_trace(trace, golden)


SENTENCES = [
    "The method is clearly motivated and the writing is easy to follow.",
    "Experiments cover several benchmarks and the gains are consistent.",
    "The novelty over prior work is limited and the related work is thin.",
    "Ablations are missing, so it is hard to tell which component matters.",
    "The theoretical analysis is sound but relies on strong assumptions.",
    "Results on the largest dataset are not convincing.",
    "The code release and reproducibility details are appreciated.",
    "Some claims in the introduction are overstated.",
    "The proposed regularizer is simple and appears broadly applicable.",
    "Baselines are outdated and the comparison may be unfair.",
]


def synthetic_records(count: int, seed: int) -> list[Submission]:
    rng = random.Random(seed)
    out = []
    for i in range(count):
        scores = [rng.choice([1, 3, 3, 5, 5, 6, 6, 6, 8, 8, 8, 10]) for _ in range(3)]
        reviews = tuple(
            Review(" ".join(rng.sample(SENTENCES, 3)), sc, rng.randint(1, 5)) for sc in scores
        )
        accept = sum(scores) / 3 + rng.uniform(-1.5, 1.5) >= 6
        verdict = "The paper is recommended for acceptance." if accept else "The paper is not ready and is rejected."
        meta = f"{rng.choice(SENTENCES)} {rng.choice(SENTENCES)} {verdict}"
        out.append(Submission(f"synth-{i:03d}", reviews, meta, Decision.from_bool(accept)))
    return out


def build_corpus() -> None:
    _reset(CORPUS)
    CORPUS.mkdir(parents=True)
    raw = [case_study_submission(), *synthetic_records(11, seed=7)]
    dump_corpus(raw, CORPUS / "raw.jsonl")
    recorder = SessionRecorder(CORPUS, clock=frozen)
    gateway = Gateway(FunctionBackend(stub_reply), recorder=recorder)
    labelled = label_corpus(raw, gateway)
    dump_corpus(labelled, CORPUS / "corpus.jsonl")

    results = CORPUS / "golden" / "results"
    traces = []
    for method in METHOD_ORDER:
        run_result = run_corpus(labelled, PipelineConfig(method=method), gateway)
        for trace in run_result.traces:
            write_trace(trace, results)
        traces += run_result.traces

    subs = {s.id: s for s in labelled}
    table = results_table(score_traces(traces, subs))
    (CORPUS / "golden" / "scores.csv").write_text(table.to_csv(), encoding="utf-8")
    (CORPUS / "golden" / "scores.json").write_text(table.to_json(), encoding="utf-8")

    caf = [t for t in traces if t.method is Method.CAF]
    hists = score_distributions(labelled, caf)
    (CORPUS / "golden" / "histograms.json").write_text(
        json.dumps(hists, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (CORPUS / "golden" / "hist_overall.csv").write_text(histogram_csv(hists["overall"]), encoding="utf-8")


def peersum_record(rng: random.Random, i: int) -> dict:
    reviews = []
    for j in range(rng.randint(3, 5)):
        rating = rng.randint(1, 10)
        reviews.append({"review_id": f"r{i}-{j}", "writer": "official_reviewer", "comment": " ".join(rng.sample(SENTENCES, 2)),
                        "rating": rating, "confidence": rng.randint(1, 5), "reply_to": f"paper{i}"})
    # rebuttals and public comments carry no rating and must be dropped
    reviews.insert(rng.randint(0, len(reviews)), {"review_id": f"a{i}", "writer": "author",
                                                  "comment": "We thank the reviewers.", "rating": -1,
                                                  "confidence": -1, "reply_to": f"r{i}-0"})
    reviews.append({"review_id": f"p{i}", "writer": "public", "comment": "Interesting work.", "rating": -1,
                    "confidence": -1, "reply_to": f"paper{i}"})
    mean = sum(r["rating"] for r in reviews if r["writer"] == "official_reviewer") / sum(
        r["writer"] == "official_reviewer" for r in reviews)
    return {
        "paper_id": f"iclr_2022_{i:04d}",
        "paper_title": f"Synthetic submission {i}",
        "paper_abstract": "Abstract text.",
        "paper_acceptance": rng.choice(["Accept (Poster)", "Accept (Spotlight)"]) if mean >= 6 else "Reject",
        "meta_review": f"{rng.choice(SENTENCES)} {rng.choice(SENTENCES)}",
        "reviews": reviews,
    }


def build_peersum() -> None:
    rng = random.Random(2024)
    path = HERE / "peersum_50.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for i in range(50):
            fh.write(json.dumps(peersum_record(rng, i)) + "\n")
    ids = [s.id for s in load_corpus(path, PEERSUM)]
    manifest = {"count": len(ids), "ids": ids, "ids_sha256": hashlib.sha256("\n".join(ids).encode()).hexdigest()}
    (HERE / "peersum_50.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    build_case_study()
    build_corpus()
    build_peersum()
    print("fixtures rebuilt")
