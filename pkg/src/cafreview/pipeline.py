"""Meta-review generation strategies over one submission.

``run_caf`` is the conflict-aware dual-process pipeline; ``run_naive``,
``run_increm``, ``run_selfcot`` and ``run_scf`` are the prompting baselines.
Every strategy returns the parsed :class:`MetaReviewOutput` and a
:class:`RunTrace` describing each gateway call.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .domain import (
    DEFAULT_VOCABULARY,
    CognitiveState,
    MetaReviewOutput,
    SentimentVocabulary,
    Submission,
    validate_submission,
)
from .errors import CafError, PipelineError, UnparseableResponse
from .llm import ChatRequest, Gateway
from .prompts import (
    REASK_SUFFIX,
    ParsedResponse,
    ResponseKind,
    TemplateName,
    format_input_documents,
    json_format,
    load_template,
    ordinal,
    parse_structured,
    render,
    review_bindings,
)

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o"
DEFAULT_MAX_REFLECTIONS = 5


class Method(str, enum.Enum):
    CAF = "caf"
    NAIVE = "naive"
    INCREM = "increm"
    SELFCOT = "selfcot"
    SCF = "scf"


# column order of the results table
METHOD_ORDER = (Method.NAIVE, Method.INCREM, Method.SELFCOT, Method.SCF, Method.CAF)


@dataclass(frozen=True)
class PipelineConfig:
    method: Method = Method.CAF
    max_reflections: int = DEFAULT_MAX_REFLECTIONS
    temperature: float = 0.0
    sentiment_vocabulary: SentimentVocabulary = DEFAULT_VOCABULARY
    model: str = DEFAULT_MODEL
    max_tokens: int | None = None
    lenient: bool = False
    # feed raw review text to the integration prompts and skip extraction
    raw_reviews: bool = False
    # issue an explicit integration call after each review's reflection loop
    fast_thinking_call: bool = False
    # keep the stray "pleasea aaa" of the published final-result prompt
    faithful_typos: bool = False
    reask: bool = True
    system_prompt: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.max_reflections < 1:
            raise ValueError("max_reflections must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["method"] = self.method.value
        out["sentiment_vocabulary"] = list(self.sentiment_vocabulary.labels)
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LlmCall:
    template: str
    key: str
    response_length: int
    review_index: int | None = None


@dataclass(frozen=True)
class RunTrace:
    submission_id: str
    method: Method
    llm_calls: tuple[LlmCall, ...]
    reflections_per_review: tuple[int, ...]
    conflict_flags: tuple[bool, ...]
    score_max_diff: int
    output: MetaReviewOutput
    transcript: tuple[tuple[str, str], ...] = ()
    model: str = ""
    config_fingerprint: str = ""
    elapsed: float = 0.0

    @property
    def reflection_count_total(self) -> int:
        return sum(self.reflections_per_review)

    def to_dict(self, include_elapsed: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "submission_id": self.submission_id,
            "method": self.method.value,
            "model": self.model,
            "config_fingerprint": self.config_fingerprint,
            "llm_calls": [asdict(c) for c in self.llm_calls],
            "reflections_per_review": list(self.reflections_per_review),
            "reflection_count_total": self.reflection_count_total,
            "conflict_flags": list(self.conflict_flags),
            "score_max_diff": self.score_max_diff,
            "transcript": [{"role": r, "content": c} for r, c in self.transcript],
            "output": self.output.to_dict(),
        }
        if include_elapsed:
            out["elapsed"] = self.elapsed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunTrace":
        return cls(
            submission_id=data["submission_id"],
            method=Method(data["method"]),
            llm_calls=tuple(LlmCall(**c) for c in data["llm_calls"]),
            reflections_per_review=tuple(data["reflections_per_review"]),
            conflict_flags=tuple(data["conflict_flags"]),
            score_max_diff=data["score_max_diff"],
            output=MetaReviewOutput.from_dict(data["output"]),
            transcript=tuple((t["role"], t["content"]) for t in data.get("transcript", [])),
            model=data.get("model", ""),
            config_fingerprint=data.get("config_fingerprint", ""),
            elapsed=data.get("elapsed", 0.0),
        )


class PromptCaller:
    """Issues gateway calls for one run and keeps the call log."""

    def __init__(self, gateway: Gateway, cfg: PipelineConfig) -> None:
        self.gateway = gateway
        self.cfg = cfg
        self.calls: list[LlmCall] = []

    def _complete(self, template: TemplateName, turns: list[tuple[str, str]], phase: str,
                  index: int | None) -> str:
        req = ChatRequest.build(self.cfg.model, turns, self.cfg.temperature, self.cfg.max_tokens)
        try:
            resp = self.gateway.complete(req)
        except CafError as exc:
            raise PipelineError(phase, index, exc) from exc
        self.calls.append(LlmCall(template.value, resp.key, len(resp.content), index))
        return resp.content

    def _parse(self, raw: str, kind: ResponseKind, index: int | None) -> ParsedResponse:
        return parse_structured(
            raw,
            kind,
            vocabulary=self.cfg.sentiment_vocabulary,
            lenient=self.cfg.lenient,
            review_index=index or 1,
        )

    def ask(
        self,
        template: TemplateName,
        prompt: str,
        kind: ResponseKind,
        history: Sequence[tuple[str, str]],
        phase: str,
        index: int | None = None,
    ) -> tuple[str, str, ParsedResponse]:
        """Send ``prompt`` after ``history``; returns (user message sent, raw answer, parsed)."""
        head = [("system", self.cfg.system_prompt)] if self.cfg.system_prompt else []
        raw = self._complete(template, head + list(history) + [("user", prompt)], phase, index)
        try:
            return prompt, raw, self._parse(raw, kind, index)
        except UnparseableResponse as exc:
            if not self.cfg.reask:
                raise PipelineError(phase, index, exc) from exc
            logger.info("%s: unparseable answer, asking once more", phase)
        except CafError as exc:
            raise PipelineError(phase, index, exc) from exc
        prompt = f"{prompt}\n{REASK_SUFFIX}"
        raw = self._complete(template, head + list(history) + [("user", prompt)], phase, index)
        try:
            return prompt, raw, self._parse(raw, kind, index)
        except CafError as exc:
            raise PipelineError(phase, index, exc) from exc


def _template(name: TemplateName, cfg: PipelineConfig):
    return load_template(name, faithful_typos=cfg.faithful_typos)


def _trace(
    s: Submission,
    cfg: PipelineConfig,
    caller: PromptCaller,
    output: MetaReviewOutput,
    transcript: Sequence[tuple[str, str]],
    started: float,
    reflections: Sequence[int] | None = None,
    flags: Sequence[bool] | None = None,
) -> RunTrace:
    n = len(s.reviews)
    return RunTrace(
        submission_id=s.id,
        method=cfg.method,
        llm_calls=tuple(caller.calls),
        # the baselines have no conflict machinery: nothing flagged, nothing reflected
        reflections_per_review=tuple(reflections if reflections is not None else [0] * n),
        conflict_flags=tuple(flags if flags is not None else [False] * max(n - 1, 0)),
        score_max_diff=s.score_spread,
        output=output,
        transcript=tuple(transcript),
        model=cfg.model,
        config_fingerprint=cfg.fingerprint(),
        elapsed=time.perf_counter() - started,
    )


def _require_method(cfg: PipelineConfig, method: Method) -> None:
    if cfg.method is not method:
        raise ValueError(f"config is for {cfg.method.value}, not {method.value}")


def run_caf(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    """Conflict-aware incremental integration with bounded reconstruction.

    Call sequence: one extraction per review, one first-review call, then for
    each later review a conflict-detection call followed by up to
    ``max_reflections`` reconstruction calls while a conflict is reported,
    and finally one synthesis call. Without retries that is
    ``2N + 1 + sum(reflections)`` calls.
    """
    _require_method(cfg, Method.CAF)
    validate_submission(s)
    started = time.perf_counter()
    caller = PromptCaller(gateway, cfg)
    reviews = s.reviews
    n = len(reviews)

    if cfg.raw_reviews:
        contents = [r.text for r in reviews]
    else:
        contents = []
        extraction = _template(TemplateName.EXTRACTION, cfg)
        for i, review in enumerate(reviews, start=1):
            prompt = render(extraction, {"review_content": review.text})
            # extraction calls are independent single-turn requests
            _, _, parsed = caller.ask(TemplateName.EXTRACTION, prompt, ResponseKind.KEY_POINTS, (),
                                      "extraction", i)
            contents.append(parsed.payload.raw_text)

    state = CognitiveState()
    prompt = render(_template(TemplateName.FIRST_REVIEW, cfg), review_bindings(reviews[0], contents[0]))
    user, raw, parsed = caller.ask(TemplateName.FIRST_REVIEW, prompt, ResponseKind.OPINION, state.transcript,
                                   "first_review", 1)
    state = state.exchange(user, raw, step=1, opinion=parsed.payload.opinion, reflection_counts_per_step=(0,))

    flags: list[bool] = []
    detect = _template(TemplateName.SUBSEQUENT_REVIEW, cfg)
    rethink = _template(TemplateName.COGNITIVE_RECONSTRUCTION, cfg)
    for i in range(2, n + 1):
        review = reviews[i - 1]
        prompt = render(detect, {"order": ordinal(i), **review_bindings(review, contents[i - 1])})
        user, raw, parsed = caller.ask(TemplateName.SUBSEQUENT_REVIEW, prompt, ResponseKind.OPINION_WITH_CONFLICT,
                                       state.transcript, "conflict_detection", i)
        conflict = bool(parsed.payload.conflict)
        flags.append(conflict)
        state = state.exchange(user, raw, opinion=parsed.payload.opinion, conflict_pending=conflict)

        # slow thinking: the loop guard re-reads the conflict the model reports
        # after each reconstruction
        attempts = 0
        while conflict and attempts < cfg.max_reflections:
            user, raw, parsed = caller.ask(TemplateName.COGNITIVE_RECONSTRUCTION, render(rethink, {}),
                                           ResponseKind.RECONSTRUCTION, state.transcript, "reconstruction", i)
            rec = parsed.payload
            conflict = rec.conflict
            attempts += 1
            state = state.exchange(user, raw, opinion=rec.opinion, key_points=rec.key_concepts,
                                   conflict_pending=conflict)

        # fast thinking is the transcript absorbing the answers above; the
        # explicit call exists only as an ablation switch
        if cfg.fast_thinking_call:
            user, raw, parsed = caller.ask(TemplateName.FAST_INTEGRATION,
                                           render(_template(TemplateName.FAST_INTEGRATION, cfg), {}),
                                           ResponseKind.OPINION, state.transcript, "fast_integration", i)
            state = state.exchange(user, raw, opinion=parsed.payload.opinion)

        state = replace(
            state,
            step=i,
            reflection_count_total=state.reflection_count_total + attempts,
            reflection_counts_per_step=state.reflection_counts_per_step + (attempts,),
        )

    prompt = render(_template(TemplateName.FINAL_RESULT, cfg), {"json_format": json_format()})
    user, raw, parsed = caller.ask(TemplateName.FINAL_RESULT, prompt, ResponseKind.FINAL_META_REVIEW,
                                   state.transcript, "final_synthesis")
    state = state.exchange(user, raw)
    output: MetaReviewOutput = parsed.payload
    trace = _trace(s, cfg, caller, output, state.transcript, started,
                   reflections=state.reflection_counts_per_step, flags=flags)
    return output, trace


def run_naive(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    """All reviews in one prompt, one call."""
    _require_method(cfg, Method.NAIVE)
    validate_submission(s)
    started = time.perf_counter()
    caller = PromptCaller(gateway, cfg)
    prompt = render(
        _template(TemplateName.NAIVE, cfg),
        {"input_documents": format_input_documents(s.reviews), "json_format": json_format()},
    )
    user, raw, parsed = caller.ask(TemplateName.NAIVE, prompt, ResponseKind.FINAL_META_REVIEW, (), "naive")
    return parsed.payload, _trace(s, cfg, caller, parsed.payload, [("user", user), ("assistant", raw)], started)


def run_increm(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    """One opinion call per review in a running chat, then one generation call."""
    _require_method(cfg, Method.INCREM)
    validate_submission(s)
    started = time.perf_counter()
    caller = PromptCaller(gateway, cfg)
    step = _template(TemplateName.INCREM_STEP, cfg)
    transcript: list[tuple[str, str]] = []
    for i, review in enumerate(s.reviews, start=1):
        prompt = render(step, {"order": ordinal(i), **review_bindings(review)})
        user, raw, _ = caller.ask(TemplateName.INCREM_STEP, prompt, ResponseKind.OPINION, transcript,
                                  "increm_step", i)
        transcript += [("user", user), ("assistant", raw)]
    prompt = render(_template(TemplateName.INCREM_FINAL, cfg), {"json_format": json_format()})
    user, raw, parsed = caller.ask(TemplateName.INCREM_FINAL, prompt, ResponseKind.FINAL_META_REVIEW, transcript,
                                   "increm_final")
    transcript += [("user", user), ("assistant", raw)]
    return parsed.payload, _trace(s, cfg, caller, parsed.payload, transcript, started)


def run_selfcot(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    """Ask for the writing steps, then for a meta-review following them."""
    _require_method(cfg, Method.SELFCOT)
    validate_submission(s)
    started = time.perf_counter()
    caller = PromptCaller(gateway, cfg)
    docs = format_input_documents(s.reviews)
    prompt = render(_template(TemplateName.SELFCOT_STEPS, cfg), {"input_documents": docs})
    user1, steps, _ = caller.ask(TemplateName.SELFCOT_STEPS, prompt, ResponseKind.FREE_TEXT, (), "selfcot_steps")
    prompt = render(
        _template(TemplateName.SELFCOT_GENERATE, cfg),
        {"input_documents": docs, "generated_steps": steps, "json_format": json_format()},
    )
    user2, raw, parsed = caller.ask(TemplateName.SELFCOT_GENERATE, prompt, ResponseKind.FINAL_META_REVIEW, (),
                                    "selfcot_generate")
    transcript = [("user", user1), ("assistant", steps), ("user", user2), ("assistant", raw)]
    return parsed.payload, _trace(s, cfg, caller, parsed.payload, transcript, started)


def run_scf(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    """One call carrying the five sentiment-aware generation steps."""
    _require_method(cfg, Method.SCF)
    validate_submission(s)
    started = time.perf_counter()
    caller = PromptCaller(gateway, cfg)
    prompt = render(
        _template(TemplateName.SCF, cfg),
        {"input_documents": format_input_documents(s.reviews), "json_format": json_format()},
    )
    user, raw, parsed = caller.ask(TemplateName.SCF, prompt, ResponseKind.FINAL_META_REVIEW, (), "scf")
    return parsed.payload, _trace(s, cfg, caller, parsed.payload, [("user", user), ("assistant", raw)], started)


RUNNERS: dict[Method, Callable[[Submission, PipelineConfig, Gateway], tuple[MetaReviewOutput, RunTrace]]] = {
    Method.CAF: run_caf,
    Method.NAIVE: run_naive,
    Method.INCREM: run_increm,
    Method.SELFCOT: run_selfcot,
    Method.SCF: run_scf,
}


def run(s: Submission, cfg: PipelineConfig, gateway: Gateway) -> tuple[MetaReviewOutput, RunTrace]:
    return RUNNERS[cfg.method](s, cfg, gateway)


@dataclass
class CorpusRun:
    traces: list[RunTrace] = field(default_factory=list)
    failures: list[tuple[str, Exception]] = field(default_factory=list)

    @property
    def total_calls(self) -> int:
        return sum(len(t.llm_calls) for t in self.traces)

    @property
    def total_reflections(self) -> int:
        return sum(t.reflection_count_total for t in self.traces)


def run_corpus(
    corpus: Iterable[Submission],
    cfg: PipelineConfig,
    gateway: Gateway,
    jobs: int = 1,
    keep_going: bool = False,
    on_done: Callable[[str, Exception | None], None] | None = None,
) -> CorpusRun:
    """Run one method over many submissions.

    Each submission is an isolated run; only the gateway (and its cache) is
    shared. Results come back sorted by submission id whatever the scheduling.
    Without ``keep_going`` the first failure is re-raised.
    """
    result = CorpusRun()

    def handle(sid: str, trace: RunTrace | None, exc: Exception | None) -> None:
        if exc is None:
            assert trace is not None
            result.traces.append(trace)
        else:
            if not keep_going:
                raise exc
            logger.error("%s: %s", sid, exc)
            result.failures.append((sid, exc))
        if on_done is not None:
            on_done(sid, exc)

    subs = list(corpus)
    if jobs <= 1:
        for s in subs:
            try:
                _, trace = run(s, cfg, gateway)
            except CafError as exc:
                handle(s.id, None, exc)
            else:
                handle(s.id, trace, None)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run, s, cfg, gateway): s.id for s in subs}
            try:
                for fut in as_completed(futures):
                    sid = futures[fut]
                    try:
                        _, trace = fut.result()
                    except CafError as exc:
                        handle(sid, None, exc)
                    else:
                        handle(sid, trace, None)
            except CafError:
                for f in futures:
                    f.cancel()
                raise
    result.traces.sort(key=lambda t: t.submission_id)
    result.failures.sort(key=lambda f: f[0])
    return result


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def trace_path(results_dir: str | Path, method: Method | str, submission_id: str) -> Path:
    return Path(results_dir) / Method(method).value / f"{_UNSAFE.sub('_', submission_id)}.json"


def write_trace(trace: RunTrace, results_dir: str | Path) -> Path:
    path = trace_path(results_dir, trace.method, trace.submission_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trace.to_json(), encoding="utf-8")
    return path


def load_traces(directory: str | Path) -> list[RunTrace]:
    """All ``*.json`` traces in one method directory, sorted by submission id."""
    traces = [RunTrace.from_dict(json.loads(p.read_text(encoding="utf-8")))
              for p in sorted(Path(directory).glob("*.json"))]
    return sorted(traces, key=lambda t: t.submission_id)
