"""``cafreview`` command line: run, evaluate, bias, label, cache.

Settings resolve as command-line flag, then environment variable, then the
JSON ``--config`` file, then the built-in default. Progress goes to stderr;
summaries and tables go to stdout and files.

Exit codes: 0 success, 1 a record or runtime failure, 2 a configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .bias import (
    build_bias_report,
    fit_anchoring,
    histogram_csv,
    planted_decision_matrix,
    score_distributions,
)
from .corpus import FIELD_MAPS, dump_corpus, label_corpus, load_corpus, sample
from .domain import SentimentVocabulary
from .errors import AuthMissing, CafError, EmptyPsi
from .evaluation import results_table, score_traces
from .llm import Gateway, LiveBackend, ReplayBackend, ResponseStore, SessionRecorder
from .llm.gateway import DEFAULT_API_BASE
from .llm.store import STORE_FILENAME
from .pipeline import (
    DEFAULT_MAX_REFLECTIONS,
    DEFAULT_MODEL,
    METHOD_ORDER,
    Method,
    PipelineConfig,
    load_traces,
    run_corpus,
    write_trace,
)

logger = logging.getLogger("cafreview")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

ENV_KEYS = {"model": "CAF_MODEL", "api_base": "CAF_API_BASE", "cache_dir": "CAF_CACHE_DIR"}

DEFAULTS: dict[str, Any] = {
    "method": Method.CAF.value,
    "model": DEFAULT_MODEL,
    "api_base": DEFAULT_API_BASE,
    "backend": "replay",
    "recording": None,
    "cache_dir": None,
    "corpus": None,
    "out": "results",
    "results": "results",
    "seed": 0,
    "limit": None,
    "max_reflections": DEFAULT_MAX_REFLECTIONS,
    "temperature": 0.0,
    "vocabulary": "4",
    "field_map": "canonical",
    "jobs": 1,
    "keep_going": False,
    "lenient": False,
    "raw_reviews": False,
    "fast_thinking_call": False,
    "faithful_typos": False,
    "n_star": None,
    "lr": 0.05,
    "iters": 2000,
    "loss": "squared",
    "intercept": False,
    "planted": None,
}

# settings that change results; paths and scheduling are left out on purpose
FINGERPRINT_KEYS = (
    "method", "model", "seed", "limit", "max_reflections", "temperature", "vocabulary", "field_map",
    "lenient", "raw_reviews", "fast_thinking_call", "faithful_typos", "n_star", "lr", "iters", "loss",
    "intercept",
)


class ConfigError(CafError):
    pass


@dataclass
class CliConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Any:
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def fingerprint(self) -> str:
        blob = json.dumps({k: self.values.get(k) for k in FINGERPRINT_KEYS}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def vocabulary_obj(self) -> SentimentVocabulary:
        try:
            return SentimentVocabulary.from_spec(str(self.vocabulary))
        except ValueError as exc:
            raise ConfigError(f"bad --vocabulary: {exc}") from exc

    def pipeline_config(self, method: str | None = None) -> PipelineConfig:
        try:
            return PipelineConfig(
                method=Method(method or self.method),
                max_reflections=int(self.max_reflections),
                temperature=float(self.temperature),
                sentiment_vocabulary=self.vocabulary_obj(),
                model=self.model,
                lenient=bool(self.lenient),
                raw_reviews=bool(self.raw_reviews),
                fast_thinking_call=bool(self.fast_thinking_call),
                faithful_typos=bool(self.faithful_typos),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def resolve_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> CliConfig:
    environ = dict(os.environ if environ is None else environ)
    file_values: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        file_values = {k.replace("-", "_"): v for k, v in file_values.items()}
    merged: dict[str, Any] = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in ENV_KEYS and environ.get(ENV_KEYS[key]):
            merged[key] = environ[ENV_KEYS[key]]
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = default
    merged["api_key"] = environ.get("CAF_API_KEY") or file_values.get("api_key")
    return CliConfig(merged)


def build_gateway(cfg: CliConfig) -> Gateway:
    mode = cfg.backend
    if mode == "replay":
        if not cfg.recording:
            raise ConfigError("--backend replay needs --recording")
        try:
            return Gateway(ReplayBackend(cfg.recording))
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from exc
    if mode not in ("live", "record"):
        raise ConfigError(f"unknown backend {mode!r}")
    backend = LiveBackend(cfg.api_base, cfg.api_key)  # AuthMissing without a key
    cache = ResponseStore(Path(cfg.cache_dir) / STORE_FILENAME) if cfg.cache_dir else None
    recorder = None
    if mode == "record":
        if not cfg.recording:
            raise ConfigError("--backend record needs --recording")
        recorder = SessionRecorder(cfg.recording)
    return Gateway(backend, cache=cache, recorder=recorder)


def _load_corpus(cfg: CliConfig):
    if not cfg.corpus:
        raise ConfigError("--corpus is required")
    if not Path(cfg.corpus).is_file():
        raise ConfigError(f"corpus not found: {cfg.corpus}")
    if cfg.field_map not in FIELD_MAPS:
        raise ConfigError(f"unknown field map {cfg.field_map!r}")
    corpus = load_corpus(cfg.corpus, FIELD_MAPS[cfg.field_map], cfg.vocabulary_obj())
    if cfg.limit is not None:
        corpus = sample(corpus, int(cfg.limit), int(cfg.seed))
    return corpus


def _dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cmd_run(cfg: CliConfig) -> int:
    pipeline_cfg = cfg.pipeline_config()
    corpus = _load_corpus(cfg)
    gateway = build_gateway(cfg)
    total = len(corpus)
    done = 0

    def progress(sid: str, exc: Exception | None) -> None:
        nonlocal done
        done += 1
        status = "ok" if exc is None else f"FAILED: {exc}"
        print(f"[{done}/{total}] {sid} {status}", file=sys.stderr)

    result = run_corpus(corpus, pipeline_cfg, gateway, jobs=int(cfg.jobs), keep_going=bool(cfg.keep_going),
                        on_done=progress)
    timings = {}
    for trace in result.traces:
        write_trace(trace, cfg.out)
        timings[trace.submission_id] = round(trace.elapsed, 6)
    timing_path = Path(cfg.out) / "timings" / f"{pipeline_cfg.method.value}.json"
    timing_path.parent.mkdir(parents=True, exist_ok=True)
    timing_path.write_text(_dump_json(timings), encoding="utf-8")
    print(
        f"submissions={len(result.traces)} llm_calls={result.total_calls} "
        f"reflections={result.total_reflections} failed={len(result.failures)}"
    )
    return EXIT_FAILURE if result.failures else EXIT_OK


def _method_dirs(cfg: CliConfig, explicit: bool) -> list[tuple[Method, Path]]:
    root = Path(cfg.results)
    if not root.is_dir():
        raise ConfigError(f"traces directory not found: {root}")
    methods = [Method(cfg.method)] if explicit else list(METHOD_ORDER)
    found = [(m, root / m.value) for m in methods if (root / m.value).is_dir()]
    if not found:
        raise ConfigError(f"no trace directories under {root}")
    return found


def cmd_evaluate(cfg: CliConfig, explicit_method: bool = False) -> int:
    subs = {s.id: s for s in _load_corpus(cfg)}
    traces = [t for _, d in _method_dirs(cfg, explicit_method) for t in load_traces(d)]
    table = results_table(score_traces(traces, subs, strict=not cfg.lenient))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scores.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "scores.json").write_text(table.to_json(), encoding="utf-8")
    sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_bias(cfg: CliConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.planted is not None:
        matrix = planted_decision_matrix(rows=int(cfg.planted), seed=int(cfg.seed))
        fit = fit_anchoring(matrix, lr=float(cfg.lr), iters=int(cfg.iters), loss=cfg.loss,
                            intercept=bool(cfg.intercept))
        report = {
            "anchoring_coefficients": list(fit.coefficients),
            "dominant_position": fit.dominant_position,
            "fit_loss": fit.loss,
            "estimator": fit.estimator,
            "rows": len(matrix),
            "seed": int(cfg.seed),
            "config_fingerprint": cfg.fingerprint(),
        }
        text = _dump_json(report)
        (out / "planted_fit.json").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return EXIT_OK

    corpus = _load_corpus(cfg)
    subs = {s.id: s for s in corpus}
    [(method, directory)] = _method_dirs(cfg, explicit=True)
    traces = load_traces(directory)
    report = build_bias_report(
        traces, subs, cfg.fingerprint(),
        n_star=None if cfg.n_star is None else int(cfg.n_star),
        lr=float(cfg.lr), iters=int(cfg.iters), loss=cfg.loss, intercept=bool(cfg.intercept),
    )
    text = _dump_json(report.to_dict())
    (out / "bias_report.json").write_text(text, encoding="utf-8")
    hists = score_distributions(corpus, traces)
    (out / "histograms.json").write_text(_dump_json(hists), encoding="utf-8")
    (out / "hist_overall.csv").write_text(histogram_csv(hists["overall"]), encoding="utf-8")
    for decision, hist in hists["by_decision"].items():
        (out / f"hist_{decision}.csv").write_text(histogram_csv(hist), encoding="utf-8")
    (out / "hist_score_diff.csv").write_text(histogram_csv(hists["score_diff"]), encoding="utf-8")
    (out / "hist_score_diff_given_reflection.csv").write_text(
        histogram_csv(hists["score_diff_given_reflection"]), encoding="utf-8"
    )
    sys.stdout.write(text)
    return EXIT_OK


def cmd_label(cfg: CliConfig) -> int:
    corpus = _load_corpus(cfg)
    gateway = build_gateway(cfg)
    labelled = label_corpus(corpus, gateway, jobs=int(cfg.jobs), vocabulary=cfg.vocabulary_obj(),
                            model=cfg.model, temperature=float(cfg.temperature), lenient=bool(cfg.lenient))
    out = Path(cfg.out)
    if out.suffix != ".jsonl":
        out = out / "labelled.jsonl"
    dump_corpus(labelled, out)
    print(f"labelled={len(labelled)} path={out}")
    return EXIT_OK


def cmd_cache(cfg: CliConfig, action: str) -> int:
    if not cfg.cache_dir:
        raise ConfigError("cache commands need --cache-dir or CAF_CACHE_DIR")
    store = ResponseStore(Path(cfg.cache_dir) / STORE_FILENAME)
    if action == "clear":
        store.clear()
        print(f"cleared {store.path}")
        return EXIT_OK
    report = store.verify()
    print(f"path={report.path} entries={report.entries} corrupt={report.corrupt}")
    if action == "verify" and report.corrupt:
        return EXIT_FAILURE
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", help="JSON-lines corpus")
    p.add_argument("--field-map", dest="field_map", choices=sorted(FIELD_MAPS))
    p.add_argument("--vocabulary", help='"4", "5" or a comma-separated list of levels')
    p.add_argument("--lenient", action="store_true", default=None)
    p.add_argument("--limit", type=int, help="seeded sample of this many records")
    # also accepted after the subcommand; SUPPRESS keeps a global --seed from being reset
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)


def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("live", "replay", "record"))
    p.add_argument("--recording", help="recorded session directory or JSONL file")
    p.add_argument("--model")
    p.add_argument("--api-base", dest="api_base")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--temperature", type=float)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cafreview", description="Conflict-aware meta-review generation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file with default settings")
    parser.add_argument("--seed", type=int)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="generate meta-reviews and write one trace per record")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--out", help="results directory (traces go to OUT/<method>/)")
    p.add_argument("--max-reflections", dest="max_reflections", type=int)
    p.add_argument("--keep-going", dest="keep_going", action="store_true", default=None)
    p.add_argument("--raw-reviews", dest="raw_reviews", action="store_true", default=None)
    p.add_argument("--fast-thinking-call", dest="fast_thinking_call", action="store_true", default=None)
    p.add_argument("--faithful-typos", dest="faithful_typos", action="store_true", default=None)

    p = sub.add_parser("evaluate", help="score traces against ground truth")
    _add_common(p)
    p.add_argument("--results", help="results directory holding <method>/ trace folders")
    p.add_argument("--method", choices=[m.value for m in Method], help="only this method")
    p.add_argument("--out", help="where scores.csv and scores.json go")

    p = sub.add_parser("bias", help="anchoring and conformity analysis")
    _add_common(p)
    p.add_argument("--results")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--out")
    p.add_argument("--n-star", dest="n_star", type=int, help="panel size used for the anchoring fit")
    p.add_argument("--lr", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--loss", choices=("squared", "mle"))
    p.add_argument("--intercept", action="store_true", default=None)
    p.add_argument("--planted", type=int, metavar="ROWS", help="fit a seeded synthetic corpus instead")

    p = sub.add_parser("label", help="annotate ground-truth sentiments")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--out", help="output .jsonl file or directory")

    p = sub.add_parser("cache", help="inspect or reset the response cache")
    p.add_argument("action", choices=("stats", "verify", "clear"))
    p.add_argument("--cache-dir", dest="cache_dir")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, explicit_method=args.method is not None)
        if args.command == "bias":
            return cmd_bias(cfg)
        if args.command == "label":
            return cmd_label(cfg)
        return cmd_cache(cfg, args.action)
    except (ConfigError, AuthMissing, EmptyPsi) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
