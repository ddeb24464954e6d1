"""Chat-completion gateway over a live OpenAI-compatible endpoint or a replay store."""

from __future__ import annotations

import logging
import os
import threading
import time
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from ..errors import AuthMissing, GatewayError, HttpError, NetworkError, ReplayMiss
from .store import STORE_FILENAME, ResponseStore, utc_now
from .types import ChatRequest, ChatResponse, cache_key

logger = logging.getLogger(__name__)

DEFAULT_API_BASE = "https://api.openai.com"
MAX_RETRIES = 3
BACKOFF_SECONDS = (1.0, 2.0, 4.0)
RECORDING_FILENAME = "session.jsonl"


class Backend(Protocol):
    def send(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        """Return (assistant content, token usage) for one request."""


def chat_completions_url(api_base: str) -> str:
    base = api_base.rstrip("/")
    if base.endswith("/chat/completions"):
        return base
    if base.endswith("/v1"):
        return base + "/chat/completions"
    return base + "/v1/chat/completions"


class LiveBackend:
    """POSTs to ``/v1/chat/completions``.

    Network errors, 429 and 5xx are retried ``max_retries`` times with the
    ``backoff`` schedule; any other 4xx fails at once.
    """

    def __init__(
        self,
        api_base: str,
        api_key: str | None,
        *,
        timeout: float = 120.0,
        max_retries: int = MAX_RETRIES,
        backoff: Sequence[float] = BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ) -> None:
        if not api_key:
            raise AuthMissing()
        self.url = chat_completions_url(api_base)
        self._headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self.max_retries = max_retries
        self.backoff = tuple(backoff)
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()
        self.retries = 0

    def _delay(self, attempt: int) -> float:
        return self.backoff[min(attempt, len(self.backoff) - 1)] if self.backoff else 0.0

    def send(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        attempt = 0
        while True:
            try:
                resp = self._client.post(self.url, json=req.to_payload(), headers=self._headers)
            except httpx.TransportError as exc:
                if attempt >= self.max_retries:
                    raise NetworkError(f"{type(exc).__name__}: {exc}") from exc
                logger.warning("network error (%s), retry %d/%d", exc, attempt + 1, self.max_retries)
            else:
                status = resp.status_code
                if status == 200:
                    return _read_completion(resp)
                transient = status == 429 or status >= 500
                if not transient or attempt >= self.max_retries:
                    raise HttpError(status, resp.text)
                logger.warning("HTTP %d, retry %d/%d", status, attempt + 1, self.max_retries)
            self._sleep(self._delay(attempt))
            attempt += 1
            with self._lock:
                self.retries += 1

    def close(self) -> None:
        self._client.close()


def _read_completion(resp: httpx.Response) -> tuple[str, dict[str, int]]:
    try:
        body = resp.json()
        content = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed completion body: {resp.text[:200]}") from exc
    if not isinstance(content, str):
        raise GatewayError("completion content is not a string")
    usage = {k: v for k, v in (body.get("usage") or {}).items() if isinstance(v, int)}
    return content, usage


class ReplayBackend:
    """Closed-world backend: serves only what a recording holds."""

    def __init__(self, store: ResponseStore | str | Path) -> None:
        if not isinstance(store, ResponseStore):
            path = Path(store)
            if path.is_dir():
                path = path / RECORDING_FILENAME
            if not path.exists():
                raise FileNotFoundError(f"recording not found: {path}")
            store = ResponseStore(path)
        self.store = store

    def send(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        key = cache_key(req)
        record = self.store.get(key)
        if record is None:
            raise ReplayMiss(key)
        response = record["response"]
        return response["content"], dict(response.get("usage") or {})


class FunctionBackend:
    """Wraps ``fn(request) -> content``; used for scripted mocks and stubs."""

    def __init__(self, fn: Callable[[ChatRequest], str]) -> None:
        self.fn = fn
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        with self._lock:
            self.requests.append(req)
        return self.fn(req), {}


class ScriptedBackend(FunctionBackend):
    """Returns canned responses in order; raises once the script runs out."""

    def __init__(self, responses: Sequence[str]) -> None:
        self._queue = list(responses)
        super().__init__(self._next)

    def _next(self, req: ChatRequest) -> str:
        if not self._queue:
            raise GatewayError("scripted backend exhausted")
        return self._queue.pop(0)

    @property
    def remaining(self) -> int:
        return len(self._queue)


class SessionRecorder:
    """Appends every response the gateway returns to a replayable store."""

    def __init__(self, directory: str | Path, clock: Callable[[], str] = utc_now) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.store = ResponseStore(self.directory / RECORDING_FILENAME, clock=clock)

    @property
    def path(self) -> Path:
        assert self.store.path is not None
        return self.store.path

    def record(self, req: ChatRequest, content: str, usage: dict[str, int] | None = None) -> None:
        self.store.put(req, content, usage)


def record_session(directory: str | Path, clock: Callable[[], str] = utc_now) -> SessionRecorder:
    return SessionRecorder(directory, clock=clock)


class Gateway:
    """Uniform ``complete`` over a backend, with response cache and optional recorder.

    Cache hits return the stored bytes with ``cached=True`` and never touch
    the backend. Safe to share between threads.
    """

    def __init__(
        self,
        backend: Backend,
        cache: ResponseStore | None = None,
        recorder: SessionRecorder | None = None,
    ) -> None:
        self.backend = backend
        self.cache = cache if cache is not None else ResponseStore()
        self.recorder = recorder
        self._lock = threading.Lock()
        self.calls = 0
        self.cache_hits = 0

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        hit = self.cache.get(key)
        if hit is not None:
            content = hit["response"]["content"]
            usage = dict(hit["response"].get("usage") or {})
            cached = True
        else:
            content, usage = self.backend.send(req)
            self.cache.put(req, content, usage)
            cached = False
        if self.recorder is not None:
            self.recorder.record(req, content, usage)
        with self._lock:
            self.calls += 1
            self.cache_hits += cached
        return ChatResponse(content=content, key=key, cached=cached, usage=usage)


def cache_from_env(cache_dir: str | Path | None = None) -> ResponseStore:
    directory = cache_dir or os.environ.get("CAF_CACHE_DIR")
    if not directory:
        return ResponseStore()
    return ResponseStore(Path(directory) / STORE_FILENAME)


def gateway_from_env(**overrides: str | None) -> Gateway:
    """Live gateway configured from CAF_API_BASE / CAF_API_KEY / CAF_CACHE_DIR."""
    api_base = overrides.get("api_base") or os.environ.get("CAF_API_BASE") or DEFAULT_API_BASE
    api_key = overrides.get("api_key") or os.environ.get("CAF_API_KEY")
    backend = LiveBackend(api_base, api_key)
    return Gateway(backend, cache=cache_from_env(overrides.get("cache_dir")))
