"""Append-only JSON-lines response store.

One line per response: ``{"key", "request", "response", "timestamp"}``. The
same format backs the persistent cache and session recordings, so any cache
file can also be replayed.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from .types import ChatRequest, cache_key, canonical_request

logger = logging.getLogger(__name__)

STORE_FILENAME = "responses.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class StoreReport:
    entries: int
    corrupt: int
    path: str | None


class ResponseStore:
    """Thread-safe key -> response map, optionally persisted to ``path``.

    With ``path=None`` the store lives in memory only. Lines that fail to
    decode are skipped on load and counted in :attr:`corrupt_lines`.
    """

    def __init__(self, path: str | Path | None = None, clock: Callable[[], str] = utc_now) -> None:
        self.path = Path(path) if path is not None else None
        self._clock = clock
        self._lock = threading.Lock()
        self._records: dict[str, dict[str, Any]] = {}
        self.corrupt_lines = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = record["key"]
                    record["response"]["content"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    logger.warning("%s:%d: skipping corrupt store line", self.path, lineno)
                    self.corrupt_lines += 1
                    continue
                # first write wins: later duplicates would only repeat a cached answer
                self._records.setdefault(key, record)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._records

    def get(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            return self._records.get(key)

    def put(self, request: ChatRequest, content: str, usage: dict[str, int] | None = None) -> bool:
        """Store a response; returns False if the key was already present."""
        key = cache_key(request)
        record = {
            "key": key,
            "request": canonical_request(request),
            "response": {"content": content, "usage": usage or {}},
            "timestamp": self._clock(),
        }
        with self._lock:
            if key in self._records:
                return False
            self._records[key] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
                    fh.flush()
        return True

    def verify(self) -> StoreReport:
        """Re-hash every stored request and count entries whose key no longer matches."""
        corrupt = self.corrupt_lines
        with self._lock:
            records = list(self._records.values())
        for record in records:
            try:
                request = ChatRequest.from_payload(record["request"])
                ok = cache_key(request) == record["key"]
            except Exception:  # noqa: BLE001 - any decode problem counts as corruption
                ok = False
            corrupt += not ok
        return StoreReport(entries=len(records), corrupt=corrupt, path=str(self.path) if self.path else None)

    def clear(self) -> None:
        with self._lock:
            self._records.clear()
            self.corrupt_lines = 0
            if self.path is not None and self.path.exists():
                self.path.write_text("", encoding="utf-8")
