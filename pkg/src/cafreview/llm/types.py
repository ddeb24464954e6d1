from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message must not be empty")

    def to_payload(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        # 0 and 0.0 must hash to the same cache key
        object.__setattr__(self, "temperature", float(self.temperature))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def build(
        cls,
        model: str,
        turns: Iterable[tuple[str, str]],
        temperature: float = 0.0,
        max_tokens: int | None = None,
    ) -> "ChatRequest":
        return cls(model, tuple(ChatMessage(r, c) for r, c in turns), temperature, max_tokens)

    def to_payload(self) -> dict[str, Any]:
        """Body of an OpenAI-compatible ``/v1/chat/completions`` call."""
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [m.to_payload() for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body

    @classmethod
    def from_payload(cls, body: dict[str, Any]) -> "ChatRequest":
        return cls(
            model=body["model"],
            messages=tuple(ChatMessage(m["role"], m["content"]) for m in body["messages"]),
            temperature=float(body.get("temperature", 0.0)),
            max_tokens=body.get("max_tokens"),
        )


def canonical_request(req: ChatRequest) -> dict[str, Any]:
    body = req.to_payload()
    body.setdefault("max_tokens", None)
    return body


def cache_key(req: ChatRequest) -> str:
    """SHA-256 over the canonical JSON of (model, messages, temperature, max_tokens)."""
    blob = json.dumps(canonical_request(req), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    key: str
    cached: bool = False
    usage: dict[str, int] = field(default_factory=dict)
