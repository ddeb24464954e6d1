from .gateway import (
    Backend,
    FunctionBackend,
    Gateway,
    LiveBackend,
    ReplayBackend,
    ScriptedBackend,
    SessionRecorder,
    cache_from_env,
    chat_completions_url,
    gateway_from_env,
    record_session,
)
from .store import ResponseStore, StoreReport
from .types import ChatMessage, ChatRequest, ChatResponse, cache_key

__all__ = [
    "Backend",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "FunctionBackend",
    "Gateway",
    "LiveBackend",
    "ReplayBackend",
    "ResponseStore",
    "ScriptedBackend",
    "SessionRecorder",
    "StoreReport",
    "cache_from_env",
    "cache_key",
    "chat_completions_url",
    "gateway_from_env",
    "record_session",
]
