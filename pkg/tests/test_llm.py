import hashlib
import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cafreview.errors import AuthMissing, GatewayError, HttpError, NetworkError, ReplayMiss
from cafreview.llm import (
    ChatRequest,
    FunctionBackend,
    Gateway,
    LiveBackend,
    ReplayBackend,
    ResponseStore,
    ScriptedBackend,
    SessionRecorder,
    cache_from_env,
    cache_key,
    chat_completions_url,
)


def req(text="hello", **kw) -> ChatRequest:
    return ChatRequest.build(kw.pop("model", "m"), [("user", text)], **kw)


def test_cache_key_is_sha256_of_canonical_json():
    r = req("hi", temperature=0)
    blob = json.dumps(
        {"model": "m", "messages": [{"role": "user", "content": "hi"}], "temperature": 0.0, "max_tokens": None},
        sort_keys=True, separators=(",", ":"),
    )
    assert cache_key(r) == hashlib.sha256(blob.encode()).hexdigest()


def test_cache_key_ignores_int_float_temperature_difference():
    assert cache_key(req(temperature=0)) == cache_key(req(temperature=0.0))


def test_cache_key_sensitive_to_each_field():
    base = cache_key(req())
    assert cache_key(req(model="other")) != base
    assert cache_key(req("hello!")) != base
    assert cache_key(req(temperature=0.7)) != base
    assert cache_key(req(max_tokens=100)) != base


@given(st.text(min_size=1), st.floats(min_value=0, max_value=2, allow_nan=False))
def test_cache_key_survives_payload_round_trip(text, temperature):
    r = req(text, temperature=temperature)
    assert cache_key(ChatRequest.from_payload(json.loads(json.dumps(r.to_payload())))) == cache_key(r)


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("m", ())
    with pytest.raises(ValueError):
        req(temperature=-1)
    with pytest.raises(ValueError):
        ChatRequest.build("m", [("robot", "x")])


def test_store_persists_and_reloads(tmp_path):
    path = tmp_path / "store.jsonl"
    store = ResponseStore(path, clock=lambda: "T")
    assert store.put(req(), "answer", {"total_tokens": 3})
    assert not store.put(req(), "other")
    reloaded = ResponseStore(path)
    record = reloaded.get(cache_key(req()))
    assert record["response"] == {"content": "answer", "usage": {"total_tokens": 3}}
    assert record["timestamp"] == "T"
    assert set(record) == {"key", "request", "response", "timestamp"}


def test_store_skips_corrupt_lines_and_verify_counts_them(tmp_path):
    path = tmp_path / "store.jsonl"
    ResponseStore(path).put(req(), "answer")
    with path.open("a") as fh:
        fh.write("{not json\n")
        bad = {"key": "0" * 64, "request": req("x").to_payload(), "response": {"content": "y"}, "timestamp": "t"}
        fh.write(json.dumps(bad) + "\n")
    store = ResponseStore(path)
    assert store.corrupt_lines == 1
    report = store.verify()
    assert (report.entries, report.corrupt) == (2, 2)


def test_store_clear_then_verify_is_empty(tmp_path):
    path = tmp_path / "store.jsonl"
    store = ResponseStore(path)
    store.put(req(), "a")
    store.clear()
    assert ResponseStore(path).verify().entries == 0


def test_gateway_serves_cache_hits_without_backend():
    backend = FunctionBackend(lambda r: "fresh")
    gateway = Gateway(backend)
    first = gateway.complete(req())
    second = gateway.complete(req())
    assert (first.cached, second.cached) == (False, True)
    assert first.content == second.content == "fresh"
    assert len(backend.requests) == 1
    assert (gateway.calls, gateway.cache_hits) == (2, 1)


def test_replay_backend_misses_unknown_requests(tmp_path):
    store = ResponseStore(tmp_path / "s.jsonl")
    store.put(req("known"), "yes")
    gateway = Gateway(ReplayBackend(tmp_path / "s.jsonl"))
    assert gateway.complete(req("known")).content == "yes"
    with pytest.raises(ReplayMiss) as err:
        gateway.complete(req("unknown"))
    assert err.value.digest == cache_key(req("unknown"))


def test_recorder_output_replays(tmp_path):
    recorder = SessionRecorder(tmp_path, clock=lambda: "T")
    Gateway(ScriptedBackend(["one", "two"]), recorder=recorder).complete(req("a"))
    Gateway(ScriptedBackend(["two"]), recorder=recorder).complete(req("b"))
    replay = Gateway(ReplayBackend(tmp_path))
    assert replay.complete(req("a")).content == "one"
    assert replay.complete(req("b")).content == "two"


def test_scripted_backend_runs_out():
    gateway = Gateway(ScriptedBackend(["only"]))
    gateway.complete(req("1"))
    with pytest.raises(GatewayError):
        gateway.complete(req("2"))


@pytest.mark.parametrize(
    "base, url",
    [("https://api.example.com", "https://api.example.com/v1/chat/completions"),
     ("https://api.example.com/v1/", "https://api.example.com/v1/chat/completions"),
     ("http://localhost:8000/v1/chat/completions", "http://localhost:8000/v1/chat/completions")],
)
def test_chat_completions_url(base, url):
    assert chat_completions_url(base) == url


def completion(content="ok"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}],
                                     "usage": {"total_tokens": 7}})


def live(handler, **kw):
    sleeps = []
    backend = LiveBackend("https://api.test", "sk-test", client=httpx.Client(transport=httpx.MockTransport(handler)),
                          sleep=sleeps.append, **kw)
    return backend, sleeps


def test_live_backend_posts_openai_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return completion("hi there")

    backend, _ = live(handler)
    content, usage = backend.send(req("q", temperature=0.5))
    assert content == "hi there" and usage == {"total_tokens": 7}
    assert seen["url"] == "https://api.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"] == {"model": "m", "messages": [{"role": "user", "content": "q"}], "temperature": 0.5}


@pytest.mark.parametrize("failure", [429, 500, 503, "network"])
def test_live_backend_retries_transient_failures(failure):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            if failure == "network":
                raise httpx.ConnectError("down", request=request)
            return httpx.Response(failure, text="busy")
        return completion()

    backend, sleeps = live(handler)
    assert backend.send(req())[0] == "ok"
    assert sleeps == [1.0, 2.0]
    assert backend.retries == 2


def test_live_backend_gives_up_after_three_retries():
    backend, sleeps = live(lambda r: httpx.Response(500, text="boom"))
    with pytest.raises(HttpError) as err:
        backend.send(req())
    assert err.value.status == 500
    assert sleeps == [1.0, 2.0, 4.0]


def test_live_backend_network_failure_is_network_error():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    backend, sleeps = live(handler)
    with pytest.raises(NetworkError):
        backend.send(req())
    assert len(sleeps) == 3


@pytest.mark.parametrize("status", [400, 401, 404])
def test_live_backend_other_4xx_is_terminal(status):
    backend, sleeps = live(lambda r: httpx.Response(status, text="nope"))
    with pytest.raises(HttpError):
        backend.send(req())
    assert sleeps == []


def test_live_backend_requires_key():
    with pytest.raises(AuthMissing) as err:
        LiveBackend("https://api.test", "")
    assert "AuthMissing" in str(err.value)


def test_cache_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CAF_CACHE_DIR", str(tmp_path))
    store = cache_from_env()
    store.put(req(), "x")
    assert (tmp_path / "responses.jsonl").exists()
