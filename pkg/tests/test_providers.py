from __future__ import annotations

import json
import threading
import time

import pytest

from group3d.errors import ConfigurationError, LoadError, ProviderError
from group3d.providers import (
    API_KEY_ENV,
    GROUPING_PROMPT,
    VOCAB_PROMPT,
    ChatCompletionProvider,
    FixtureProvider,
    HttpResponse,
    grouping_message,
)
from group3d.vocabulary import SceneVocabulary


def ok(text):
    return HttpResponse(200, json.dumps({"choices": [{"message": {"content": text}}]}).encode())


class Script:
    """Transport stub replaying a list of responses or exceptions."""

    def __init__(self, *steps):
        self.steps = list(steps)
        self.calls = []

    def __call__(self, url, body, headers, timeout):
        self.calls.append((url, json.loads(body), headers, timeout))
        step = self.steps.pop(0)
        if isinstance(step, BaseException):
            raise step
        return step


def provider(transport, **kw):
    kw.setdefault("backoff", 0.0)
    return ChatCompletionProvider("http://llm.test/v1/chat", "m", transport=transport, **kw)


def test_fixture_passthrough(tmp_path):
    (tmp_path / "v.txt").write_text("chair, table\nsofa\n")
    (tmp_path / "g.txt").write_text("seat: [chair, sofa]\n")
    fp = FixtureProvider(tmp_path / "v.txt", tmp_path / "g.txt")
    assert fp.request_vocabulary(0) == "chair, table"
    assert fp.request_vocabularies([1, 0]) == ["sofa", "chair, table"]
    assert fp.request_grouping(SceneVocabulary(("chair",))) == "seat: [chair, sofa]\n"


def test_fixture_missing(tmp_path):
    with pytest.raises(LoadError):
        FixtureProvider(tmp_path / "nope.txt").request_vocabulary(0)
    (tmp_path / "v.txt").write_text("chair\n")
    with pytest.raises(LoadError):
        FixtureProvider(tmp_path / "v.txt").request_vocabulary(3)
    with pytest.raises(LoadError):
        FixtureProvider().request_grouping(())


def test_wire_format():
    t = Script(ok("chair, table"))
    p = provider(t, api_key="secret")
    assert p.request_vocabulary("file:///frame0.jpg") == "chair, table"
    url, body, headers, timeout = t.calls[0]
    assert url == "http://llm.test/v1/chat" and timeout == 60.0
    assert body["model"] == "m"
    content = body["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": VOCAB_PROMPT}
    assert content[1]["image_url"]["url"] == "file:///frame0.jpg"
    assert headers["Authorization"] == "Bearer secret"


def test_grouping_message_lists_categories():
    msg = grouping_message(SceneVocabulary(("chair", "sofa")))
    assert msg.startswith(GROUPING_PROMPT) and msg.endswith("# Categories\nchair, sofa\n")
    t = Script(ok("seat: [chair, sofa]"))
    provider(t).request_grouping(SceneVocabulary(("chair", "sofa")))
    sent = t.calls[0][1]["messages"][0]["content"]
    assert len(sent) == 1 and sent[0]["text"] == msg


def test_content_parts_are_joined():
    resp = HttpResponse(200, json.dumps(
        {"choices": [{"message": {"content": [{"type": "text", "text": "a, "}, {"type": "text", "text": "b"}]}}]}
    ).encode())
    assert provider(Script(resp)).complete("x") == "a, b"


def test_5xx_then_success_counts_one_retry():
    t = Script(HttpResponse(503, b""), ok("chair"))
    p = provider(t)
    assert p.request_vocabulary(0) == "chair"
    assert p.retries == 1 and len(t.calls) == 2


def test_timeout_names_the_stage():
    p = provider(Script(TimeoutError(), TimeoutError(), TimeoutError()), timeout=0.5)
    with pytest.raises(ProviderError) as info:
        p.request_grouping(("chair",))
    assert info.value.stage == "grouping"
    assert "timed out" in str(info.value) and str(info.value).startswith("[grouping]")
    assert p.retries == 2


def test_429_and_connection_errors_are_retried():
    p = provider(Script(HttpResponse(429, b""), ConnectionRefusedError("refused"), ok("x")))
    assert p.complete("q") == "x" and p.retries == 2


def test_client_errors_are_not_retried():
    t = Script(HttpResponse(401, b"{}"), ok("never"))
    with pytest.raises(ProviderError, match="HTTP 401"):
        provider(t).request_vocabulary(0)
    assert len(t.calls) == 1


@pytest.mark.parametrize("body", [b"not json", b"{}", b'{"choices": []}', b'{"choices": [{"message": {"content": 3}}]}'])
def test_malformed_bodies(body):
    with pytest.raises(ProviderError, match="malformed") as info:
        provider(Script(HttpResponse(200, body))).request_vocabulary(0)
    assert info.value.stage == "vocabulary"


def test_concurrent_requests_keep_order_and_cap():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def transport(url, body, headers, timeout):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.01)
        ref = json.loads(body)["messages"][0]["content"][1]["image_url"]["url"]
        with lock:
            state["now"] -= 1
        return ok(f"label {ref}")

    p = provider(transport, max_in_flight=3)
    refs = [str(i) for i in range(12)]
    assert p.request_vocabularies(refs) == [f"label {r}" for r in refs]
    assert 1 <= state["peak"] <= 3


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "from-env")
    t = Script(ok("x"))
    provider(t).complete("q")
    assert t.calls[0][2]["Authorization"] == "Bearer from-env"
    monkeypatch.delenv(API_KEY_ENV)
    t = Script(ok("x"))
    provider(t).complete("q")
    assert "Authorization" not in t.calls[0][2]


@pytest.mark.parametrize("kw", [{"timeout": 0}, {"max_retries": -1}, {"max_in_flight": 0}])
def test_config_errors(kw):
    with pytest.raises(ConfigurationError):
        provider(Script(), **kw)
